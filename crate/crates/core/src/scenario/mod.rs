//! Config-driven experiments: a trap, an ion ensemble, cooling and heating
//! settings, reaction channels and a timed schedule, run to deterministic
//! files listed in a checksummed manifest.

pub mod config;
pub mod tasks;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::analysis::{render_ccd, CcdImage, ImageConfig, ViewPlane};
use crate::dynamics::{
    eject_heavy, eject_light, evolve, init_ensemble, kick_ion, ramp_extraction, relax, Beam, Cooling, EnsembleState,
    EscapeRecord, ExcitationDrive, ForceConfig, HeatingModel, Observer, RemovalReport, Snapshot, TemperatureRecorder,
    Trajectory, TrapMode,
};
use crate::constants::{BOLTZMANN, PA_PER_MBAR};
use crate::error::{Error, Result};
use crate::io::{Cell, Csv};
use crate::presets;
use crate::reactions::{channel_rate, library_channel, set_pressure, step_reactions, RateModel, ReactionChannel, ReactionLog};
use crate::trap::{axis_frequencies_sq, mathieu_q, secular_frequencies, IonSpecies, NeutralGas, TrapConfig, MATHIEU_Q_LIMIT};

pub use config::{Config, Entry, Section};

/// Files produced by a run, keyed by path relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Output {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.to_string(), bytes.into());
    }

    pub fn add_csv(&mut self, name: &str, csv: &Csv) {
        self.add(name, csv.as_str().as_bytes().to_vec());
    }

    /// `sha256  relative/path` per data file, sorted by path.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        for (name, bytes) in &self.files {
            s.push_str(&hex::encode(Sha256::digest(bytes)));
            s.push_str("  ");
            s.push_str(name);
            s.push('\n');
        }
        s
    }

    /// Writes every file and `manifest.txt`; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&p, bytes)?;
            out.push(p);
        }
        let m = dir.join("manifest.txt");
        std::fs::write(&m, self.manifest())?;
        out.push(m);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Checkpoint: evolve up to this time.
    Evolve,
    Lasers(bool),
    /// Species name and heating rate (K/s).
    Heating(String, f64),
    /// Gas name and pressure (Pa).
    Gas(String, f64),
    Drive(Option<ExcitationDrive>),
    EjectHeavy { v_dc: f64, duration: f64 },
    EjectLight { species: String, amplitude: f64, duration: f64 },
    Ramp { v_end: f64, duration: f64, v_offset: f64 },
    Kick { ion: usize, delta_v: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled {
    pub time: f64,
    pub action: Action,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    /// Temperature block length (s).
    pub temperature: Option<f64>,
    pub positions: bool,
    pub reactions: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub mode: TrapMode,
    pub timestep: Option<f64>,
    pub trap: TrapConfig,
    pub species: Vec<(IonSpecies, usize)>,
    pub beam: Beam,
    pub damping: f64,
    /// Heating rate by species name (K/s).
    pub heating: BTreeMap<String, f64>,
    pub background: Option<NeutralGas>,
    pub init_temperature: f64,
    /// Damped relaxation before the schedule starts (s).
    pub relax: f64,
    pub channels: Vec<ReactionChannel>,
    pub reaction_interval: f64,
    pub schedule: Vec<Scheduled>,
    pub outputs: Outputs,
    pub image: Option<ImageConfig>,
}

const RELAX_DAMPING: f64 = 2e5;

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub(crate) fn species_at(name: &str, line: usize) -> Result<IonSpecies> {
    presets::species(name).map_err(|_| perr(line, format!("unknown species `{name}`")))
}

pub(crate) fn direction(word: &str, line: usize) -> Result<[f64; 3]> {
    match word {
        "x" => Ok([1.0, 0.0, 0.0]),
        "y" => Ok([0.0, 1.0, 0.0]),
        "z" => Ok([0.0, 0.0, 1.0]),
        _ => Err(perr(line, format!("expected x, y or z, got `{word}`"))),
    }
}

pub(crate) fn parse_trap(sec: &Section) -> Result<TrapConfig> {
    sec.check_keys(&["preset", "r0", "kappa", "omega_rf", "v_rf", "v_ec", "v_dc", "v_offset", "calibrate"])?;
    let mut trap = match sec.get("preset") {
        Some(e) => presets::trap(&e.value).map_err(|_| e.error(format!("unknown trap preset `{}`", e.value)))?,
        None => TrapConfig {
            r0: sec.require_f64("r0")?,
            kappa: sec.require_f64("kappa")?,
            omega_rf: sec.require_f64("omega_rf")?,
            v_rf: sec.require_f64("v_rf")?,
            v_ec: sec.require_f64("v_ec")?,
            v_dc: 0.0,
            v_offset: 0.0,
        },
    };
    for (key, slot) in [
        ("r0", &mut trap.r0),
        ("kappa", &mut trap.kappa),
        ("omega_rf", &mut trap.omega_rf),
        ("v_rf", &mut trap.v_rf),
        ("v_ec", &mut trap.v_ec),
        ("v_dc", &mut trap.v_dc),
        ("v_offset", &mut trap.v_offset),
    ] {
        if let Some(v) = sec.f64(key)? {
            *slot = v;
        }
    }
    if let Some(e) = sec.get("calibrate") {
        let w = e.words();
        if w.len() != 2 {
            return Err(e.error("expected `<species> <radial frequency Hz>`"));
        }
        let sp = species_at(w[0], e.line)?;
        let f: f64 = w[1].parse().map_err(|_| e.error("radial frequency is not a number"))?;
        trap = trap.calibrated_to_radial(&sp, 2.0 * PI * f);
    }
    trap.validate().map_err(|err| perr(sec.line, err.to_string()))?;
    Ok(trap)
}

fn parse_action(e: &Entry, known: &[String]) -> Result<Action> {
    let w = e.words();
    let num = |k: usize| -> Result<f64> {
        w.get(k)
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| e.error(format!("`{}`: argument {k} must be a number", w[0])))
    };
    let arity = |n: usize| -> Result<()> {
        if w.len() == n + 1 {
            Ok(())
        } else {
            Err(e.error(format!("`{}` takes {n} arguments", w[0])))
        }
    };
    let known_species = |name: &str| -> Result<()> {
        species_at(name, e.line)?;
        if known.iter().any(|k| k == name) {
            Ok(())
        } else {
            Err(e.error(format!("species `{name}` is neither loaded nor a reaction product")))
        }
    };
    match w[0] {
        "evolve" | "end" => {
            arity(0)?;
            Ok(Action::Evolve)
        }
        "lasers" => {
            arity(1)?;
            match w[1] {
                "on" => Ok(Action::Lasers(true)),
                "off" => Ok(Action::Lasers(false)),
                _ => Err(e.error("expected `lasers on` or `lasers off`")),
            }
        }
        "heating" => {
            arity(2)?;
            known_species(w[1])?;
            let h = num(2)?;
            if h < 0.0 {
                return Err(e.error("heating rate must be >= 0"));
            }
            Ok(Action::Heating(w[1].to_string(), h))
        }
        "gas" => {
            arity(2)?;
            presets::gas(w[1]).map_err(|_| e.error(format!("unknown gas `{}`", w[1])))?;
            let p = num(2)?;
            if p < 0.0 {
                return Err(e.error("pressure must be >= 0"));
            }
            Ok(Action::Gas(w[1].to_string(), p * PA_PER_MBAR))
        }
        "drive" => {
            if w.len() == 2 && w[1] == "off" {
                return Ok(Action::Drive(None));
            }
            arity(3)?;
            let d = ExcitationDrive::new(num(1)?, num(2)?, direction(w[3], e.line)?).map_err(|err| e.error(err))?;
            Ok(Action::Drive(Some(d)))
        }
        "eject" => match w.get(1).copied() {
            Some("heavy") => {
                arity(3)?;
                Ok(Action::EjectHeavy { v_dc: num(2)?, duration: positive(e, num(3)?)? })
            }
            Some("light") => {
                arity(4)?;
                known_species(w[2])?;
                Ok(Action::EjectLight { species: w[2].to_string(), amplitude: num(3)?, duration: positive(e, num(4)?)? })
            }
            _ => Err(e.error("expected `eject heavy <v_dc> <duration>` or `eject light <species> <amplitude> <duration>`")),
        },
        "ramp" => {
            if !(w.len() == 3 || w.len() == 4) {
                return Err(e.error("expected `ramp <v_end> <duration> [v_offset]`"));
            }
            let v_offset = if w.len() == 4 { num(3)? } else { 0.0 };
            Ok(Action::Ramp { v_end: num(1)?, duration: positive(e, num(2)?)?, v_offset })
        }
        "kick" => {
            arity(4)?;
            let ion: usize = w[1].parse().map_err(|_| e.error("ion index must be a non-negative integer"))?;
            Ok(Action::Kick { ion, delta_v: [num(2)?, num(3)?, num(4)?] })
        }
        other => Err(e.error(format!("unknown action `{other}`"))),
    }
}

fn loaded(species: &[(IonSpecies, usize)], e: &Entry, name: &str) -> Result<usize> {
    species.iter().position(|s| s.0.name == name).ok_or_else(|| e.error(format!("species `{name}` is not loaded")))
}

fn positive(e: &Entry, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(e.error("duration must be positive"))
    }
}

/// Image settings from an `[image]` section.
pub fn parse_image(sec: &Section) -> Result<ImageConfig> {
    sec.check_keys(&["view", "pixel", "width", "height", "exposure", "psf", "brightness"])?;
    let view = match sec.get("view") {
        Some(e) => ViewPlane::parse(&e.value).map_err(|err| e.error(err))?,
        None => ViewPlane::Zy,
    };
    let cfg = ImageConfig {
        view,
        pixel_size: sec.f64_or("pixel", 2e-6)?,
        width: sec.usize("width")?.unwrap_or(400),
        height: sec.usize("height")?.unwrap_or(160),
        exposure: sec.f64_or("exposure", 1e-3)?,
        psf_sigma: sec.f64_or("psf", 0.0)?,
        brightness: sec.f64_or("brightness", 1.0)?,
    };
    cfg.validate().map_err(|err| perr(sec.line, err.to_string()))?;
    Ok(cfg)
}

impl Scenario {
    /// Builds a scenario from a parsed config. `seed` overrides the
    /// mandatory `seed` key of `[scenario]`.
    pub fn from_config(config: &Config, seed: Option<u64>) -> Result<Self> {
        let head = config.require("scenario")?;
        head.check_keys(&["name", "seed", "mode", "timestep"])?;
        let cfg_seed = head.get("seed").ok_or_else(|| perr(head.line, "[scenario] needs `seed`"))?.u64()?;
        let mode = match head.str("mode").unwrap_or("pseudopotential") {
            "pseudopotential" | "pseudo" => TrapMode::Pseudopotential,
            "rf_full" => TrapMode::RfFull,
            other => return Err(head.get("mode").unwrap().error(format!("unknown mode `{other}`"))),
        };
        let trap = parse_trap(config.require("trap")?)?;

        let sp_sec = config.require("species")?;
        let mut species: Vec<(IonSpecies, usize)> = Vec::new();
        for e in &sp_sec.entries {
            if species.iter().any(|s| s.0.name == e.key) {
                return Err(e.error("species listed twice"));
            }
            species.push((species_at(&e.key, e.line)?, e.usize()?));
        }
        if species.iter().map(|s| s.1).sum::<usize>() == 0 {
            return Err(perr(sp_sec.line, "[species] loads no ions"));
        }

        let mut beam = Beam::Axis([0.0, 0.0, 1.0]);
        let mut damping = 0.0;
        if let Some(sec) = config.section("cooling") {
            let mut cooled = Vec::new();
            for e in &sec.entries {
                match e.key.as_str() {
                    "beam" => {
                        beam = match e.value.as_str() {
                            "three_axis" => Beam::ThreeAxis,
                            w => Beam::Axis(direction(w, e.line)?),
                        }
                    }
                    "damping" => damping = e.f64()?,
                    k => {
                        if let Some(name) = k.strip_prefix("light_pressure.") {
                            let i = loaded(&species, e, name)?;
                            species[i].0 = species[i].0.clone().with_light_pressure(e.f64()?);
                        } else {
                            let i = loaded(&species, e, k)?;
                            let b = e.f64()?;
                            if !(b > 0.0) {
                                return Err(e.error("cooling rate beta/m must be positive"));
                            }
                            cooled.push((i, b));
                        }
                    }
                }
            }
            for (i, b) in cooled {
                let lp = species[i].0.light_pressure;
                species[i].0 = species[i].0.clone().laser_cooled(b).with_light_pressure(lp);
            }
        }

        let mut heating = BTreeMap::new();
        let mut background = None;
        if let Some(sec) = config.section("heating") {
            let mut gas_name = None;
            let mut pressure = None;
            for e in &sec.entries {
                match e.key.as_str() {
                    "gas" => gas_name = Some(e),
                    "pressure_mbar" => pressure = Some(e.f64()? * PA_PER_MBAR),
                    k => {
                        loaded(&species, e, k)?;
                        let h = e.f64()?;
                        if h < 0.0 {
                            return Err(e.error("heating rate must be >= 0"));
                        }
                        heating.insert(k.to_string(), h);
                    }
                }
            }
            if let Some(e) = gas_name {
                let g = presets::gas(&e.value).map_err(|_| e.error(format!("unknown gas `{}`", e.value)))?;
                background = Some(g.with_pressure(pressure.unwrap_or(0.0)));
            }
        }

        let (mut init_temperature, mut relax_time) = (0.0, 1e-4);
        if let Some(sec) = config.section("init") {
            sec.check_keys(&["temperature", "relax"])?;
            init_temperature = sec.f64_or("temperature", 0.0)?;
            relax_time = sec.f64_or("relax", 1e-4)?;
        }

        let mut channels = Vec::new();
        let mut reaction_interval = 1e-3;
        if let Some(sec) = config.section("reactions") {
            sec.check_keys(&["channels", "interval", "k.", "gate.", "exothermicity_k.", "gas."])?;
            if let Some(e) = sec.get("channels") {
                for name in e.value.split(',').map(str::trim) {
                    channels.push(library_channel(name).map_err(|_| e.error(format!("unknown channel `{name}`")))?);
                }
            }
            reaction_interval = sec.f64_or("interval", 1e-3)?;
            for e in &sec.entries {
                let find = |chs: &mut Vec<ReactionChannel>, name: &str| -> Result<usize> {
                    chs.iter().position(|c| c.name == name).ok_or_else(|| e.error(format!("channel `{name}` not enabled")))
                };
                if let Some(n) = e.key.strip_prefix("k.") {
                    let i = find(&mut channels, n)?;
                    channels[i].rate_model = RateModel::Fixed(e.f64()?);
                } else if let Some(n) = e.key.strip_prefix("gate.") {
                    let i = find(&mut channels, n)?;
                    channels[i].gate = Some(e.f64()?);
                } else if let Some(n) = e.key.strip_prefix("exothermicity_k.") {
                    let i = find(&mut channels, n)?;
                    channels[i].exothermicity = e.f64()? * BOLTZMANN;
                } else if let Some(g) = e.key.strip_prefix("gas.") {
                    presets::gas(g).map_err(|_| e.error(format!("unknown gas `{g}`")))?;
                    set_pressure(&mut channels, g, e.f64()? * PA_PER_MBAR);
                }
            }
            for c in &channels {
                c.validate().map_err(|err| perr(sec.line, err.to_string()))?;
            }
        }

        let mut known: Vec<String> = species.iter().map(|s| s.0.name.clone()).collect();
        for c in &channels {
            for b in &c.branches {
                if !known.contains(&b.product.name) {
                    known.push(b.product.name.clone());
                }
            }
        }
        let mut schedule: Vec<Scheduled> = Vec::new();
        if let Some(sec) = config.section("schedule") {
            for e in &sec.entries {
                let time: f64 = e.key.parse().ok().filter(|t: &f64| t.is_finite() && *t >= 0.0).ok_or_else(|| {
                    e.error("schedule keys are times in seconds (>= 0)")
                })?;
                if let Some(prev) = schedule.last() {
                    if time < prev.time {
                        return Err(e.error(format!("schedule time {time} precedes {}", prev.time)));
                    }
                }
                schedule.push(Scheduled { time, action: parse_action(e, &known)?, line: e.line });
            }
        }

        let mut outputs = Outputs::default();
        if let Some(sec) = config.section("output") {
            sec.check_keys(&["temperature", "positions", "reactions"])?;
            outputs.temperature = sec.f64("temperature")?;
            outputs.positions = sec.bool("positions")?.unwrap_or(false);
            outputs.reactions = sec.bool("reactions")?.unwrap_or(false);
        }
        let image = config.section("image").map(parse_image).transpose()?;

        let timestep = head.f64("timestep")?;
        let sc = Self {
            name: head.str("name").unwrap_or("scenario").to_string(),
            seed: seed.unwrap_or(cfg_seed),
            mode,
            timestep,
            trap,
            species,
            beam,
            damping,
            heating,
            background,
            init_temperature,
            relax: relax_time,
            channels,
            reaction_interval,
            schedule,
            outputs,
            image,
        };
        if let Some(dt) = timestep {
            let limit = sc.timestep_limit();
            if !(dt > 0.0) || dt > limit {
                return Err(head.get("timestep").unwrap().error(format!("must lie in (0, {limit:e}] s")));
            }
        }
        Ok(sc)
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        Self::from_config(&Config::load(path)?, seed)
    }

    /// Every species that can appear: loaded ones and reaction products.
    pub fn all_species(&self) -> Vec<IonSpecies> {
        let mut out: Vec<IonSpecies> = self.species.iter().map(|s| s.0.clone()).collect();
        for c in &self.channels {
            for b in &c.branches {
                if !out.iter().any(|s| s.name == b.product.name) {
                    out.push(b.product.clone());
                }
            }
        }
        out
    }

    /// Step limit covering every species that can appear in the run.
    pub fn timestep_limit(&self) -> f64 {
        match self.mode {
            TrapMode::RfFull => self.trap.rf_period() / 50.0,
            TrapMode::Pseudopotential => {
                let w = self
                    .all_species()
                    .iter()
                    .flat_map(|s| axis_frequencies_sq(&self.trap, s))
                    .map(|w2| w2.abs().sqrt())
                    .fold(0.0, f64::max);
                if w == 0.0 {
                    f64::INFINITY
                } else {
                    2.0 * PI / w / 100.0
                }
            }
        }
    }

    pub fn force_config(&self) -> ForceConfig {
        ForceConfig::new(self.mode, self.trap.clone(), self.timestep.unwrap_or_else(|| self.timestep_limit()))
    }

    /// Initial ensemble after relaxation, with the clock at zero.
    pub fn prepare(&self) -> Result<EnsembleState> {
        let counts: Vec<(IonSpecies, usize)> = self.species.iter().filter(|s| s.1 > 0).cloned().collect();
        let mut state = init_ensemble(&counts, &self.trap, self.seed, self.init_temperature)?;
        if self.relax > 0.0 {
            let cfg = self.force_config();
            relax(&mut state, &cfg, RELAX_DAMPING, self.relax)?;
            if self.init_temperature > 0.0 {
                let fresh = init_ensemble(&counts, &self.trap, self.seed, self.init_temperature)?;
                for (ion, f) in state.ions_mut().iter_mut().zip(fresh.ions()) {
                    ion.velocity = f.velocity;
                }
            }
        }
        state.reset_clock();
        Ok(state)
    }

    /// Warnings that do not stop a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in self.all_species() {
            let q = mathieu_q(&self.trap, &s);
            if q >= MATHIEU_Q_LIMIT {
                out.push(format!("species {}: Mathieu q = {q:.3} >= {MATHIEU_Q_LIMIT} (unstable)", s.name));
            } else if let Err(e) = secular_frequencies(&self.trap, &s) {
                out.push(format!("species {}: {e}", s.name));
            }
        }
        out
    }

    /// Runs the schedule.
    pub fn execute(&self) -> Result<Run> {
        let mut run = Run::default();
        if self.schedule.is_empty() {
            return Ok(run);
        }
        let state = self.prepare()?;
        let end = self.schedule.last().unwrap().time;
        let mut r = Runner {
            sc: self,
            state,
            cfg: self.force_config(),
            lasers: true,
            heating: self.heating.clone(),
            channels: self.channels.clone(),
            gates: self.channels.iter().map(|c| c.gate).collect(),
            rng: ChaCha8Rng::seed_from_u64(self.seed ^ 0x5ca1_ab1e),
            temperatures: self.outputs.temperature.map(TemperatureRecorder::new),
            window: self.image.as_ref().map(|img| WindowRecorder::new(end - img.exposure)),
            run: &mut run,
        };
        if let Some(img) = &self.image {
            if img.exposure > end {
                return Err(Error::Scenario {
                    time: 0.0,
                    source: Box::new(crate::error::invalid("image exposure is longer than the schedule")),
                });
            }
        }
        if self.outputs.reactions {
            r.run.reactions.sample(&r.state);
        }
        for item in &self.schedule {
            let at = |e: Error| Error::Scenario { time: item.time, source: Box::new(e) };
            if item.time + 0.5 * r.cfg.timestep < r.state.time() {
                return Err(at(Error::InvalidParameter(format!(
                    "action on line {} is due before the previous action finished (t = {:e} s)",
                    item.line,
                    r.state.time()
                ))));
            }
            r.advance_to(item.time).map_err(|e| Error::Scenario { time: r.state.time(), source: Box::new(e) })?;
            r.apply(&item.action).map_err(at)?;
        }
        let Runner { state, temperatures, window, .. } = r;
        run.temperatures = temperatures;
        if let (Some(w), Some(img)) = (window, &self.image) {
            let traj = Trajectory { species: state.species().to_vec(), snapshots: w.snapshots };
            run.image = Some(render_ccd(&traj, img).map_err(|e| Error::Scenario { time: end, source: Box::new(e) })?);
        }
        run.end_time = state.time();
        run.state = Some(state);
        Ok(run)
    }

    /// Runs the schedule and collects the requested files.
    pub fn run(&self) -> Result<Output> {
        let run = self.execute()?;
        let mut out = Output::default();
        let Some(state) = &run.state else {
            return Ok(out);
        };
        if let Some(t) = &run.temperatures {
            out.add_csv("temperature.csv", &t.to_csv());
        }
        if self.outputs.positions {
            out.add_csv("positions.csv", &positions_csv(state));
        }
        if self.outputs.reactions {
            out.add_csv("reactions.csv", &run.reactions.events_csv());
            out.add_csv("composition.csv", &run.reactions.composition_csv());
        }
        if let Some(img) = &run.image {
            out.add("image.pgm", img.to_pgm());
        }
        if !run.escapes.is_empty() {
            let mut csv = Csv::with_header(&["t_s", "ion_id", "species", "v_rf_V"]);
            for e in &run.escapes {
                csv.row(&[Cell::F(e.time), Cell::U(e.ion), Cell::S(&e.species), Cell::F(e.v_rf)]);
            }
            out.add_csv("escapes.csv", &csv);
        }
        if !run.removals.is_empty() {
            let mut csv = Csv::with_header(&["t_s", "species", "before", "after"]);
            for (t, r) in &run.removals {
                for (i, s) in r.species.iter().enumerate() {
                    let before = r.before.get(i).copied().unwrap_or(0);
                    csv.row(&[Cell::F(*t), Cell::S(s), Cell::U(before), Cell::U(r.after[i])]);
                }
            }
            out.add_csv("removals.csv", &csv);
        }
        Ok(out)
    }
}

/// Alive ions as CSV `ion,species,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s`.
pub fn positions_csv(state: &EnsembleState) -> Csv {
    let mut csv = Csv::with_header(&["ion", "species", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s"]);
    for (i, ion) in state.ions().iter().enumerate().filter(|(_, i)| i.alive) {
        let p = ion.position;
        let v = ion.velocity;
        csv.row(&[
            Cell::U(i),
            Cell::S(&state.species()[ion.species].name),
            Cell::F(p[0]),
            Cell::F(p[1]),
            Cell::F(p[2]),
            Cell::F(v[0]),
            Cell::F(v[1]),
            Cell::F(v[2]),
        ]);
    }
    csv
}

/// Results of [`Scenario::execute`]. `state` is `None` for an empty schedule.
#[derive(Debug, Default)]
pub struct Run {
    pub state: Option<EnsembleState>,
    pub temperatures: Option<TemperatureRecorder>,
    pub reactions: ReactionLog,
    pub escapes: Vec<EscapeRecord>,
    pub removals: Vec<(f64, RemovalReport)>,
    pub image: Option<CcdImage>,
    pub end_time: f64,
}

// Snapshots from `from` on, for the final camera exposure.
struct WindowRecorder {
    from: f64,
    snapshots: Vec<Snapshot>,
}

impl WindowRecorder {
    fn new(from: f64) -> Self {
        Self { from, snapshots: Vec::new() }
    }
}

impl Observer for WindowRecorder {
    fn observe(&mut self, state: &EnsembleState, _cfg: &ForceConfig) -> Result<()> {
        if state.time() >= self.from {
            self.snapshots.push(Snapshot::of(state));
        }
        Ok(())
    }
}

struct Runner<'a> {
    sc: &'a Scenario,
    state: EnsembleState,
    cfg: ForceConfig,
    lasers: bool,
    heating: BTreeMap<String, f64>,
    channels: Vec<ReactionChannel>,
    gates: Vec<Option<f64>>,
    rng: ChaCha8Rng,
    temperatures: Option<TemperatureRecorder>,
    window: Option<WindowRecorder>,
    run: &'a mut Run,
}

impl Runner<'_> {
    fn cooling(&self) -> Cooling {
        let base = if self.lasers { Cooling::from_species(self.state.species()) } else { Cooling::off() };
        Cooling { beam: self.sc.beam, damping: self.sc.damping, ..base }
    }

    fn heating_model(&self) -> HeatingModel {
        HeatingModel {
            rates: self.state.species().iter().map(|s| self.heating.get(&s.name).copied().unwrap_or(0.0)).collect(),
            collisions: self.sc.background.clone(),
            floor: 0.0,
        }
    }

    fn reactive(&self) -> Result<bool> {
        for c in &self.channels {
            if channel_rate(c)? > 0.0 {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        let dt = self.cfg.timestep;
        let reactive = self.reactive()?;
        while t - self.state.time() > 0.5 * dt {
            let rem = t - self.state.time();
            let chunk = if reactive { rem.min(self.sc.reaction_interval) } else { rem };
            let cooling = self.cooling();
            let heating = self.heating_model();
            let t0 = self.state.time();
            {
                let mut obs: Vec<&mut dyn Observer> = Vec::new();
                if let Some(r) = self.temperatures.as_mut() {
                    obs.push(r);
                }
                if let Some(w) = self.window.as_mut() {
                    obs.push(w);
                }
                evolve(&mut self.state, &self.cfg, &cooling, &heating, chunk.max(dt), &mut obs)?;
            }
            if reactive {
                let elapsed = self.state.time() - t0;
                let ev = step_reactions(&mut self.state, elapsed, &self.channels, &mut self.rng)?;
                self.run.reactions.events.extend(ev);
            }
            if self.sc.outputs.reactions {
                self.run.reactions.sample(&self.state);
            }
        }
        Ok(())
    }

    fn apply(&mut self, action: &Action) -> Result<()> {
        match action {
            Action::Evolve => {}
            Action::Lasers(on) => {
                self.lasers = *on;
                for (c, g) in self.channels.iter_mut().zip(&self.gates) {
                    if let Some(g) = g {
                        c.gate = Some(if *on { *g } else { 0.0 });
                    }
                }
            }
            Action::Heating(s, h) => {
                self.heating.insert(s.clone(), *h);
            }
            Action::Gas(g, p) => set_pressure(&mut self.channels, g, *p),
            Action::Drive(d) => {
                self.cfg.drive = d.map(|mut d| {
                    d.t0 = self.state.time();
                    d
                });
            }
            Action::EjectHeavy { v_dc, duration } => {
                let (c, h) = (self.cooling(), self.heating_model());
                let rep = eject_heavy(&mut self.state, &self.cfg, &c, &h, *v_dc, *duration)?;
                self.run.removals.push((self.state.time(), rep));
            }
            Action::EjectLight { species, amplitude, duration } => {
                let (c, h) = (self.cooling(), self.heating_model());
                let rep = eject_light(&mut self.state, &self.cfg, &c, &h, species, *amplitude, *duration, true)?;
                self.run.removals.push((self.state.time(), rep));
            }
            Action::Ramp { v_end, duration, v_offset } => {
                let (c, h) = (self.cooling(), self.heating_model());
                let v0 = self.cfg.trap.v_rf;
                let esc = ramp_extraction(&mut self.state, &self.cfg, &c, &h, v0, *v_end, *duration, *v_offset)?;
                self.run.escapes.extend(esc);
            }
            Action::Kick { ion, delta_v } => kick_ion(&mut self.state, *ion, *delta_v)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match self.line {
            Some(l) if l > 0 => write!(f, "{sev}: line {l}: {}", self.message),
            _ => write!(f, "{sev}: {}", self.message),
        }
    }
}

fn diagnostic(e: Error) -> Diagnostic {
    match e {
        Error::Parse { line, message } => Diagnostic { severity: Severity::Error, line: Some(line), message },
        other => Diagnostic { severity: Severity::Error, line: None, message: other.to_string() },
    }
}

/// Parses and checks a config without running it. An empty list means the
/// config is valid.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    let config = match Config::parse(text) {
        Ok(c) => c,
        Err(e) => return vec![diagnostic(e)],
    };
    let mut out = Vec::new();
    const KNOWN: &[&str] = &[
        "scenario", "trap", "species", "cooling", "heating", "init", "reactions", "schedule", "output", "image",
        "spectrum", "render", "fit", "react", "rempd",
    ];
    for s in &config.sections {
        if !KNOWN.contains(&s.name.as_str()) {
            out.push(Diagnostic {
                severity: Severity::Error,
                line: Some(s.line),
                message: format!("unknown section [{}]", s.name),
            });
        }
    }
    if config.section("rempd").is_some() && config.section("trap").is_none() {
        if let Err(e) = tasks::RempdTask::from_config(&config) {
            out.push(diagnostic(e));
        }
        return out;
    }
    if config.section("trap").is_none() {
        out.push(Diagnostic { severity: Severity::Error, line: None, message: "missing [trap] section".into() });
        return out;
    }
    match Scenario::from_config(&config, None) {
        Ok(sc) => {
            for w in sc.warnings() {
                out.push(Diagnostic { severity: Severity::Warning, line: None, message: w });
            }
            let checks: [(&str, fn(&Config) -> Result<()>); 4] = [
                ("spectrum", |c| tasks::SpectrumTask::from_config(c).map(|_| ())),
                ("fit", |c| tasks::FitTask::from_config(c).map(|_| ())),
                ("react", |c| tasks::ReactTask::from_config(c).map(|_| ())),
                ("rempd", |c| tasks::RempdTask::from_config(c).map(|_| ())),
            ];
            for (name, check) in checks {
                if config.section(name).is_some() {
                    if let Err(e) = check(&config) {
                        out.push(diagnostic(e));
                    }
                }
            }
        }
        Err(e) => out.push(diagnostic(e)),
    }
    out
}
