//! Named experiments run from a scenario config: trap tables, spectra,
//! images, image fits, chemistry and REMPD kinetics.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    candidate_grid, fit_counts_refined, fit_ensemble, simulate_candidate, spectrum_fft, spectrum_sweep, CcdImage,
    Candidate, EnsembleModel, FftConfig, FitReport, Spectrum, SweepConfig,
};
use crate::dynamics::{Cooling, HeatingModel, TrapMode};
use crate::error::{invalid, Error, Result};
use crate::io::{fmt_f64, Cell, Csv};
use crate::reactions::{channel_rate, fit_decay, run_reactions, DecayFit, Dynamics, ReactionLog};
use crate::rempd::{
    build_rate_matrix, fit_manifold, integrate, survival_timescales, IrPump, LevelScheme, PopulationVector,
    RadiationEnv, UvField,
};
use crate::trap::{
    mathieu_q, plasma_estimate, secular_frequencies, zero_temperature_spheroid, IonSpecies, TrapConfig,
    MATHIEU_Q_LIMIT,
};

use super::config::{Config, Section};
use super::{Output, Scenario};

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn species_index(sc: &Scenario, name: &str, line: usize) -> Result<usize> {
    sc.species.iter().position(|s| s.0.name == name).ok_or_else(|| perr(line, format!("species `{name}` is not loaded")))
}

/// Labeled per-species table of trap properties: Mathieu q, secular
/// frequencies, plasma density and the zero-temperature spheroid.
pub fn trap_table(trap: &TrapConfig, species: &[(IonSpecies, usize)]) -> Result<(Csv, String)> {
    let mut csv = Csv::with_header(&[
        "species", "mass_u", "charge", "count", "q", "stable", "f_r_Hz", "f_z_Hz", "density_m3", "radius_m",
        "half_length_m",
    ]);
    let mut text = format!(
        "trap: r0 = {:.4e} m, kappa = {:.4}, f_rf = {:.4e} Hz, V_rf = {:.4} V, V_ec = {:.4} V, V_dc = {:.4} V\n",
        trap.r0,
        trap.kappa,
        trap.omega_rf / (2.0 * PI),
        trap.v_rf,
        trap.v_ec,
        trap.v_dc
    );
    text.push_str(&format!(
        "{:<8} {:>8} {:>3} {:>6} {:>7} {:>12} {:>12} {:>11} {:>11} {:>11}\n",
        "species", "mass_u", "z", "N", "q", "f_r [Hz]", "f_z [Hz]", "n [m^-3]", "R [m]", "L/2 [m]"
    ));
    for (sp, n) in species {
        let q = mathieu_q(trap, sp);
        let stable = q < MATHIEU_Q_LIMIT;
        let sec = secular_frequencies(trap, sp).ok();
        let f_r = sec.map_or(f64::NAN, |s| s.omega_r / (2.0 * PI));
        let f_z = sec.map_or(f64::NAN, |s| s.omega_z / (2.0 * PI));
        let density = plasma_estimate(trap, sp, 0.0).map_or(f64::NAN, |p| p.density);
        let shape = if *n > 0 { zero_temperature_spheroid(trap, sp, *n).ok() } else { None };
        let (r, l) = shape.map_or((f64::NAN, f64::NAN), |s| (s.radius, s.half_length));
        csv.row(&[
            Cell::S(&sp.name),
            Cell::F(sp.mass_u()),
            Cell::I(sp.charge_number() as i64),
            Cell::U(*n),
            Cell::F(q),
            Cell::S(if stable { "yes" } else { "no" }),
            Cell::F(f_r),
            Cell::F(f_z),
            Cell::F(density),
            Cell::F(r),
            Cell::F(l),
        ]);
        text.push_str(&format!(
            "{:<8} {:>8.3} {:>3} {:>6} {:>7.4} {:>12.5e} {:>12.5e} {:>11.4e} {:>11.4e} {:>11.4e}{}\n",
            sp.name,
            sp.mass_u(),
            sp.charge_number(),
            n,
            q,
            f_r,
            f_z,
            density,
            r,
            l,
            if stable { "" } else { "  UNSTABLE" }
        ));
    }
    Ok((csv, text))
}

/// Trap table for a config with `[trap]` and optionally `[species]`.
pub fn trap_task(config: &Config) -> Result<(Output, String)> {
    let trap = super::parse_trap(config.require("trap")?)?;
    let mut species = Vec::new();
    if let Some(sec) = config.section("species") {
        for e in &sec.entries {
            species.push((super::species_at(&e.key, e.line)?, e.usize()?));
        }
    }
    let (csv, text) = trap_table(&trap, &species)?;
    let mut out = Output::default();
    out.add_csv("trap.csv", &csv);
    Ok((out, text))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    Fft(FftConfig),
    Sweep(SweepConfig),
}

/// `[spectrum]`: `method = fft|sweep`, `target` (species), `duration`,
/// `offset` for FFT; `start`, `stop`, `points`, `amplitude`, `direction`,
/// `settle`, `dwell` for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTask {
    pub scenario: Scenario,
    pub kind: SpectrumKind,
}

impl SpectrumTask {
    pub fn from_config(config: &Config) -> Result<Self> {
        let scenario = Scenario::from_config(config, None)?;
        let sec = config.require("spectrum")?;
        Self::build(scenario, sec)
    }

    fn build(scenario: Scenario, sec: &Section) -> Result<Self> {
        sec.check_keys(&[
            "method", "target", "duration", "offset", "start", "stop", "points", "amplitude", "direction", "settle",
            "dwell", "stride",
        ])?;
        let target_entry = sec.get("target").ok_or_else(|| perr(sec.line, "[spectrum] needs `target`"))?;
        let target = species_index(&scenario, &target_entry.value, target_entry.line)?;
        let kind = match sec.str("method").unwrap_or("fft") {
            "fft" => {
                let mut f = FftConfig::new(target, sec.require_f64("duration")?);
                f.offset_fraction = sec.f64_or("offset", f.offset_fraction)?;
                SpectrumKind::Fft(f)
            }
            "sweep" => {
                let (a, b) = (sec.require_f64("start")?, sec.require_f64("stop")?);
                let n = sec.usize("points")?.unwrap_or(41);
                if n < 3 || !(b > a) {
                    return Err(perr(sec.line, "sweep needs stop > start and at least 3 points"));
                }
                let direction = match sec.get("direction") {
                    Some(e) => super::direction(&e.value, e.line)?,
                    None => [1.0, 0.0, 0.0],
                };
                SpectrumKind::Sweep(SweepConfig {
                    frequencies: (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
                    amplitude: sec.require_f64("amplitude")?,
                    direction,
                    settle: sec.f64_or("settle", 1e-3)?,
                    dwell: sec.f64_or("dwell", 1e-3)?,
                    readout: target,
                    sample_stride: sec.usize("stride")?.unwrap_or(10),
                })
            }
            other => return Err(sec.get("method").unwrap().error(format!("unknown method `{other}`"))),
        };
        Ok(Self { scenario, kind })
    }

    pub fn run(&self) -> Result<(Spectrum, Output)> {
        let sc = &self.scenario;
        let state = sc.prepare()?;
        let cfg = sc.force_config();
        let cooling = Cooling { beam: sc.beam, damping: sc.damping, ..Cooling::from_species(state.species()) };
        let heating = HeatingModel {
            rates: state.species().iter().map(|s| sc.heating.get(&s.name).copied().unwrap_or(0.0)).collect(),
            collisions: sc.background.clone(),
            floor: 0.0,
        };
        let spectrum = match &self.kind {
            SpectrumKind::Fft(f) => spectrum_fft(&state, &cfg, &cooling, &heating, f)?,
            SpectrumKind::Sweep(s) => spectrum_sweep(&state, &cfg, &cooling, &heating, s)?,
        };
        let mut out = Output::default();
        let mut csv = Csv::with_header(&["frequency_Hz", "response"]);
        for (f, r) in spectrum.frequencies.iter().zip(&spectrum.response) {
            csv.row(&[Cell::F(*f), Cell::F(*r)]);
        }
        out.add_csv("spectrum.csv", &csv);
        let mut peaks = Csv::with_header(&["frequency_Hz", "height", "width_Hz"]);
        for p in &spectrum.peaks {
            peaks.row(&[Cell::F(p.frequency), Cell::F(p.height), Cell::F(p.width)]);
        }
        out.add_csv("peaks.csv", &peaks);
        Ok((spectrum, out))
    }
}

fn ensemble_model(sc: &Scenario, sec: Option<&Section>) -> Result<EnsembleModel> {
    let mut m = EnsembleModel::new(sc.trap.clone(), sc.species.iter().map(|s| s.0.clone()).collect());
    m.beam = sc.beam;
    m.seed = sc.seed;
    m.timestep = sc.timestep;
    if sc.mode != TrapMode::Pseudopotential {
        return Err(invalid("image rendering and fitting run in pseudopotential mode"));
    }
    if let Some(sec) = sec {
        m.equilibrate = sec.f64_or("equilibrate", m.equilibrate)?;
        m.samples = sec.usize("samples")?.unwrap_or(m.samples);
    }
    Ok(m)
}

fn scenario_candidate(sc: &Scenario) -> Candidate {
    Candidate {
        counts: sc.species.iter().map(|s| s.1).collect(),
        heating: sc.species.iter().map(|s| sc.heating.get(&s.0.name).copied().unwrap_or(0.0)).collect(),
    }
}

/// Renders the scenario's ensemble with its heating rates using `[image]`;
/// `[render]` may set `equilibrate` and `samples`.
pub fn render_task(config: &Config, seed: Option<u64>) -> Result<(CcdImage, Output, String)> {
    let sc = Scenario::from_config(config, seed)?;
    let image = sc.image.clone().ok_or_else(|| perr(0, "missing [image] section"))?;
    let model = ensemble_model(&sc, config.section("render"))?;
    let mut model = model;
    model.exposure = image.exposure;
    let run = simulate_candidate(&model, &scenario_candidate(&sc), &image)?;
    let mut text = String::new();
    for (sp, t) in sc.species.iter().zip(&run.temperatures) {
        if let Some(t) = t {
            text.push_str(&format!("temperature.{} = {}\n", sp.0.name, fmt_f64(*t)));
        }
    }
    let mut out = Output::default();
    out.add("image.pgm", run.image.to_pgm());
    out.add("render.txt", text.clone().into_bytes());
    Ok((run.image, out, text))
}

/// `[fit]`: `reference` (PGM path, relative to the config file),
/// `count.<species>` and `heating.<species>` lists, optional `refine` (count
/// step of the first contraction round), `equilibrate`, `samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTask {
    pub scenario: Scenario,
    pub model: EnsembleModel,
    pub reference: PathBuf,
    pub candidates: Vec<Candidate>,
    pub refine: Option<usize>,
}

impl FitTask {
    pub fn from_config(config: &Config) -> Result<Self> {
        let scenario = Scenario::from_config(config, None)?;
        Self::build(scenario, config)
    }

    fn build(scenario: Scenario, config: &Config) -> Result<Self> {
        let sec = config.require("fit")?;
        sec.check_keys(&["reference", "count.", "heating.", "refine", "equilibrate", "samples"])?;
        let image = scenario.image.clone().ok_or_else(|| perr(0, "missing [image] section"))?;
        let mut model = ensemble_model(&scenario, Some(sec))?;
        model.exposure = image.exposure;
        let reference = PathBuf::from(sec.str("reference").ok_or_else(|| perr(sec.line, "[fit] needs `reference`"))?);
        let base = scenario_candidate(&scenario);
        let mut counts: Vec<Vec<usize>> = base.counts.iter().map(|c| vec![*c]).collect();
        let mut heating: Vec<Vec<f64>> = base.heating.iter().map(|h| vec![*h]).collect();
        for e in &sec.entries {
            if let Some(name) = e.key.strip_prefix("count.") {
                counts[species_index(&scenario, name, e.line)?] = e.usize_list()?;
            } else if let Some(name) = e.key.strip_prefix("heating.") {
                heating[species_index(&scenario, name, e.line)?] = e.f64_list()?;
            }
        }
        let candidates = candidate_grid(&counts, &heating);
        let refine = sec.usize("refine")?;
        Ok(Self { scenario, model, reference, candidates, refine })
    }

    /// Runs the grid (and contraction rounds) against `reference`.
    pub fn run_with(&self, reference: &CcdImage) -> Result<(Vec<FitReport>, Output, String)> {
        let image = self.scenario.image.as_ref().unwrap();
        let reports = match self.refine {
            Some(step) => fit_counts_refined(reference, image, &self.model, &self.candidates, step, 1)?,
            None => vec![fit_ensemble(reference, image, &self.model, &self.candidates)?],
        };
        let species: Vec<IonSpecies> = self.model.species.clone();
        let mut header = vec!["round".to_string(), "score".to_string()];
        for s in &species {
            header.push(format!("count_{}", s.name));
            header.push(format!("heating_{}_K_s", s.name));
            header.push(format!("T_{}_K", s.name));
        }
        let cols: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut csv = Csv::with_header(&cols);
        for (round, r) in reports.iter().enumerate() {
            for (i, c) in r.candidates.iter().enumerate() {
                let mut cells = vec![Cell::U(round), Cell::F(r.scores[i])];
                for s in 0..species.len() {
                    cells.push(Cell::U(c.counts[s]));
                    cells.push(Cell::F(c.heating[s]));
                    cells.push(Cell::F(r.temperatures[i][s].unwrap_or(f64::NAN)));
                }
                csv.row(&cells);
            }
        }
        let text = reports.last().unwrap().to_text(&species);
        let mut out = Output::default();
        out.add_csv("fit.csv", &csv);
        out.add("fit.txt", text.clone().into_bytes());
        Ok((reports, out, text))
    }

    pub fn run(&self, base_dir: &Path) -> Result<(Vec<FitReport>, Output, String)> {
        let path = if self.reference.is_absolute() { self.reference.clone() } else { base_dir.join(&self.reference) };
        let reference = CcdImage::read_pgm(&path)?;
        self.run_with(&reference)
    }
}

/// `[react]`: `duration`, `interval`, `dynamics` (bool), `fit` (species whose
/// decay is fitted; the first channel consuming it sets the gas density).
#[derive(Debug, Clone, PartialEq)]
pub struct ReactTask {
    pub scenario: Scenario,
    pub duration: f64,
    pub interval: f64,
    pub dynamics: bool,
    pub fit: Option<String>,
}

impl ReactTask {
    pub fn from_config(config: &Config) -> Result<Self> {
        let scenario = Scenario::from_config(config, None)?;
        Self::build(scenario, config.require("react")?)
    }

    fn build(scenario: Scenario, sec: &Section) -> Result<Self> {
        sec.check_keys(&["duration", "interval", "dynamics", "fit"])?;
        if scenario.channels.is_empty() {
            return Err(perr(sec.line, "[react] needs channels in [reactions]"));
        }
        let duration = sec.require_f64("duration")?;
        let interval = sec.f64_or("interval", scenario.reaction_interval)?;
        if !(duration > 0.0 && interval > 0.0) {
            return Err(perr(sec.line, "duration and interval must be positive"));
        }
        let fit = sec.str("fit").map(str::to_string);
        if let (Some(name), Some(e)) = (&fit, sec.get("fit")) {
            super::species_at(name, e.line)?;
        }
        Ok(Self { scenario, duration, interval, dynamics: sec.bool("dynamics")?.unwrap_or(false), fit })
    }

    pub fn run(&self) -> Result<(ReactionLog, Option<DecayFit>, Output, String)> {
        let sc = &self.scenario;
        let mut state = sc.prepare()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed ^ 0x5ca1_ab1e);
        let mut log = ReactionLog::default();
        let cfg = sc.force_config();
        let heating = HeatingModel {
            rates: sc.all_species().iter().map(|s| sc.heating.get(&s.name).copied().unwrap_or(0.0)).collect(),
            collisions: sc.background.clone(),
            floor: 0.0,
        };
        for s in sc.all_species() {
            state.ensure_species(&s);
        }
        let dynamics = Dynamics { forces: &cfg, beam: sc.beam, heating: &heating };
        let dyn_ref = if self.dynamics { Some(&dynamics) } else { None };
        run_reactions(&mut state, &sc.channels, self.duration, self.interval, dyn_ref, &mut rng, &mut log)?;
        let mut out = Output::default();
        out.add_csv("reactions.csv", &log.events_csv());
        out.add_csv("composition.csv", &log.composition_csv());
        let mut text = String::new();
        for (s, n) in state.species().iter().zip(state.counts()) {
            text.push_str(&format!("final.{} = {}\n", s.name, n));
        }
        let mut decay = None;
        if let Some(name) = &self.fit {
            let ch = sc
                .channels
                .iter()
                .find(|c| &c.reactant.name == name && c.gas_name().is_some())
                .ok_or_else(|| invalid(format!("no gas channel consumes `{name}`")))?;
            let gas = match &ch.trigger {
                crate::reactions::Trigger::NeutralGas(g) => g.clone(),
                _ => unreachable!(),
            };
            let density = gas.number_density()?;
            let (t, n) = log.series(name);
            let (t, n): (Vec<f64>, Vec<f64>) = t.into_iter().zip(n).filter(|p| p.1 > 0.0).unzip();
            let f = fit_decay(&t, &n, density)?;
            text.push_str(&format!(
                "fit.species = {name}\nfit.n0 = {}\nfit.gamma_per_s = {}\nfit.k_m3_s = {}\nfit.k_expected_m3_s = {}\nfit.reduced_chi2 = {}\n",
                fmt_f64(f.n0),
                fmt_f64(f.gamma),
                fmt_f64(f.k),
                fmt_f64(channel_rate(ch)? / density / ch.gate.unwrap_or(1.0)),
                fmt_f64(f.reduced_chi2)
            ));
            decay = Some(f);
        }
        out.add("react.txt", text.clone().into_bytes());
        Ok((log, decay, out, text))
    }
}

/// `[rempd]`: `scheme` (`toy` or a path), `t_bbr`, `t_rot`, `ir = v J v' J'
/// rate`, `uv = intensity wavelength`, `duration`, `samples`, `start`
/// (`thermal` or `v J`).
#[derive(Debug, Clone, PartialEq)]
pub struct RempdTask {
    pub scheme: LevelScheme,
    pub env: RadiationEnv,
    pub t_rot: f64,
    pub start: Option<(u32, u32)>,
    pub duration: f64,
    pub samples: usize,
}

impl RempdTask {
    pub fn from_config(config: &Config) -> Result<Self> {
        Self::from_config_at(config, Path::new("."))
    }

    pub fn from_config_at(config: &Config, base_dir: &Path) -> Result<Self> {
        let sec = config.require("rempd")?;
        sec.check_keys(&["scheme", "t_bbr", "t_rot", "ir", "uv", "duration", "samples", "start"])?;
        let scheme = match sec.str("scheme").unwrap_or("toy") {
            "toy" => LevelScheme::toy_hd_plus(),
            p => {
                let e = sec.get("scheme").unwrap();
                let path = base_dir.join(p);
                LevelScheme::load(&path).map_err(|err| e.error(format!("{}: {err}", path.display())))?
            }
        };
        let ints = |key: &str, n: usize| -> Result<Option<Vec<String>>> {
            match sec.get(key) {
                None => Ok(None),
                Some(e) => {
                    let w: Vec<String> = e.words().into_iter().map(str::to_string).collect();
                    if w.len() != n {
                        return Err(e.error(format!("expected {n} values")));
                    }
                    Ok(Some(w))
                }
            }
        };
        let num = |key: &str, w: &str| -> Result<f64> {
            w.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| sec.get(key).unwrap().error(format!("bad value `{w}`")))
        };
        let level = |key: &str, a: &str, b: &str| -> Result<(u32, u32)> {
            let bad = || sec.get(key).unwrap().error("levels are non-negative integers");
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        let ir = match ints("ir", 5)? {
            Some(w) => Some(IrPump {
                lower: level("ir", &w[0], &w[1])?,
                upper: level("ir", &w[2], &w[3])?,
                rate: num("ir", &w[4])?,
            }),
            None => None,
        };
        let uv = match ints("uv", 2)? {
            Some(w) => Some(UvField { intensity: num("uv", &w[0])?, wavelength: num("uv", &w[1])? }),
            None => None,
        };
        let start = match sec.get("start") {
            None => None,
            Some(e) if e.value == "thermal" => None,
            Some(_) => {
                let w = ints("start", 2)?.unwrap();
                Some(level("start", &w[0], &w[1])?)
            }
        };
        let env = RadiationEnv { t_bbr: sec.f64_or("t_bbr", 300.0)?, ir, uv };
        let task = Self {
            scheme,
            env,
            t_rot: sec.f64_or("t_rot", env.t_bbr)?,
            start,
            duration: sec.require_f64("duration")?,
            samples: sec.usize("samples")?.unwrap_or(2000),
        };
        build_rate_matrix(&task.scheme, &task.env).map_err(|e| perr(sec.line, e.to_string()))?;
        if let Some((v, j)) = start {
            task.scheme.index_of(v, j).map_err(|e| perr(sec.get("start").unwrap().line, e.to_string()))?;
        }
        Ok(task)
    }

    pub fn run(&self) -> Result<(Output, String)> {
        let m = build_rate_matrix(&self.scheme, &self.env)?;
        let p0 = match self.start {
            Some((v, j)) => PopulationVector::delta(&self.scheme, v, j)?,
            None => PopulationVector::boltzmann(&self.scheme, self.t_rot)?,
        };
        let traj = integrate(&p0, &m, self.duration, self.samples)?;
        let survival = traj.survival();
        let mut out = Output::default();
        out.add_csv("populations.csv", &traj.to_csv(&self.scheme));
        let mut csv = Csv::with_header(&["t_s", "survival"]);
        for (t, s) in traj.times.iter().zip(&survival) {
            csv.row(&[Cell::F(*t), Cell::F(*s)]);
        }
        out.add_csv("survival.csv", &csv);
        let mut text = format!("survival.final = {}\n", fmt_f64(*survival.last().unwrap()));
        if self.env.uv.is_some() {
            match survival_timescales(&traj.times, &survival) {
                Ok(ts) => text.push_str(&format!(
                    "fast_per_s = {}\nslow_per_s = {}\nfast_weight = {}\n",
                    fmt_f64(ts.fast),
                    fmt_f64(ts.slow),
                    fmt_f64(ts.fast_weight)
                )),
                Err(e) => text.push_str(&format!("# timescale fit failed: {e}\n")),
            }
        }
        let last = traj.populations.last().unwrap();
        let mut vs: Vec<u32> = self.scheme.levels.iter().map(|l| l.v).collect();
        vs.dedup();
        for v in vs {
            if let Ok(f) = fit_manifold(&self.scheme, &last.levels, v) {
                text.push_str(&format!(
                    "v{v}.temperature_K = {}\nv{v}.residual = {}\nv{v}.flagged = {}\n",
                    fmt_f64(f.temperature),
                    fmt_f64(f.residual),
                    f.flagged
                ));
            }
        }
        out.add("rempd.txt", text.clone().into_bytes());
        Ok((out, text))
    }
}
