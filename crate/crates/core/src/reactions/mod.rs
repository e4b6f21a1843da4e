//! Stochastic in-trap chemistry: per-ion reaction events that change the
//! species of an ion in place, and decay-curve rate extraction.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::constants::{ATOMIC_MASS_UNIT, BOLTZMANN, PLANCK, SPEED_OF_LIGHT};
use crate::dynamics::{evolve, Beam, Cooling, EnsembleState, ForceConfig, HeatingModel};
use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, linear_least_squares, LmOptions};
use crate::io::{Cell, Csv};
use crate::presets;
use crate::trap::{langevin_rate, IonSpecies, NeutralGas};

/// What drives a channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    NeutralGas(NeutralGas),
    /// Intensity W/m², cross section m², wavelength m.
    Photon { intensity: f64, cross_section: f64, wavelength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateModel {
    Langevin,
    /// m³/s
    Fixed(f64),
}

/// One product ion and the neutral released with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub product: IonSpecies,
    /// kg
    pub neutral_mass: f64,
    pub fraction: f64,
}

impl Branch {
    /// Branch with a product looked up in the species presets.
    pub fn named(product: &str, neutral_mass_u: f64, fraction: f64) -> Result<Self> {
        Ok(Self { product: presets::species(product)?, neutral_mass: neutral_mass_u * ATOMIC_MASS_UNIT, fraction })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionChannel {
    pub name: String,
    /// Matched by species name.
    pub reactant: IonSpecies,
    pub trigger: Trigger,
    /// Excited-state fraction for photoactivated channels.
    pub gate: Option<f64>,
    /// Empty for photodestruction: the ion is removed.
    pub branches: Vec<Branch>,
    pub rate_model: RateModel,
    /// Energy released per event (J).
    pub exothermicity: f64,
}

impl ReactionChannel {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gate {
            if !(0.0..=1.0).contains(&g) {
                return Err(invalid(format!("{}: gate must lie in [0, 1]", self.name)));
            }
        }
        if let RateModel::Fixed(k) = self.rate_model {
            if !(k > 0.0) {
                return Err(invalid(format!("{}: fixed rate coefficient must be positive", self.name)));
            }
        }
        if !self.branches.is_empty() {
            let sum: f64 = self.branches.iter().map(|b| b.fraction).sum();
            if (sum - 1.0).abs() > 1e-9 || self.branches.iter().any(|b| !(b.fraction >= 0.0)) {
                return Err(invalid(format!("{}: branching fractions must sum to 1", self.name)));
            }
        }
        if !(self.exothermicity >= 0.0) {
            return Err(invalid(format!("{}: exothermicity must be >= 0", self.name)));
        }
        match &self.trigger {
            Trigger::NeutralGas(g) => g.validate(),
            Trigger::Photon { intensity, cross_section, wavelength } => {
                if !(*intensity >= 0.0 && *cross_section >= 0.0 && *wavelength > 0.0) {
                    return Err(invalid(format!("{}: photon trigger needs I >= 0, sigma >= 0, lambda > 0", self.name)));
                }
                Ok(())
            }
        }
    }

    pub fn is_destructive(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn is_photoactivated(&self) -> bool {
        self.gate.is_some()
    }

    pub fn gas_name(&self) -> Option<&str> {
        match &self.trigger {
            Trigger::NeutralGas(g) => Some(&g.name),
            Trigger::Photon { .. } => None,
        }
    }

    pub fn with_pressure(mut self, pressure: f64) -> Self {
        if let Trigger::NeutralGas(g) = &mut self.trigger {
            g.pressure = pressure;
        }
        self
    }

    pub fn with_gate(mut self, gate: f64) -> Self {
        self.gate = Some(gate);
        self
    }

    pub fn with_rate_model(mut self, model: RateModel) -> Self {
        self.rate_model = model;
        self
    }
}

/// Sets the pressure (Pa) of every channel driven by the gas `gas`.
pub fn set_pressure(channels: &mut [ReactionChannel], gas: &str, pressure: f64) {
    for c in channels.iter_mut() {
        if let Trigger::NeutralGas(g) = &mut c.trigger {
            if g.name == gas {
                g.pressure = pressure;
            }
        }
    }
}

/// Sets the gate of every photoactivated channel.
pub fn set_gates(channels: &mut [ReactionChannel], gate: f64) {
    for c in channels.iter_mut().filter(|c| c.gate.is_some()) {
        c.gate = Some(gate);
    }
}

/// Per-ion reaction rate (1/s).
pub fn channel_rate(channel: &ReactionChannel) -> Result<f64> {
    channel.validate()?;
    let gate = channel.gate.unwrap_or(1.0);
    match &channel.trigger {
        Trigger::NeutralGas(gas) => {
            if gas.pressure > 0.0 && !(gas.temperature > 0.0) {
                return Err(Error::MissingEnvironment(format!("{}: gas temperature not set", channel.name)));
            }
            let n = gas.number_density()?;
            let k = match channel.rate_model {
                RateModel::Langevin => langevin_rate(&channel.reactant, gas),
                RateModel::Fixed(k) => k,
            };
            Ok(gate * k * n)
        }
        Trigger::Photon { intensity, cross_section, wavelength } => {
            let photon = PLANCK * SPEED_OF_LIGHT / wavelength;
            Ok(gate * cross_section * intensity / photon)
        }
    }
}

/// Momentum bookkeeping of one event (kg m/s and J).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recoil {
    pub momentum_before: [f64; 3],
    pub ion_momentum: [f64; 3],
    pub neutral_momentum: [f64; 3],
    pub released: f64,
    /// Kinetic energy of the neutral in the centre-of-mass frame.
    pub neutral_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionEvent {
    pub time: f64,
    pub ion: usize,
    pub channel: String,
    /// Product species name, `none` for photodestruction.
    pub product: String,
    pub recoil: Option<Recoil>,
}

/// Fires reactions for the time bin of length `dt` that ends at the current
/// state time. Each alive ion whose species is a reactant reacts with
/// probability `1 - exp(-R dt)`, `R` being the summed rate of its channels;
/// the channel is picked in proportion to its rate and the branch by its
/// fraction.
pub fn step_reactions(
    state: &mut EnsembleState,
    dt: f64,
    channels: &[ReactionChannel],
    rng: &mut impl Rng,
) -> Result<Vec<ReactionEvent>> {
    if channels.is_empty() {
        return Ok(Vec::new());
    }
    if !(dt > 0.0) {
        return Err(invalid("reaction time bin must be positive"));
    }
    for c in channels {
        for b in &c.branches {
            b.product.validate().map_err(|_| Error::UnknownSpecies(b.product.name.clone()))?;
        }
    }
    let rates: Vec<f64> = channels.iter().map(channel_rate).collect::<Result<_>>()?;
    let max_rate = rates.iter().copied().fold(0.0, f64::max);
    if max_rate * dt > 0.1 {
        warn!("reaction bin too coarse: rate x dt = {:.3}", max_rate * dt);
    }
    // Channels per species index of the current table.
    let by_species: Vec<Vec<usize>> = state
        .species()
        .iter()
        .map(|s| (0..channels.len()).filter(|&c| channels[c].reactant.name == s.name && rates[c] > 0.0).collect())
        .collect();
    let time = state.time();
    let mut events = Vec::new();
    for i in 0..state.ions().len() {
        let ion = state.ions()[i];
        if !ion.alive || ion.species >= by_species.len() {
            continue;
        }
        let list = &by_species[ion.species];
        if list.is_empty() {
            continue;
        }
        let total: f64 = list.iter().map(|&c| rates[c]).sum();
        let p = -(-total * dt).exp_m1();
        if rng.gen::<f64>() >= p {
            continue;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = *list.last().unwrap();
        for &c in list {
            if u < rates[c] {
                chosen = c;
                break;
            }
            u -= rates[c];
        }
        let channel = &channels[chosen];
        if channel.is_destructive() {
            state.remove_ion(i);
            events.push(ReactionEvent { time, ion: i, channel: channel.name.clone(), product: "none".into(), recoil: None });
            continue;
        }
        let mut v = rng.gen::<f64>();
        let mut branch = channel.branches.last().unwrap();
        for b in &channel.branches {
            if v < b.fraction {
                branch = b;
                break;
            }
            v -= b.fraction;
        }
        let m_r = state.species()[ion.species].mass;
        let s = state.ensure_species(&branch.product);
        let m_p = branch.product.mass;
        let m_n = branch.neutral_mass;
        let before = [m_r * ion.velocity[0], m_r * ion.velocity[1], m_r * ion.velocity[2]];
        let dir: [f64; 3] = UnitSphere.sample(rng);
        // Relative momentum carrying the released energy in the CM frame.
        let mu = m_p * m_n / (m_p + m_n);
        let prel = (2.0 * mu * channel.exothermicity).sqrt();
        let mut vel = [0.0; 3];
        let mut p_ion = [0.0; 3];
        let mut p_n = [0.0; 3];
        for k in 0..3 {
            let vcm = before[k] / (m_p + m_n);
            vel[k] = vcm + dir[k] * prel / m_p;
            p_ion[k] = m_p * vel[k];
            p_n[k] = before[k] - p_ion[k];
        }
        let st = &mut state.ions_mut()[i];
        st.species = s;
        st.velocity = vel;
        events.push(ReactionEvent {
            time,
            ion: i,
            channel: channel.name.clone(),
            product: branch.product.name.clone(),
            recoil: Some(Recoil {
                momentum_before: before,
                ion_momentum: p_ion,
                neutral_momentum: p_n,
                released: channel.exothermicity,
                neutral_energy: prel * prel / (2.0 * m_n),
            }),
        });
    }
    Ok(events)
}

/// Exponential fit `N(t) = N0 exp(-Γ t)` and `k = Γ / n_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub n0: f64,
    /// 1/s
    pub gamma: f64,
    /// m³/s
    pub k: f64,
    /// Chi-square per degree of freedom with counting errors.
    pub reduced_chi2: f64,
}

/// Least-squares exponential fit to a decay curve.
pub fn fit_decay(times: &[f64], counts: &[f64], n_neutral: f64) -> Result<DecayFit> {
    if times.len() != counts.len() {
        return Err(Error::DimensionMismatch { a: (times.len(), 1), b: (counts.len(), 1) });
    }
    if times.len() < 5 {
        return Err(Error::InsufficientSamples(format!("{} points, need at least 5", times.len())));
    }
    if counts.iter().any(|c| !(*c > 0.0)) {
        return Err(invalid("decay counts must be positive"));
    }
    if !(n_neutral > 0.0) {
        return Err(invalid("neutral density must be positive"));
    }
    let x = DMatrix::from_fn(times.len(), 2, |i, j| if j == 0 { 1.0 } else { -times[i] });
    let y: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let start = linear_least_squares(&x, &y, counts)?;
    let p0 = [start[0].exp(), start[1]];
    let fit = levenberg_marquardt(
        |p| times.iter().zip(counts).map(|(t, n)| p[0] * (-p[1] * t).exp() - n).collect(),
        &p0,
        &LmOptions::default(),
    )?;
    let (n0, gamma) = (fit.params[0], fit.params[1]);
    let chi2: f64 =
        times.iter().zip(&fit.residuals).map(|(t, r)| r * r / (n0 * (-gamma * t).exp()).max(1.0)).sum::<f64>();
    let reduced_chi2 = chi2 / (times.len() - 2) as f64;
    let span = times.last().unwrap() - times[0];
    if reduced_chi2 > 25.0 || gamma * span < -0.05 {
        return Err(Error::FitFailed {
            reason: "counts are not dominated by a single exponential decay".into(),
            residual: reduced_chi2,
        });
    }
    Ok(DecayFit { n0, gamma, k: gamma / n_neutral, reduced_chi2 })
}

/// Named preset channels. Gas pressures start at zero; photoactivated
/// channels start with gate 1.
pub fn channel_library() -> Vec<ReactionChannel> {
    fn lib() -> Result<Vec<ReactionChannel>> {
        let sp = presets::species;
        let gas = |n: &str| presets::gas(n).map(|g| g.with_pressure(0.0));
        let (h, d) = (1.007_825, 2.014_102);
        let neutral = |name, reactant: &str, g: &str, branches: Vec<Branch>| -> Result<ReactionChannel> {
            Ok(ReactionChannel {
                name: String::from(name),
                reactant: sp(reactant)?,
                trigger: Trigger::NeutralGas(gas(g)?),
                gate: None,
                branches,
                rate_model: RateModel::Langevin,
                exothermicity: 0.0,
            })
        };
        let mut out = vec![
            neutral("Be+*+H2", "Be+", "H2", vec![Branch::named("BeH+", h, 1.0)?])?.with_gate(1.0),
            neutral("Be+*+HD", "Be+", "HD", vec![Branch::named("BeH+", d, 0.5)?, Branch::named("BeD+", h, 0.5)?])?
                .with_gate(1.0)
                .with_rate_model(RateModel::Fixed(1.1e-15)),
            neutral("Be+*+D2", "Be+", "D2", vec![Branch::named("BeD+", d, 1.0)?])?.with_gate(1.0),
            neutral("Ba++CO2", "Ba+", "CO2", vec![Branch::named("BaO+", 28.010, 1.0)?])?,
            neutral("H2++H2", "H2+", "H2", vec![Branch::named("H3+", h, 1.0)?])?,
            neutral("H3++HD", "H3+", "HD", vec![Branch::named("H2D+", 2.015_650, 1.0)?])?,
            neutral("H2D++H2", "H2D+", "H2", vec![Branch::named("H3+", 3.021_927, 1.0)?])?,
            neutral("Ar++H2", "Ar+", "H2", vec![Branch::named("ArH+", h, 1.0)?])?,
            neutral("ArH++H2", "ArH+", "H2", vec![Branch::named("H3+", 39.962_383, 1.0)?])?,
            neutral("H2++Ar", "H2+", "Ar", vec![Branch::named("ArH+", h, 1.0)?])?,
            neutral("H3++O2", "H3+", "O2", vec![Branch::named("HO2+", 2.015_650, 1.0)?])?,
            ReactionChannel {
                name: "photodestruction".into(),
                reactant: sp("AF+")?,
                trigger: Trigger::Photon { intensity: 0.0, cross_section: 1e-21, wavelength: 532e-9 },
                gate: None,
                branches: Vec::new(),
                rate_model: RateModel::Langevin,
                exothermicity: 0.0,
            },
        ];
        out[5].exothermicity = 232.0 * BOLTZMANN;
        Ok(out)
    }
    lib().expect("channel presets reference known species and gases")
}

/// Library channel by name.
pub fn library_channel(name: &str) -> Result<ReactionChannel> {
    channel_library()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| invalid(format!("unknown reaction channel `{name}`")))
}

/// Dynamics to interleave with the chemistry.
#[derive(Debug, Clone)]
pub struct Dynamics<'a> {
    pub forces: &'a ForceConfig,
    pub beam: Beam,
    pub heating: &'a HeatingModel,
}

/// Composition samples and events of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReactionLog {
    pub events: Vec<ReactionEvent>,
    /// (time, species name, count)
    pub composition: Vec<(f64, String, usize)>,
}

impl ReactionLog {
    /// Appends the current count of every species.
    pub fn sample(&mut self, state: &EnsembleState) {
        let counts = state.counts();
        for (s, n) in state.species().iter().zip(counts) {
            self.composition.push((state.time(), s.name.clone(), n));
        }
    }

    /// Count series of one species.
    pub fn series(&self, species: &str) -> (Vec<f64>, Vec<f64>) {
        let mut by_time: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for (t, s, n) in &self.composition {
            let e = by_time.entry(t.to_bits()).or_insert((*t, 0.0));
            if s == species {
                e.1 = *n as f64;
            }
        }
        let mut pts: Vec<(f64, f64)> = by_time.into_values().collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.into_iter().unzip()
    }

    pub fn events_csv(&self) -> Csv {
        let mut csv = Csv::with_header(&["t_s", "ion_id", "channel", "product"]);
        for e in &self.events {
            csv.row(&[Cell::F(e.time), Cell::U(e.ion), Cell::S(&e.channel), Cell::S(&e.product)]);
        }
        csv
    }

    pub fn composition_csv(&self) -> Csv {
        let mut csv = Csv::with_header(&["t_s", "species", "N"]);
        for (t, s, n) in &self.composition {
            csv.row(&[Cell::F(*t), Cell::S(s), Cell::U(*n)]);
        }
        csv
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.events_csv().write(&dir.join("reactions.csv"))?;
        self.composition_csv().write(&dir.join("composition.csv"))
    }
}

/// Alternates reaction bins of length `interval` with molecular dynamics
/// (when given) for `duration`. Without dynamics only the clock advances.
pub fn run_reactions(
    state: &mut EnsembleState,
    channels: &[ReactionChannel],
    duration: f64,
    interval: f64,
    dynamics: Option<&Dynamics<'_>>,
    rng: &mut impl Rng,
    log: &mut ReactionLog,
) -> Result<()> {
    if !(interval > 0.0 && duration > 0.0) {
        return Err(invalid("duration and interval must be positive"));
    }
    if log.composition.is_empty() {
        log.sample(state);
    }
    let bins = ((duration / interval).round() as usize).max(1);
    for _ in 0..bins {
        match dynamics {
            Some(d) => {
                let cooling = Cooling { beam: d.beam, ..Cooling::from_species(state.species()) };
                evolve(state, d.forces, &cooling, d.heating, interval, &mut [])?;
                log.events.extend(step_reactions(state, interval, channels, rng)?);
            }
            None => {
                state.advance_time(interval);
                log.events.extend(step_reactions(state, interval, channels, rng)?);
            }
        }
        log.sample(state);
    }
    Ok(())
}
