//! Observers and secular thermometry.

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::io::{Cell, Csv};
use crate::trap::IonSpecies;

use super::forces::{ForceConfig, TrapMode};
use super::integrator::{species_energies, total_energy, Observer};
use super::state::{EnsembleState, IonState};

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub ions: Vec<IonState>,
}

impl Snapshot {
    pub fn of(state: &EnsembleState) -> Self {
        Self { time: state.time(), ions: state.ions().to_vec() }
    }
}

/// Sampled positions and velocities with the species table they refer to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub species: Vec<IonSpecies>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn span(&self) -> f64 {
        match (self.snapshots.first(), self.snapshots.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }
}

/// Stores a full snapshot every `stride` steps.
#[derive(Debug, Clone)]
pub struct SnapshotRecorder {
    pub stride: usize,
    pub trajectory: Trajectory,
}

impl SnapshotRecorder {
    pub fn new(stride: usize) -> Self {
        Self { stride, trajectory: Trajectory::default() }
    }
}

impl Observer for SnapshotRecorder {
    fn stride(&self) -> usize {
        self.stride
    }
    fn observe(&mut self, state: &EnsembleState, _cfg: &ForceConfig) -> Result<()> {
        if self.trajectory.species.len() != state.species().len() {
            self.trajectory.species = state.species().to_vec();
        }
        self.trajectory.snapshots.push(Snapshot::of(state));
        Ok(())
    }
}

/// Total kinetic and potential energy every `stride` steps.
#[derive(Debug, Clone)]
pub struct EnergyRecorder {
    pub stride: usize,
    /// (t, E_kin, E_pot)
    pub samples: Vec<(f64, f64, f64)>,
}

impl EnergyRecorder {
    pub fn new(stride: usize) -> Self {
        Self { stride, samples: Vec::new() }
    }
}

impl Observer for EnergyRecorder {
    fn stride(&self) -> usize {
        self.stride
    }
    fn observe(&mut self, state: &EnsembleState, cfg: &ForceConfig) -> Result<()> {
        let e = total_energy(state, cfg);
        self.samples.push((state.time(), e.kinetic, e.potential));
        Ok(())
    }
}

/// Per-species output row of [`TemperatureRecorder`].
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureRow {
    pub time: f64,
    pub species: String,
    pub count: usize,
    /// K
    pub temperature: f64,
    pub e_kin: f64,
    pub e_pot: f64,
}

/// Block-averaged secular temperatures.
///
/// Every `interval` seconds one row per species is emitted with the mean
/// secular temperature over the block and the instantaneous energies.
/// In rf_full mode velocities are averaged over each RF period first.
#[derive(Debug, Clone)]
pub struct TemperatureRecorder {
    interval: f64,
    next_emit: Option<f64>,
    // per species sum of m v^2 and number of ion samples
    acc: Vec<(f64, usize)>,
    // rf_full: per-ion running velocity sums within the current period
    period_sum: Vec<[f64; 3]>,
    period_n: usize,
    period_end: Option<f64>,
    pub rows: Vec<TemperatureRow>,
}

impl TemperatureRecorder {
    pub fn new(interval: f64) -> Self {
        Self {
            interval,
            next_emit: None,
            acc: Vec::new(),
            period_sum: Vec::new(),
            period_n: 0,
            period_end: None,
            rows: Vec::new(),
        }
    }

    fn add(&mut self, state: &EnsembleState, ion: usize, v: [f64; 3]) {
        let s = state.ions()[ion].species;
        if self.acc.len() < state.species().len() {
            self.acc.resize(state.species().len(), (0.0, 0));
        }
        let m = state.species()[s].mass;
        self.acc[s].0 += m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        self.acc[s].1 += 1;
    }

    /// Rows as CSV `t_s,species,N,T_mK,E_kin_J,E_pot_J`.
    pub fn to_csv(&self) -> Csv {
        temperature_csv(&self.rows)
    }

    /// Rows of one species.
    pub fn series(&self, species: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.species == species).map(|r| (r.time, r.temperature)).collect()
    }
}

pub fn temperature_csv(rows: &[TemperatureRow]) -> Csv {
    let mut csv = Csv::with_header(&["t_s", "species", "N", "T_mK", "E_kin_J", "E_pot_J"]);
    for r in rows {
        csv.row(&[
            Cell::F(r.time),
            Cell::S(&r.species),
            Cell::U(r.count),
            Cell::F(r.temperature * 1e3),
            Cell::F(r.e_kin),
            Cell::F(r.e_pot),
        ]);
    }
    csv
}

impl Observer for TemperatureRecorder {
    fn observe(&mut self, state: &EnsembleState, cfg: &ForceConfig) -> Result<()> {
        let t = state.time();
        let next = *self.next_emit.get_or_insert(t - cfg.timestep + self.interval);
        match cfg.mode {
            TrapMode::Pseudopotential => {
                for (i, ion) in state.ions().iter().enumerate().filter(|(_, i)| i.alive) {
                    self.add(state, i, ion.velocity);
                }
            }
            TrapMode::RfFull => {
                let n = state.ions().len();
                if self.period_sum.len() != n {
                    self.period_sum = vec![[0.0; 3]; n];
                    self.period_n = 0;
                }
                let end = *self.period_end.get_or_insert(t - cfg.timestep + cfg.trap.rf_period());
                for (s, ion) in self.period_sum.iter_mut().zip(state.ions()) {
                    for k in 0..3 {
                        s[k] += ion.velocity[k];
                    }
                }
                self.period_n += 1;
                if t >= end - 0.5 * cfg.timestep {
                    let sums = std::mem::take(&mut self.period_sum);
                    let pn = self.period_n as f64;
                    for i in (0..n).filter(|&i| state.ions()[i].alive) {
                        let v = [sums[i][0] / pn, sums[i][1] / pn, sums[i][2] / pn];
                        self.add(state, i, v);
                    }
                    self.period_sum = vec![[0.0; 3]; n];
                    self.period_n = 0;
                    self.period_end = Some(end + cfg.trap.rf_period());
                }
            }
        }
        if t >= next - 0.5 * cfg.timestep {
            let counts = state.counts();
            let energies = species_energies(state, cfg);
            for (s, sp) in state.species().iter().enumerate() {
                let (sum, n) = self.acc.get(s).copied().unwrap_or((0.0, 0));
                let temperature = if n > 0 { sum / (3.0 * BOLTZMANN * n as f64) } else { 0.0 };
                self.rows.push(TemperatureRow {
                    time: t,
                    species: sp.name.clone(),
                    count: counts[s],
                    temperature,
                    e_kin: energies[s].kinetic,
                    e_pot: energies[s].potential,
                });
            }
            self.acc.iter_mut().for_each(|a| *a = (0.0, 0));
            self.next_emit = Some(next + self.interval);
        }
        Ok(())
    }
}

/// Secular temperature per species index over a window of snapshots.
///
/// Pseudopotential mode uses the raw velocities. In rf_full mode the window
/// is cut into RF periods and each ion's velocity is averaged over every
/// period before squaring, which removes the micromotion; the window must
/// then span at least five periods with at least two samples per period.
/// Species without ions in the window get `None`.
pub fn secular_temperature(
    window: &[Snapshot],
    species: &[IonSpecies],
    mode: TrapMode,
    rf_period: f64,
) -> Result<Vec<Option<f64>>> {
    if window.is_empty() {
        return Err(Error::InsufficientSamples("empty window".into()));
    }
    let mut acc = vec![(0.0, 0usize); species.len()];
    match mode {
        TrapMode::Pseudopotential => {
            for snap in window {
                for ion in snap.ions.iter().filter(|i| i.alive) {
                    let v2: f64 = ion.velocity.iter().map(|v| v * v).sum();
                    acc[ion.species].0 += species[ion.species].mass * v2;
                    acc[ion.species].1 += 1;
                }
            }
        }
        TrapMode::RfFull => {
            let t0 = window[0].time;
            let span = window.last().unwrap().time - t0;
            let periods = ((span + 1e-12 * rf_period) / rf_period).floor() as usize;
            if periods < 5 {
                return Err(Error::WindowTooShort(format!(
                    "{:.2} RF periods, need at least 5",
                    span / rf_period
                )));
            }
            let n = window[0].ions.len();
            let mut k = 0;
            for p in 0..periods {
                let end = t0 + (p + 1) as f64 * rf_period;
                let mut sum = vec![[0.0; 3]; n];
                let mut cnt = 0usize;
                let first = k;
                while k < window.len() && window[k].time < end - 1e-9 * rf_period {
                    for (s, ion) in sum.iter_mut().zip(&window[k].ions) {
                        for c in 0..3 {
                            s[c] += ion.velocity[c];
                        }
                    }
                    cnt += 1;
                    k += 1;
                }
                if cnt < 2 {
                    return Err(Error::InsufficientSamples("fewer than two samples per RF period".into()));
                }
                let last = &window[k - 1];
                for (i, s) in sum.iter().enumerate() {
                    let ion = &last.ions[i];
                    if !ion.alive || !window[first].ions[i].alive {
                        continue;
                    }
                    let v2: f64 = s.iter().map(|c| (c / cnt as f64).powi(2)).sum();
                    acc[ion.species].0 += species[ion.species].mass * v2;
                    acc[ion.species].1 += 1;
                }
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(sum, n)| if n > 0 { Some(sum / (3.0 * BOLTZMANN * n as f64)) } else { None })
        .collect())
}

/// Instantaneous temperature `m <v^2> / 3 k_B` per species from the
/// current velocities.
pub fn instantaneous_temperature(state: &EnsembleState) -> Vec<Option<f64>> {
    let snap = [Snapshot::of(state)];
    secular_temperature(&snap, state.species(), TrapMode::Pseudopotential, 1.0).unwrap()
}

/// Total energy `E_kin + E_pot` of the ensemble.
pub fn energy_of(state: &EnsembleState, cfg: &ForceConfig) -> f64 {
    total_energy(state, cfg).total()
}
