use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constants::BOLTZMANN;
use crate::error::{invalid, Error, Result};
use crate::trap::{plasma_density, zero_temperature_spheroid, IonSpecies, TrapConfig};

use super::forces::ForceCache;

/// Ratio between the loss boundary on the axis and the initial crystal
/// half-length.
pub const AXIAL_LOSS_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Index into the ensemble species table.
    pub species: usize,
    pub alive: bool,
}

/// An ion that crossed the loss boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub ion: usize,
    pub species: usize,
    pub time: f64,
    pub position: [f64; 3],
}

/// The mutable state evolved by the engine.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    ions: Vec<IonState>,
    species: Vec<IonSpecies>,
    time: f64,
    pub(crate) rng: ChaCha8Rng,
    /// Ions with `|z|` beyond this are lost (m).
    pub axial_limit: f64,
    pub(crate) cache: Option<ForceCache>,
    losses: Vec<LossRecord>,
}

impl EnsembleState {
    /// Builds a state from explicit ions. Fails on an empty ion list or an
    /// out-of-range species index.
    pub fn from_ions(ions: Vec<IonState>, species: Vec<IonSpecies>, seed: u64) -> Result<Self> {
        if ions.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        for s in &species {
            s.validate()?;
        }
        if let Some(bad) = ions.iter().find(|i| i.species >= species.len()) {
            return Err(invalid(format!("species index {} out of range", bad.species)));
        }
        let zmax = ions.iter().map(|i| i.position[2].abs()).fold(0.0, f64::max);
        Ok(Self {
            ions,
            species,
            time: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            axial_limit: (AXIAL_LOSS_FACTOR * zmax).max(1e-3),
            cache: None,
            losses: Vec::new(),
        })
    }

    pub fn ions(&self) -> &[IonState] {
        &self.ions
    }

    /// Mutable access to the ions; drops any cached forces.
    pub fn ions_mut(&mut self) -> &mut [IonState] {
        self.cache = None;
        &mut self.ions
    }

    pub fn species(&self) -> &[IonSpecies] {
        &self.species
    }

    pub fn species_of(&self, ion: usize) -> &IonSpecies {
        &self.species[self.ions[ion].species]
    }

    /// Index of the species called `name`.
    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    /// Index of `species`, appending it to the table when absent.
    pub fn ensure_species(&mut self, species: &IonSpecies) -> usize {
        match self.species_index(&species.name) {
            Some(i) => i,
            None => {
                self.species.push(species.clone());
                self.species.len() - 1
            }
        }
    }

    /// Replaces the properties of a species in the table.
    pub fn set_species(&mut self, index: usize, species: IonSpecies) {
        self.cache = None;
        self.species[index] = species;
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn advance_time(&mut self, dt: f64) {
        self.time += dt;
    }

    /// Restarts the clock at zero (e.g. after preparation).
    pub fn reset_clock(&mut self) {
        self.time = 0.0;
        self.cache = None;
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn losses(&self) -> &[LossRecord] {
        &self.losses
    }

    pub(crate) fn mark_lost(&mut self, ion: usize) {
        let st = &mut self.ions[ion];
        st.alive = false;
        self.losses.push(LossRecord { ion, species: st.species, time: self.time, position: st.position });
        self.cache = None;
    }

    /// Kills an ion without logging it as an escape (e.g. photodestruction).
    pub fn remove_ion(&mut self, ion: usize) {
        self.ions[ion].alive = false;
        self.cache = None;
    }

    pub fn alive_count(&self) -> usize {
        self.ions.iter().filter(|i| i.alive).count()
    }

    /// Alive ions per species index.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.species.len()];
        for ion in self.ions.iter().filter(|i| i.alive) {
            c[ion.species] += 1;
        }
        c
    }

    pub fn count_of(&self, name: &str) -> usize {
        self.species_index(name).map_or(0, |s| self.counts()[s])
    }
}

/// Random ensemble filling the cold-plasma spheroid of the trap.
///
/// Ions are placed uniformly with a minimum separation of a third of the
/// mean spacing; velocities are Maxwell-Boltzmann at `initial_temperature`.
pub fn init_ensemble(
    counts: &[(IonSpecies, usize)],
    trap: &TrapConfig,
    seed: u64,
    initial_temperature: f64,
) -> Result<EnsembleState> {
    trap.validate()?;
    let total: usize = counts.iter().map(|c| c.1).sum();
    if total == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if !(initial_temperature >= 0.0) {
        return Err(invalid("initial temperature must be >= 0"));
    }
    let species: Vec<IonSpecies> = counts.iter().map(|c| c.0.clone()).collect();
    for s in &species {
        s.validate()?;
    }
    // Shape from the dominant species, volume from all of them.
    let dominant = counts.iter().max_by_key(|c| c.1).map(|c| &c.0).unwrap();
    let shape = zero_temperature_spheroid(trap, dominant, 1000)?;
    let alpha = shape.half_length / shape.radius;
    let volume: f64 = counts.iter().map(|(s, n)| *n as f64 / plasma_density(trap, s)).sum();
    let radius = (3.0 * volume / (4.0 * PI * alpha)).cbrt();
    let half_length = alpha * radius;
    let min_sep = (volume / total as f64).cbrt() / 3.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ions: Vec<IonState> = Vec::with_capacity(total);
    for (si, (sp, n)) in counts.iter().enumerate() {
        let sigma = (BOLTZMANN * initial_temperature / sp.mass).sqrt();
        for _ in 0..*n {
            let mut pos;
            let mut tries = 0;
            loop {
                pos = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                tries += 1;
                if pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2] > 1.0 {
                    continue;
                }
                pos = [pos[0] * radius, pos[1] * radius, pos[2] * half_length];
                let crowded = ions.iter().any(|o| {
                    let d = [o.position[0] - pos[0], o.position[1] - pos[1], o.position[2] - pos[2]];
                    d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < min_sep * min_sep
                });
                if !crowded || tries > 10_000 {
                    break;
                }
            }
            let mut vel = [0.0; 3];
            if sigma > 0.0 {
                for v in &mut vel {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v = sigma * g;
                }
            }
            ions.push(IonState { position: pos, velocity: vel, species: si, alive: true });
        }
    }
    let mut state = EnsembleState::from_ions(ions, species, seed)?;
    state.rng = rng;
    state.axial_limit = (AXIAL_LOSS_FACTOR * half_length).max(10.0 * radius);
    Ok(state)
}
