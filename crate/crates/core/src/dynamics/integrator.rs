//! Velocity-Verlet integration with dissipative and stochastic substeps.

use rand::Rng;

use crate::error::{Error, Result};
use crate::trap::IonSpecies;

use super::forces::{
    coulomb_energy, coulomb_energy_per_ion, gather, pseudo_potential_energy, total_forces, ForceCache,
    ForceConfig,
};
use super::heating::{collide, gaussian_kick, HeatingModel};
use super::state::EnsembleState;

/// Laser cooling and optional isotropic damping.
#[derive(Debug, Clone, PartialEq)]
pub struct Cooling {
    /// Friction `beta / m` along the beam per species index (1/s).
    pub beta_over_m: Vec<f64>,
    /// Constant force along the beam per species index (N).
    pub light_pressure: Vec<f64>,
    /// Isotropic velocity damping applied to every ion (1/s).
    pub damping: f64,
    pub beam: Beam,
}

/// Geometry of the cooling light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beam {
    /// One beam along a unit vector; friction `-beta (v.k) k` and light
    /// pressure act along it.
    Axis([f64; 3]),
    /// Friction `beta / 3` on each Cartesian axis, light pressure along z.
    /// Dissipates `beta <v^2> / 3`, the same power as a single beam under
    /// equipartition, but reaches every normal mode equally.
    ThreeAxis,
}

impl Beam {
    fn light_axis(self) -> [f64; 3] {
        match self {
            Beam::Axis(k) => k,
            Beam::ThreeAxis => [0.0, 0.0, 1.0],
        }
    }
}

impl Default for Cooling {
    fn default() -> Self {
        Self { beta_over_m: Vec::new(), light_pressure: Vec::new(), damping: 0.0, beam: Beam::Axis([0.0, 0.0, 1.0]) }
    }
}

impl Cooling {
    pub fn off() -> Self {
        Self::default()
    }

    /// Cooling of every laser-cooled species in the table, with light pressure.
    pub fn from_species(species: &[IonSpecies]) -> Self {
        Self {
            beta_over_m: species.iter().map(|s| if s.is_laser_cooled() { s.beta_over_m() } else { 0.0 }).collect(),
            light_pressure: species
                .iter()
                .map(|s| if s.is_laser_cooled() { s.light_pressure } else { 0.0 })
                .collect(),
            ..Self::default()
        }
    }

    /// Points the cooling beam along `axis` (normalized here).
    pub fn with_axis(mut self, axis: [f64; 3]) -> Self {
        let n = axis.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.beam = Beam::Axis([axis[0] / n, axis[1] / n, axis[2] / n]);
        self
    }

    pub fn three_axis(mut self) -> Self {
        self.beam = Beam::ThreeAxis;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    fn beta_over_m(&self, s: usize) -> f64 {
        self.beta_over_m.get(s).copied().unwrap_or(0.0)
    }
}

fn forces_now(state: &mut EnsembleState, cfg: &ForceConfig, lp: &[f64], axis: [f64; 3]) -> Result<Vec<[f64; 3]>> {
    if let Some(c) = state.cache.take() {
        if c.time == state.time() && c.config == *cfg && c.light_pressure == lp && c.axis == axis {
            return Ok(c.force);
        }
    }
    cfg.validate(state)?;
    total_forces(state, cfg, lp, axis, state.time())
}

/// Advances the state by one timestep.
///
/// Order: half kick, drift, loss check, force update, half kick, then laser
/// friction along the beam (exact exponential), isotropic damping, heating kicks and
/// gas collisions.
pub fn step(state: &mut EnsembleState, cfg: &ForceConfig, cooling: &Cooling, heating: &HeatingModel) -> Result<()> {
    let dt = cfg.timestep;
    let lp = &cooling.light_pressure;
    let axis = cooling.beam.light_axis();
    let f0 = forces_now(state, cfg, lp, axis)?;
    let masses: Vec<f64> = state.species().iter().map(|s| s.mass).collect();
    {
        let ions = state.ions_mut();
        for (ion, f) in ions.iter_mut().zip(&f0).filter(|(i, _)| i.alive) {
            let inv_m = 1.0 / masses[ion.species];
            for k in 0..3 {
                ion.velocity[k] += 0.5 * dt * f[k] * inv_m;
                ion.position[k] += dt * ion.velocity[k];
            }
        }
    }
    state.advance_time(dt);
    let t = state.time();
    let r0 = cfg.trap.r0;
    let mut lost = Vec::new();
    for (i, ion) in state.ions().iter().enumerate().filter(|(_, i)| i.alive) {
        let p = ion.position;
        if !(p.iter().chain(&ion.velocity).all(|c| c.is_finite())) {
            return Err(Error::NonFinite { ion: i, time: t });
        }
        if (p[0] * p[0] + p[1] * p[1]).sqrt() > r0 || p[2].abs() > state.axial_limit {
            lost.push(i);
        }
    }
    for i in lost {
        state.mark_lost(i);
    }
    let f1 = total_forces(state, cfg, lp, axis, t)?;

    let coll_rates: Vec<f64> = state
        .species()
        .iter()
        .map(|s| heating.collision_rate(s))
        .collect::<Result<_>>()?;
    let sigmas: Vec<f64> = state
        .species()
        .iter()
        .enumerate()
        .map(|(s, sp)| heating.kick_sigma(s, sp.mass, dt))
        .collect();
    let share = if cooling.beam == Beam::ThreeAxis { 1.0 / 3.0 } else { 1.0 };
    let frictions: Vec<f64> = (0..masses.len()).map(|s| (-share * cooling.beta_over_m(s) * dt).exp()).collect();
    let damp = (-cooling.damping * dt).exp();
    let gas = heating.collisions.clone();

    let mut rng = state.rng.clone();
    {
        let ions = state.ions_mut();
        for (ion, f) in ions.iter_mut().zip(&f1).filter(|(i, _)| i.alive) {
            let s = ion.species;
            let inv_m = 1.0 / masses[s];
            for k in 0..3 {
                ion.velocity[k] += 0.5 * dt * f[k] * inv_m;
            }
            if frictions[s] != 1.0 {
                match cooling.beam {
                    Beam::Axis(k) => {
                        let vp: f64 = (0..3).map(|c| ion.velocity[c] * k[c]).sum();
                        for c in 0..3 {
                            ion.velocity[c] += (frictions[s] - 1.0) * vp * k[c];
                        }
                    }
                    Beam::ThreeAxis => {
                        for v in &mut ion.velocity {
                            *v *= frictions[s];
                        }
                    }
                }
            }
            if damp != 1.0 {
                for v in &mut ion.velocity {
                    *v *= damp;
                }
            }
            if sigmas[s] > 0.0 {
                let dv = gaussian_kick(&mut rng, sigmas[s]);
                for k in 0..3 {
                    ion.velocity[k] += dv[k];
                }
            }
            if coll_rates[s] > 0.0 {
                let p = -(-coll_rates[s] * dt).exp_m1();
                if rng.gen::<f64>() < p {
                    ion.velocity = collide(&mut rng, ion.velocity, masses[s], gas.as_ref().unwrap());
                }
            }
        }
    }
    state.rng = rng;
    state.cache = Some(ForceCache { time: t, config: cfg.clone(), light_pressure: lp.clone(), axis, force: f1 });
    Ok(())
}

/// Receives the state every `stride` steps during [`evolve`].
pub trait Observer {
    fn stride(&self) -> usize {
        1
    }
    fn observe(&mut self, state: &EnsembleState, cfg: &ForceConfig) -> Result<()>;
}

/// Number of steps [`evolve`] takes for `duration`.
pub fn steps_for(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(1)
}

/// Repeated [`step`] calls covering `duration`. Returns the number of steps.
pub fn evolve(
    state: &mut EnsembleState,
    cfg: &ForceConfig,
    cooling: &Cooling,
    heating: &HeatingModel,
    duration: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<usize> {
    if !(duration > 0.0) {
        return Err(crate::error::invalid("duration must be positive"));
    }
    cfg.validate(state)?;
    heating.validate()?;
    let n = steps_for(duration, cfg.timestep);
    for k in 1..=n {
        step(state, cfg, cooling, heating)?;
        for obs in observers.iter_mut() {
            if k % obs.stride().max(1) == 0 {
                obs.observe(state, cfg)?;
            }
        }
    }
    Ok(n)
}

/// Kinetic and potential energy of the ensemble (J). The trap part is the
/// pseudopotential energy (also in rf_full mode, where it is the secular
/// approximation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

pub fn total_energy(state: &EnsembleState, cfg: &ForceConfig) -> Energy {
    let per = species_energies(state, cfg);
    let coul = if cfg.coulomb {
        let s = gather(state);
        coulomb_energy(&s.x, &s.y, &s.z, &s.q)
    } else {
        0.0
    };
    Energy {
        kinetic: per.iter().map(|e| e.kinetic).sum(),
        potential: per.iter().map(|e| e.potential).sum::<f64>() - per.iter().map(|e| e.coulomb).sum::<f64>() + coul,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpeciesEnergy {
    pub kinetic: f64,
    /// Trap energy plus the Coulomb share of the species.
    pub potential: f64,
    pub coulomb: f64,
}

/// Energies summed per species index; each pair's Coulomb energy is split
/// evenly between its partners.
pub fn species_energies(state: &EnsembleState, cfg: &ForceConfig) -> Vec<SpeciesEnergy> {
    let mut out = vec![SpeciesEnergy::default(); state.species().len()];
    let trap = cfg.trap_at(state.time());
    let s = gather(state);
    let coul = if cfg.coulomb { coulomb_energy_per_ion(&s.x, &s.y, &s.z, &s.q) } else { vec![0.0; s.idx.len()] };
    for (k, &i) in s.idx.iter().enumerate() {
        let ion = &state.ions()[i];
        let sp = &state.species()[ion.species];
        let v2: f64 = ion.velocity.iter().map(|v| v * v).sum();
        let e = &mut out[ion.species];
        e.kinetic += 0.5 * sp.mass * v2;
        e.potential += pseudo_potential_energy(&trap, sp, ion.position) + coul[k];
        e.coulomb += coul[k];
    }
    out
}
