//! Stochastic heating: uniform velocity kicks and discrete gas collisions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::constants::BOLTZMANN;
use crate::error::{invalid, Result};
use crate::trap::{collision_rates, IonSpecies, NeutralGas};

/// Per-species heating applied after every integration step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeatingModel {
    /// Uniform heating rate per species index (K/s). Missing entries are 0.
    pub rates: Vec<f64>,
    /// Discrete elastic collisions with this gas.
    pub collisions: Option<NeutralGas>,
    /// Pressure-independent rate added to every species (K/s).
    pub floor: f64,
}

impl HeatingModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn uniform(rates: Vec<f64>) -> Self {
        Self { rates, collisions: None, floor: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.iter().any(|h| !(*h >= 0.0)) || !(self.floor >= 0.0) {
            return Err(invalid("heating rates must be >= 0"));
        }
        if let Some(g) = &self.collisions {
            g.validate()?;
        }
        Ok(())
    }

    /// Kick rate of species `s` including the floor (K/s).
    pub fn rate(&self, s: usize) -> f64 {
        self.rates.get(s).copied().unwrap_or(0.0) + self.floor
    }

    pub fn set_rate(&mut self, s: usize, h: f64) {
        if self.rates.len() <= s {
            self.rates.resize(s + 1, 0.0);
        }
        self.rates[s] = h;
    }

    /// Per-component velocity standard deviation for one step:
    /// `sigma^2 = 2 k_B h dt / (3 m)` injects `k_B h dt` of kinetic energy.
    pub fn kick_sigma(&self, s: usize, mass: f64, dt: f64) -> f64 {
        (2.0 * BOLTZMANN * self.rate(s) * dt / (3.0 * mass)).sqrt()
    }

    /// Elastic collision rate of `species` with the configured gas (1/s).
    pub fn collision_rate(&self, species: &IonSpecies) -> Result<f64> {
        match &self.collisions {
            None => Ok(0.0),
            Some(g) => Ok(collision_rates(species, 0.0, g)?.gamma_elastic),
        }
    }
}

/// Isotropic Gaussian kick with per-component deviation `sigma`.
pub(crate) fn gaussian_kick<R: Rng>(rng: &mut R, sigma: f64) -> [f64; 3] {
    let mut dv = [0.0; 3];
    for c in &mut dv {
        let g: f64 = StandardNormal.sample(rng);
        *c = sigma * g;
    }
    dv
}

/// Elastic collision with a neutral drawn from Maxwell-Boltzmann at the gas
/// temperature, isotropic scattering in the centre-of-mass frame.
pub fn collide<R: Rng>(rng: &mut R, v: [f64; 3], mass: f64, gas: &NeutralGas) -> [f64; 3] {
    let s = (BOLTZMANN * gas.temperature / gas.mass).sqrt();
    let vn = gaussian_kick(rng, s);
    let m_tot = mass + gas.mass;
    let mut vcm = [0.0; 3];
    let mut u2 = 0.0;
    for k in 0..3 {
        vcm[k] = (mass * v[k] + gas.mass * vn[k]) / m_tot;
        u2 += (v[k] - vn[k]).powi(2);
    }
    let n: [f64; 3] = UnitSphere.sample(rng);
    let w = gas.mass / m_tot * u2.sqrt();
    [vcm[0] + w * n[0], vcm[1] + w * n[1], vcm[2] + w * n[2]]
}
