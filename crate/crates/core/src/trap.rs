//! Closed-form trap and plasma calculators for linear RF traps.
//!
//! Heating and cooling rates are expressed as temperature rates in K/s
//! (energy per ion per second divided by `k_B`), the convention used in the
//! rate tables this crate reproduces.

use std::f64::consts::PI;

use crate::constants::{
    ATOMIC_MASS_UNIT, BOLTZMANN, COULOMB_CONSTANT, ELECTRON_MASS_U, ELEMENTARY_CHARGE,
    VACUUM_PERMITTIVITY,
};
use crate::error::{invalid, Error, Result};

/// Single-ion stability limit of the Mathieu `q` parameter.
pub const MATHIEU_Q_LIMIT: f64 = 0.9;

/// Coupling parameter at which a one-component plasma crystallizes.
pub const GAMMA_CRYSTAL: f64 = 170.0;

/// Electrode geometry and drive of a linear quadrupole trap.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapConfig {
    /// Distance from the trap axis to the electrodes (m).
    pub r0: f64,
    /// Axial geometry factor (m^-2).
    pub kappa: f64,
    /// RF angular frequency (rad/s).
    pub omega_rf: f64,
    /// RF amplitude (V).
    pub v_rf: f64,
    /// Endcap voltage (V).
    pub v_ec: f64,
    /// Static quadrupole voltage on the central electrodes (V).
    pub v_dc: f64,
    /// Static offset on the RF electrode pair (V).
    pub v_offset: f64,
}

impl TrapConfig {
    pub fn new(r0: f64, kappa: f64, omega_rf: f64, v_rf: f64, v_ec: f64) -> Result<Self> {
        let trap = Self { r0, kappa, omega_rf, v_rf, v_ec, v_dc: 0.0, v_offset: 0.0 };
        trap.validate()?;
        Ok(trap)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(invalid(format!("r0 must be positive, got {}", self.r0)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.omega_rf > 0.0 && self.omega_rf.is_finite()) {
            return Err(invalid(format!("omega_rf must be positive, got {}", self.omega_rf)));
        }
        for (name, v) in [
            ("v_rf", self.v_rf),
            ("v_ec", self.v_ec),
            ("v_dc", self.v_dc),
            ("v_offset", self.v_offset),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Total static quadrupole voltage: the offset on the RF pair and the
    /// applied `V_DC` produce the same `(x^2 - y^2)` potential shape.
    pub fn static_quadrupole(&self) -> f64 {
        self.v_dc + self.v_offset
    }

    pub fn rf_period(&self) -> f64 {
        2.0 * PI / self.omega_rf
    }

    /// Copy of this trap with `v_rf` chosen so that `species` has the given
    /// radial secular angular frequency.
    pub fn calibrated_to_radial(&self, species: &IonSpecies, omega_r: f64) -> Self {
        let mut trap = self.clone();
        trap.v_rf = v_rf_for_radial_frequency(self, species, omega_r);
        trap
    }
}

/// Whether an ion species is directly laser cooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    LaserCooled,
    Sympathetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
    pub role: Role,
    /// Laser-cooling friction coefficient (kg/s), zero when not laser cooled.
    pub beta: f64,
    /// Constant axial light-pressure force (N).
    pub light_pressure: f64,
}

impl IonSpecies {
    /// A sympathetically cooled species from mass in atomic units and charge
    /// number.
    pub fn new(name: impl Into<String>, mass_u: f64, charge_number: i32) -> Self {
        Self {
            name: name.into(),
            mass: mass_u * ATOMIC_MASS_UNIT,
            charge: charge_number as f64 * ELEMENTARY_CHARGE,
            role: Role::Sympathetic,
            beta: 0.0,
            light_pressure: 0.0,
        }
    }

    /// Neutral-atom mass minus the missing electrons.
    pub fn from_neutral_mass(name: impl Into<String>, neutral_mass_u: f64, charge_number: i32) -> Self {
        Self::new(name, neutral_mass_u - charge_number as f64 * ELECTRON_MASS_U, charge_number)
    }

    /// Marks the species as laser cooled with friction `beta / m` in 1/s.
    pub fn laser_cooled(mut self, beta_over_m: f64) -> Self {
        self.role = Role::LaserCooled;
        self.beta = beta_over_m * self.mass;
        self
    }

    pub fn with_light_pressure(mut self, force: f64) -> Self {
        self.light_pressure = force;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid(format!("species {}: mass must be positive", self.name)));
        }
        if self.charge == 0.0 || !self.charge.is_finite() {
            return Err(invalid(format!("species {}: charge must be nonzero", self.name)));
        }
        if !(self.beta >= 0.0) {
            return Err(invalid(format!("species {}: beta must be >= 0", self.name)));
        }
        Ok(())
    }

    pub fn mass_u(&self) -> f64 {
        self.mass / ATOMIC_MASS_UNIT
    }

    pub fn charge_number(&self) -> i32 {
        (self.charge / ELEMENTARY_CHARGE).round() as i32
    }

    pub fn mass_to_charge(&self) -> f64 {
        self.mass / self.charge
    }

    pub fn beta_over_m(&self) -> f64 {
        self.beta / self.mass
    }

    pub fn is_laser_cooled(&self) -> bool {
        self.role == Role::LaserCooled
    }
}

/// Neutral collision partner or reactant.
///
/// The polarizability is carried in both SI form (C m^2 / V), consumed by
/// the collision-heating rates, and as a polarizability volume (m^3),
/// consumed by the Langevin capture rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralGas {
    pub name: String,
    /// kg
    pub mass: f64,
    pub polarizability_si: f64,
    pub polarizability_volume: f64,
    /// Pa
    pub pressure: f64,
    /// K
    pub temperature: f64,
}

impl NeutralGas {
    pub fn new(
        name: impl Into<String>,
        mass_u: f64,
        polarizability_volume: f64,
        pressure: f64,
        temperature: f64,
    ) -> Self {
        Self {
            name: name.into(),
            mass: mass_u * ATOMIC_MASS_UNIT,
            polarizability_si: 4.0 * PI * VACUUM_PERMITTIVITY * polarizability_volume,
            polarizability_volume,
            pressure,
            temperature,
        }
    }

    pub fn with_pressure(mut self, pressure: f64) -> Self {
        self.pressure = pressure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.polarizability_volume > 0.0 && self.polarizability_si > 0.0) {
            return Err(invalid(format!("gas {}: polarizability must be positive", self.name)));
        }
        let expected = 4.0 * PI * VACUUM_PERMITTIVITY * self.polarizability_volume;
        if ((self.polarizability_si - expected) / expected).abs() > 1e-9 {
            return Err(invalid(format!(
                "gas {}: SI polarizability and polarizability volume disagree",
                self.name
            )));
        }
        if !(self.pressure >= 0.0) {
            return Err(invalid(format!("gas {}: pressure must be >= 0", self.name)));
        }
        if !(self.mass > 0.0) {
            return Err(invalid(format!("gas {}: mass must be positive", self.name)));
        }
        Ok(())
    }

    /// Number density from the ideal gas law (m^-3).
    pub fn number_density(&self) -> Result<f64> {
        if self.pressure == 0.0 {
            return Ok(0.0);
        }
        if !(self.temperature > 0.0) {
            return Err(Error::MissingEnvironment(format!(
                "gas {} has pressure but no temperature",
                self.name
            )));
        }
        Ok(self.pressure / (BOLTZMANN * self.temperature))
    }
}

/// Mathieu stability parameter `q = 2 Q V_RF / (m Omega^2 r0^2)`.
pub fn mathieu_q(trap: &TrapConfig, species: &IonSpecies) -> f64 {
    2.0 * species.charge * trap.v_rf / (species.mass * trap.omega_rf.powi(2) * trap.r0.powi(2))
}

pub fn is_stable(q: f64) -> bool {
    q.abs() < MATHIEU_Q_LIMIT
}

/// Single-particle secular angular frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularFrequencies {
    pub omega0: f64,
    pub omega_r: f64,
    pub omega_z: f64,
}

fn omega0_sq(trap: &TrapConfig, species: &IonSpecies) -> f64 {
    let w0 = species.charge * trap.v_rf
        / (std::f64::consts::SQRT_2 * species.mass * trap.omega_rf * trap.r0.powi(2));
    w0 * w0
}

fn omega_z_sq(trap: &TrapConfig, species: &IonSpecies) -> f64 {
    2.0 * trap.kappa * species.charge * trap.v_ec / species.mass
}

pub fn secular_frequencies(trap: &TrapConfig, species: &IonSpecies) -> Result<SecularFrequencies> {
    let w0_sq = omega0_sq(trap, species);
    let wz_sq = omega_z_sq(trap, species);
    let margin = w0_sq - 0.5 * wz_sq;
    if margin <= 0.0 {
        return Err(Error::RadiallyDeconfined { species: species.name.clone(), margin });
    }
    Ok(SecularFrequencies { omega0: w0_sq.sqrt(), omega_r: margin.sqrt(), omega_z: wz_sq.max(0.0).sqrt() })
}

/// Squared pseudopotential frequencies along x, y, z including the static
/// quadrupole. Negative entries mark an unstable direction.
pub fn axis_frequencies_sq(trap: &TrapConfig, species: &IonSpecies) -> [f64; 3] {
    let w0_sq = omega0_sq(trap, species);
    let wz_sq = omega_z_sq(trap, species);
    let stat = species.charge * trap.static_quadrupole() / (species.mass * trap.r0.powi(2));
    [w0_sq - 0.5 * wz_sq + stat, w0_sq - 0.5 * wz_sq - stat, wz_sq]
}

/// RF amplitude that gives `species` the radial angular frequency `omega_r`.
pub fn v_rf_for_radial_frequency(trap: &TrapConfig, species: &IonSpecies, omega_r: f64) -> f64 {
    let w0 = (omega_r * omega_r + 0.5 * omega_z_sq(trap, species)).sqrt();
    w0 * std::f64::consts::SQRT_2 * species.mass * trap.omega_rf * trap.r0.powi(2) / species.charge
}

/// Static quadrupole voltage at which the weaker radial direction of a
/// single ion loses confinement in the pseudopotential.
pub fn ejection_threshold_v_dc(trap: &TrapConfig, species: &IonSpecies) -> f64 {
    let margin = omega0_sq(trap, species) - 0.5 * omega_z_sq(trap, species);
    margin * species.mass * trap.r0.powi(2) / species.charge - trap.v_offset
}

/// Zero-temperature plasma density and coupling estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasmaEstimate {
    /// Number density (m^-3).
    pub density: f64,
    /// Mean spacing `n^(-1/3)` (m).
    pub spacing: f64,
    /// Coupling parameter at the requested temperature.
    pub gamma: f64,
    /// Temperature where the coupling parameter reaches 170 (K).
    pub t_crystal: f64,
}

/// Number density `eps0 V_RF^2 / (m Omega^2 r0^4)` of the cold plasma.
pub fn plasma_density(trap: &TrapConfig, species: &IonSpecies) -> f64 {
    VACUUM_PERMITTIVITY * trap.v_rf.powi(2)
        / (species.mass * trap.omega_rf.powi(2) * trap.r0.powi(4))
}

/// `Gamma = Q^2 / (4 pi eps0 a k_B T)`.
pub fn coupling_parameter(charge: f64, spacing: f64, temperature: f64) -> f64 {
    COULOMB_CONSTANT * charge * charge / (spacing * BOLTZMANN * temperature)
}

/// Temperature at which the coupling parameter equals `gamma`.
pub fn temperature_for_gamma(charge: f64, spacing: f64, gamma: f64) -> f64 {
    COULOMB_CONSTANT * charge * charge / (spacing * BOLTZMANN * gamma)
}

pub fn plasma_estimate(trap: &TrapConfig, species: &IonSpecies, temperature: f64) -> Result<PlasmaEstimate> {
    if !(temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    let density = plasma_density(trap, species);
    if !(density > 0.0) {
        return Err(invalid("plasma density vanishes (V_RF = 0)"));
    }
    let spacing = density.powf(-1.0 / 3.0);
    Ok(PlasmaEstimate {
        density,
        spacing,
        gamma: coupling_parameter(species.charge, spacing, temperature),
        t_crystal: temperature_for_gamma(species.charge, spacing, GAMMA_CRYSTAL),
    })
}

/// Semi-axes of the uniformly charged zero-temperature spheroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spheroid {
    /// Radial semi-axis (m).
    pub radius: f64,
    /// Axial semi-axis (m).
    pub half_length: f64,
}

/// Axial depolarization factor of a spheroid with aspect ratio
/// `alpha = half_length / radius`.
fn axial_depolarization(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-6 {
        1.0 / 3.0
    } else if alpha > 1.0 {
        let e = (1.0 - 1.0 / (alpha * alpha)).sqrt();
        (1.0 - e * e) / e.powi(3) * (e.atanh() - e)
    } else {
        let e = (1.0 / (alpha * alpha) - 1.0).sqrt();
        (1.0 + e * e) / e.powi(3) * (e - e.atan())
    }
}

/// Shape of a cold cloud of `count` ions of `species`, from the balance of
/// the uniform space charge against the harmonic pseudopotential.
pub fn zero_temperature_spheroid(trap: &TrapConfig, species: &IonSpecies, count: usize) -> Result<Spheroid> {
    let freqs = secular_frequencies(trap, species)?;
    let density = plasma_density(trap, species);
    let wr2 = freqs.omega_r * freqs.omega_r;
    let wz2 = freqs.omega_z * freqs.omega_z;
    let target = wz2 / (2.0 * wr2 + wz2);
    let volume = count.max(1) as f64 / density;
    let alpha = if target <= 0.0 {
        // No axial confinement: approximate by a very long cigar.
        1e3
    } else {
        // depolarization decreases monotonically with alpha
        let (mut lo, mut hi) = (1e-3_f64, 1e3_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if axial_depolarization(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    };
    let radius = (3.0 * volume / (4.0 * PI * alpha)).cbrt();
    Ok(Spheroid { radius, half_length: alpha * radius })
}

/// Ratio `r1/r2 = (Q2 m1 / (Q1 m2))^(1/2)` between the outer radius of the
/// lower mass-to-charge species and the inner radius of the other.
pub fn radius_ratio(inner: &IonSpecies, outer: &IonSpecies) -> Result<f64> {
    if inner.mass_to_charge() > outer.mass_to_charge() {
        return Err(Error::MassToChargeOrder { inner: inner.name.clone(), outer: outer.name.clone() });
    }
    Ok((outer.charge * inner.mass / (inner.charge * outer.mass)).sqrt())
}

/// Ion-neutral elastic collision rates from the polarization potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionRates {
    /// Heating rate per ion (K/s); negative when the gas is colder.
    pub heating_rate: f64,
    /// Momentum-transfer collision rate per ion (1/s).
    pub gamma_elastic: f64,
    /// Mean energy transfer per collision (K).
    pub mean_transfer: f64,
}

/// Factor in the classical polarization-potential collision integrals.
const COLLISION_FACTOR: f64 = 2.21;

/// Collision heating and momentum-transfer rates of `ion` (at
/// `ion_temperature`) in `gas`. Uses the SI polarizability.
pub fn collision_rates(ion: &IonSpecies, ion_temperature: f64, gas: &NeutralGas) -> Result<CollisionRates> {
    let n_n = gas.number_density()?;
    let mu = reduced_mass(ion.mass, gas.mass);
    let e = ion.charge.abs();
    let alpha = gas.polarizability_si;
    let gamma_elastic = COLLISION_FACTOR / 4.0 * e / VACUUM_PERMITTIVITY * n_n * (alpha / mu).sqrt();
    // Expressed directly in K/s, i.e. with the k_B factor divided out.
    let heating_rate = 3.0 * COLLISION_FACTOR / 4.0 * e / VACUUM_PERMITTIVITY
        * n_n
        * (alpha * mu).sqrt()
        * (gas.temperature - ion_temperature)
        / (gas.mass + ion.mass);
    let mean_transfer = if gamma_elastic > 0.0 { heating_rate / gamma_elastic } else { 0.0 };
    Ok(CollisionRates { heating_rate, gamma_elastic, mean_transfer })
}

pub fn reduced_mass(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// Langevin capture rate coefficient `Q sqrt(pi alpha_v / (eps0 mu))`
/// (m^3/s). Uses the polarizability volume.
pub fn langevin_rate(ion: &IonSpecies, gas: &NeutralGas) -> f64 {
    let mu = reduced_mass(ion.mass, gas.mass);
    ion.charge.abs() * (PI * gas.polarizability_volume / (VACUUM_PERMITTIVITY * mu)).sqrt()
}

/// Laser-cooling rate `-(beta/m) T` (K/s) at secular temperature `t`.
pub fn cooling_rate(species: &IonSpecies, temperature: f64) -> f64 {
    -species.beta_over_m() * temperature
}

/// Temperature where laser cooling balances a heating rate `h` (K/s).
pub fn equilibrium_temperature(species: &IonSpecies, heating_rate: f64) -> Result<f64> {
    if species.beta <= 0.0 {
        return Err(Error::UnboundedTemperature(species.name.clone()));
    }
    Ok(heating_rate / species.beta_over_m())
}

/// Heating rate (K/s) that holds a laser-cooled species at `temperature`.
pub fn heating_for_temperature(species: &IonSpecies, temperature: f64) -> Result<f64> {
    if species.beta <= 0.0 {
        return Err(Error::UnboundedTemperature(species.name.clone()));
    }
    Ok(temperature * species.beta_over_m())
}

/// One row of a multi-species heating/cooling ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesRateRow {
    pub species: IonSpecies,
    pub count: usize,
    /// K
    pub temperature: f64,
    /// K/s, filled in by [`energy_balance`] for the laser-cooled row.
    pub cooling_rate: f64,
    /// K/s
    pub heating_rate: f64,
}

impl SpeciesRateRow {
    pub fn new(species: IonSpecies, count: usize, temperature: f64, heating_rate: f64) -> Self {
        let cooling_rate = if species.is_laser_cooled() { cooling_rate(&species, temperature) } else { 0.0 };
        Self { species, count, temperature, cooling_rate, heating_rate }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    /// `sum_j (c_j + h_j) N_j` in K/s (summed over ions).
    pub residual: f64,
    /// Gross laser-cooling power `|c_LC| N_LC` in K/s.
    pub gross_cooling: f64,
    /// Laser-cooled temperature implied by the tabulated heating rates (K).
    pub lc_temperature_predicted: f64,
    /// Cooling rate of the laser-cooled row (K/s).
    pub lc_cooling_rate: f64,
}

/// Steady-state energy bookkeeping of a multi-species ensemble.
///
/// The predicted laser-cooled temperature solves
/// `(beta/m) T_LC N_LC = sum_j h_j N_j`.
pub fn energy_balance(rows: &[SpeciesRateRow]) -> Result<EnergyBalance> {
    let lc: Vec<&SpeciesRateRow> = rows.iter().filter(|r| r.species.is_laser_cooled()).collect();
    if lc.len() != 1 {
        return Err(Error::LaserCooledRows(lc.len()));
    }
    let lc = lc[0];
    let lc_cooling_rate = cooling_rate(&lc.species, lc.temperature);
    let mut residual = 0.0;
    let mut heating_total = 0.0;
    for row in rows {
        let c = if row.species.is_laser_cooled() { lc_cooling_rate } else { 0.0 };
        residual += (c + row.heating_rate) * row.count as f64;
        heating_total += row.heating_rate * row.count as f64;
    }
    let lc_temperature_predicted = if lc.count == 0 {
        f64::NAN
    } else {
        heating_total / (lc.count as f64 * lc.species.beta_over_m())
    };
    Ok(EnergyBalance {
        residual,
        gross_cooling: lc_cooling_rate.abs() * lc.count as f64,
        lc_temperature_predicted,
        lc_cooling_rate,
    })
}

/// Common heating rate of coolant and co-trapped isotopes from a fitted
/// two-species equilibrium: `(beta/m) T_LC,0 N_LC,0 / (N_LC,0 + N_SC2,0)`.
pub fn common_heating_rate(beta_over_m: f64, t_lc0: f64, n_lc0: usize, n_sc2_0: usize) -> f64 {
    beta_over_m * t_lc0 * n_lc0 as f64 / (n_lc0 + n_sc2_0) as f64
}
