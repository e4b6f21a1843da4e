//! CODATA 2018 constants in SI units.

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const ELECTRON_MASS_U: f64 = 5.485_799_090_65e-4;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// `1 / (4 pi eps0)`
pub const COULOMB_CONSTANT: f64 = 1.0 / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY);

/// One wavenumber (cm^-1) expressed in joules.
pub const INVERSE_CM_IN_JOULE: f64 = PLANCK * SPEED_OF_LIGHT * 100.0;

/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;
