use thiserror::Error;

/// Errors raised across the simulator and the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("species `{species}` is radially deconfined (omega0^2 - omega_z^2/2 = {margin:e} rad^2/s^2)")]
    RadiallyDeconfined { species: String, margin: f64 },

    #[error("no equilibrium temperature: species `{0}` has no laser cooling (beta = 0)")]
    UnboundedTemperature(String),

    #[error("energy balance needs exactly one laser-cooled row, found {0}")]
    LaserCooledRows(usize),

    #[error("ordering violated: inner species must have the lower mass-to-charge ratio ({inner} vs {outer})")]
    MassToChargeOrder { inner: String, outer: String },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("ion index {index} out of range ({len} ions)")]
    IonIndex { index: usize, len: usize },

    #[error("ion {0} is not alive")]
    DeadIon(usize),

    #[error("non-finite state for ion {ion} at t = {time:e} s")]
    NonFinite { ion: usize, time: f64 },

    #[error("ions {a} and {b} closer than 100 nm ({distance:e} m) at t = {time:e} s")]
    PairCollapse { a: usize, b: usize, distance: f64, time: f64 },

    #[error("timestep {dt:e} s exceeds the limit {limit:e} s for {mode} mode")]
    TimestepTooLarge { dt: f64, limit: f64, mode: &'static str },

    #[error("observation window too short: {0}")]
    WindowTooShort(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit failed: {reason} (residual {residual:e})")]
    FitFailed { reason: String, residual: f64 },

    #[error("unknown species `{0}`")]
    UnknownSpecies(String),

    #[error("unknown level (v={v}, J={j})")]
    UnknownLevel { v: u32, j: u32 },

    #[error("selection rule violated for line (v={v}, J={j}) -> (v={v2}, J={j2}): |dJ| must be 1")]
    SelectionRule { v: u32, j: u32, v2: u32, j2: u32 },

    #[error("stiff system: {steps} RK4 steps would be required (limit {limit})")]
    Stiff { steps: u64, limit: u64 },

    #[error("missing environment data: {0}")]
    MissingEnvironment(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("at t = {time:e} s: {source}")]
    Scenario {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
