//! Molecular-dynamics engine for trapped ion ensembles.

pub mod forces;
pub mod heating;
pub mod integrator;
pub mod manipulation;
pub mod observe;
pub mod state;

pub use forces::{coulomb_forces, ExcitationDrive, ForceConfig, RfRamp, Sweep, TrapMode, MIN_PAIR_DISTANCE};
pub use heating::HeatingModel;
pub use integrator::{evolve, step, steps_for, total_energy, Beam, Cooling, Energy, Observer};
pub use manipulation::{eject_heavy, eject_light, kick_ion, ramp_extraction, relax, EscapeRecord, RemovalReport};
pub use observe::{
    instantaneous_temperature, secular_temperature, EnergyRecorder, Snapshot, SnapshotRecorder, TemperatureRecorder,
    TemperatureRow, Trajectory,
};
pub use state::{init_ensemble, EnsembleState, IonState, LossRecord};
