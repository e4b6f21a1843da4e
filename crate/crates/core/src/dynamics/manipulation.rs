//! Operations acting on a prepared ensemble: kicks, RF-ramp extraction and
//! selective species removal.

use std::f64::consts::PI;

use log::warn;

use crate::error::{invalid, Error, Result};
use crate::trap::secular_frequencies;

use super::forces::{ExcitationDrive, ForceConfig, RfRamp};
use super::heating::HeatingModel;
use super::integrator::{evolve, Cooling};
use super::state::EnsembleState;

/// Adds `delta_v` to the velocity of one ion.
pub fn kick_ion(state: &mut EnsembleState, ion: usize, delta_v: [f64; 3]) -> Result<()> {
    let len = state.ions().len();
    if ion >= len {
        return Err(Error::IonIndex { index: ion, len });
    }
    if !state.ions()[ion].alive {
        return Err(Error::DeadIon(ion));
    }
    let st = &mut state.ions_mut()[ion];
    for k in 0..3 {
        st.velocity[k] += delta_v[k];
    }
    Ok(())
}

/// Strongly damped evolution followed by zeroing all velocities.
pub fn relax(state: &mut EnsembleState, cfg: &ForceConfig, damping: f64, duration: f64) -> Result<()> {
    evolve(state, cfg, &Cooling::off().with_damping(damping), &HeatingModel::none(), duration, &mut [])?;
    for ion in state.ions_mut() {
        ion.velocity = [0.0; 3];
    }
    Ok(())
}

/// One escaped ion during an RF ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeRecord {
    pub ion: usize,
    pub species: String,
    pub time: f64,
    /// RF amplitude at the moment of escape (V).
    pub v_rf: f64,
}

/// Lowers the RF amplitude linearly from `v_start` to `v_end` over `duration`
/// with a static offset `v_offset` on the RF electrodes and logs every ion
/// that leaves the trap, sorted by escape time.
pub fn ramp_extraction(
    state: &mut EnsembleState,
    cfg: &ForceConfig,
    cooling: &Cooling,
    heating: &HeatingModel,
    v_start: f64,
    v_end: f64,
    duration: f64,
    v_offset: f64,
) -> Result<Vec<EscapeRecord>> {
    if v_end > v_start {
        return Err(invalid("RF ramp must be non-increasing"));
    }
    let mut ramp_cfg = cfg.clone();
    ramp_cfg.trap.v_offset = v_offset;
    let ramp = RfRamp { t0: state.time(), v_start, v_end, duration };
    ramp_cfg.rf_ramp = Some(ramp);
    let before = state.losses().len();
    evolve(state, &ramp_cfg, cooling, heating, duration, &mut [])?;
    let mut log: Vec<EscapeRecord> = state.losses()[before..]
        .iter()
        .map(|l| EscapeRecord {
            ion: l.ion,
            species: state.species()[l.species].name.clone(),
            time: l.time,
            v_rf: ramp.value(l.time),
        })
        .collect();
    log.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.ion.cmp(&b.ion)));
    Ok(log)
}

/// Species counts before and after a removal step.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalReport {
    pub species: Vec<String>,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    pub warnings: Vec<String>,
}

impl RemovalReport {
    fn new(state: &EnsembleState, before: Vec<usize>, warnings: Vec<String>) -> Self {
        Self {
            species: state.species().iter().map(|s| s.name.clone()).collect(),
            before,
            after: state.counts(),
            warnings,
        }
    }

    pub fn removed(&self, name: &str) -> usize {
        self.species
            .iter()
            .position(|s| s == name)
            .map_or(0, |i| self.before[i] - self.after.get(i).copied().unwrap_or(0))
    }

    /// Fraction of the initial ions of `name` still trapped.
    pub fn retained_fraction(&self, name: &str) -> f64 {
        match self.species.iter().position(|s| s == name) {
            Some(i) if self.before[i] > 0 => self.after[i] as f64 / self.before[i] as f64,
            _ => 1.0,
        }
    }
}

/// Applies a static quadrupole `v_dc` for `duration`; species whose radial
/// confinement it breaks leave the trap. The timestep is shortened to the
/// limit of the deformed trap when needed.
pub fn eject_heavy(
    state: &mut EnsembleState,
    cfg: &ForceConfig,
    cooling: &Cooling,
    heating: &HeatingModel,
    v_dc: f64,
    duration: f64,
) -> Result<RemovalReport> {
    let before = state.counts();
    let mut c = cfg.clone();
    c.trap.v_dc = v_dc;
    c.timestep = c.timestep.min(c.timestep_limit(state));
    evolve(state, &c, cooling, heating, duration, &mut [])?;
    Ok(RemovalReport::new(state, before, Vec::new()))
}

/// Relative window around the drive frequency in which another species'
/// resonance triggers a warning.
pub const RESONANCE_OVERLAP: f64 = 0.05;

/// Drives the radial resonance of `target` along x for `duration`, with laser
/// cooling removed when `cooling_off` is set.
pub fn eject_light(
    state: &mut EnsembleState,
    cfg: &ForceConfig,
    cooling: &Cooling,
    heating: &HeatingModel,
    target: &str,
    amplitude: f64,
    duration: f64,
    cooling_off: bool,
) -> Result<RemovalReport> {
    let ti = state.species_index(target).ok_or_else(|| Error::UnknownSpecies(target.to_string()))?;
    let f_drive = secular_frequencies(&cfg.trap, &state.species()[ti])?.omega_r / (2.0 * PI);
    let counts = state.counts();
    let mut warnings = Vec::new();
    for (s, sp) in state.species().iter().enumerate() {
        if s == ti || counts[s] == 0 {
            continue;
        }
        let f = secular_frequencies(&cfg.trap, sp)?.omega_r / (2.0 * PI);
        if ((f - f_drive) / f_drive).abs() < RESONANCE_OVERLAP {
            let msg = format!("drive at {:.1} kHz also resonates with {} ({:.1} kHz)", f_drive / 1e3, sp.name, f / 1e3);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut c = cfg.clone();
    let mut drive = ExcitationDrive::new(amplitude, f_drive, [1.0, 0.0, 0.0])?;
    drive.t0 = state.time();
    c.drive = Some(drive);
    let off = Cooling::off();
    let cool = if cooling_off { &off } else { cooling };
    evolve(state, &c, cool, heating, duration, &mut [])?;
    Ok(RemovalReport::new(state, counts, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::forces::TrapMode;
    use crate::dynamics::state::IonState;
    use crate::presets;

    #[test]
    fn kick_checks_index_and_life() {
        let be = presets::species("Be+").unwrap();
        let ion = IonState { position: [0.0; 3], velocity: [0.0; 3], species: 0, alive: true };
        let mut st = EnsembleState::from_ions(vec![ion], vec![be], 1).unwrap();
        kick_ion(&mut st, 0, [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(st.ions()[0].velocity, [1.0, 2.0, 3.0]);
        assert!(matches!(kick_ion(&mut st, 1, [0.0; 3]), Err(Error::IonIndex { .. })));
        st.remove_ion(0);
        assert!(matches!(kick_ion(&mut st, 0, [0.0; 3]), Err(Error::DeadIon(0))));
    }

    #[test]
    fn increasing_ramp_is_rejected() {
        let be = presets::species("Be+").unwrap();
        let trap = presets::trap("be").unwrap();
        let ion = IonState { position: [0.0; 3], velocity: [0.0; 3], species: 0, alive: true };
        let mut st = EnsembleState::from_ions(vec![ion], vec![be], 1).unwrap();
        let cfg = ForceConfig::new(TrapMode::Pseudopotential, trap, 1e-8);
        let r = ramp_extraction(&mut st, &cfg, &Cooling::off(), &HeatingModel::none(), 1.0, 2.0, 1e-6, 1.0);
        assert!(r.is_err());
    }
}
