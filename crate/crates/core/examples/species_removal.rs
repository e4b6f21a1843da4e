//! Clean a mixed crystal: remove heavy impurities with a static quadrupole,
//! then lower the RF amplitude and log which ions escape first.

use ioncrystal::dynamics::*;
use ioncrystal::presets;
use ioncrystal::trap::{ejection_threshold_v_dc, v_rf_for_radial_frequency};

fn main() -> ioncrystal::Result<()> {
    let ba = presets::species("Ba+")?.laser_cooled(866.4);
    let heavy = presets::species("BaO+")?;
    let light = presets::species("Ba135+")?;
    let mut trap = presets::trap("ba")?;
    trap.v_ec = 3.0;

    let mut state = init_ensemble(&[(ba.clone(), 60), (heavy.clone(), 10), (light.clone(), 10)], &trap, 3, 0.0)?;
    let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, trap.clone(), 1.0);
    cfg.timestep = cfg.timestep_limit(&state);
    relax(&mut state, &cfg, 2e5, 1e-3)?;
    let cooling = Cooling::from_species(state.species()).three_axis();
    let heating = HeatingModel::uniform(vec![5.0; 3]);

    let v_heavy = ejection_threshold_v_dc(&trap, &heavy);
    let v_ba = ejection_threshold_v_dc(&trap, &ba);
    println!("thresholds: BaO+ {v_heavy:.3} V, Ba+ {v_ba:.3} V");
    let report = eject_heavy(&mut state, &cfg, &cooling, &heating, 0.5 * (v_heavy + v_ba), 1e-3)?;
    for ((s, b), a) in report.species.iter().zip(&report.before).zip(&report.after) {
        println!("{s:<7} {b:3} -> {a:3}");
    }

    // ramp through the point where the single-ion radial confinement vanishes
    let v_loss = v_rf_for_radial_frequency(&trap, &light, 0.0);
    println!(
        "radial confinement lost below {:.1} V (Ba+), {v_loss:.1} V (Ba135+)",
        v_rf_for_radial_frequency(&trap, &ba, 0.0)
    );
    let escapes = ramp_extraction(&mut state, &cfg, &cooling, &heating, trap.v_rf, 0.5 * v_loss, 4e-3, 0.0)?;
    for e in escapes.iter().step_by(5) {
        println!("{:6.3} ms  {:<7} at {:.1} V", e.time * 1e3, e.species, e.v_rf);
    }
    println!("{} ions escaped during the ramp", escapes.len());
    Ok(())
}
