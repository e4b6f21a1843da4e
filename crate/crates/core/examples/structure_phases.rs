//! Sweep the coupling parameter of 300 Be+ with a Langevin thermostat and
//! classify each point as gas, liquid or crystal from g(r), shells and caging.

use ioncrystal::analysis::{structure_metrics, StructureConfig};
use ioncrystal::constants::{BOLTZMANN, COULOMB_CONSTANT};
use ioncrystal::dynamics::*;
use ioncrystal::presets;
use ioncrystal::trap::{plasma_estimate, temperature_for_gamma};

fn main() -> ioncrystal::Result<()> {
    let be = presets::species("Be+")?;
    let mut trap = presets::trap("be")?;
    trap.v_ec = 8.0;
    let spacing = plasma_estimate(&trap, &be, 1.0)?.spacing;

    let mut state = init_ensemble(&[(be.clone(), 300)], &trap, 7, 0.0)?;
    let base = ForceConfig::new(TrapMode::Pseudopotential, trap, 1.0);
    let dt = base.timestep_limit(&state);
    let mut cfg = base.clone();
    cfg.timestep = dt;
    relax(&mut state, &cfg, 2e5, 1e-3)?;

    let damping = 1e4;
    let cooling = Cooling::off().with_damping(damping);
    println!("{:>6} {:>9} {:>7} {:>8} {:>10}  phase", "Gamma", "T mK", "shells", "caging", "monotonic");
    for gamma in [400.0, 150.0, 40.0, 4.0, 1.0] {
        let t = temperature_for_gamma(be.charge, spacing, gamma);
        // close encounters get hard to resolve in the hot gas
        let r_c = COULOMB_CONSTANT * be.charge * be.charge / (BOLTZMANN * t);
        cfg.timestep = dt.min(0.05 * r_c / (BOLTZMANN * t / be.mass).sqrt());
        let heating = HeatingModel::uniform(vec![3.0 * damping * t]);
        evolve(&mut state, &cfg, &cooling, &heating, 6.0 / damping, &mut [])?;
        let window = 0.2e-3;
        let mut rec = SnapshotRecorder::new((steps_for(window, cfg.timestep) / 150).max(1));
        evolve(&mut state, &cfg, &cooling, &heating, window, &mut [&mut rec])?;
        let m = structure_metrics(&rec.trajectory, &StructureConfig::default())?;
        println!(
            "{gamma:>6.0} {:>9.3} {:>7} {:>8.3} {:>10}  {}",
            t * 1e3,
            m.shells,
            m.caging_ratio,
            m.monotonic,
            m.phase.name()
        );
    }
    Ok(())
}
