//! Relax 200 Be+ into a crystal, laser cool against heating, and watch the
//! temperature settle. Writes an image of the last millisecond.

use ioncrystal::analysis::{render_ccd, ImageConfig, ViewPlane};
use ioncrystal::dynamics::*;
use ioncrystal::presets;
use ioncrystal::trap::equilibrium_temperature;

fn main() -> ioncrystal::Result<()> {
    let be = presets::species("Be+")?.laser_cooled(2e4);
    let mut trap = presets::trap("be")?;
    trap.v_ec = 6.0;

    let mut state = init_ensemble(&[(be.clone(), 200)], &trap, 1, 10e-3)?;
    let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, trap, 1.0);
    cfg.timestep = cfg.timestep_limit(&state);
    relax(&mut state, &cfg, 2e5, 5e-4)?;

    let heating = HeatingModel::uniform(vec![100.0]);
    let cooling = Cooling::from_species(state.species()).three_axis();
    let mut temps = TemperatureRecorder::new(0.5e-3);
    let mut snaps = SnapshotRecorder::new(20);
    evolve(&mut state, &cfg, &cooling, &heating, 5e-3, &mut [&mut temps, &mut snaps])?;

    for (t, k) in temps.series("Be+") {
        println!("{:5.2} ms  {:6.2} mK", t * 1e3, k * 1e3);
    }
    println!("expected {:.2} mK", equilibrium_temperature(&be, 100.0)? * 1e3);

    let view = ImageConfig {
        view: ViewPlane::Zy,
        pixel_size: 2e-6,
        width: 400,
        height: 160,
        exposure: 1e-3,
        psf_sigma: 1e-6,
        brightness: 1.0,
    };
    let img = render_ccd(&snaps.trajectory, &view)?;
    std::fs::write("md_crystal.pgm", img.to_pgm())?;
    println!("wrote md_crystal.pgm");
    Ok(())
}
