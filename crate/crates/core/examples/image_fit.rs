//! Make a synthetic CCD image of 80 Be+ at 8 mK, then recover the ion number
//! and temperature by matching simulated images against it.

use ioncrystal::analysis::*;
use ioncrystal::presets;
use ioncrystal::trap::heating_for_temperature;

fn main() -> ioncrystal::Result<()> {
    let be = presets::species("Be+")?.laser_cooled(2e4);
    let mut trap = presets::trap("be")?;
    trap.v_ec = 8.0;
    let image = ImageConfig {
        view: ViewPlane::Zy,
        pixel_size: 2e-6,
        width: 200,
        height: 100,
        exposure: 2e-3,
        psf_sigma: 0.0,
        brightness: 1.0,
    };
    let h = |t: f64| heating_for_temperature(&be, t);

    let mut model = EnsembleModel::new(trap, vec![be.clone()]);
    model.exposure = image.exposure;
    model.samples = 400;
    let truth = Candidate { counts: vec![80], heating: vec![h(8e-3)?] };
    let reference = simulate_candidate(&model, &truth, &image)?.image;
    std::fs::write("reference.pgm", reference.to_pgm())?;

    model.seed = 2;
    let heat: Vec<f64> = [4e-3, 8e-3, 16e-3].iter().map(|&t| h(t)).collect::<Result<_, _>>()?;
    let grid = candidate_grid(&[vec![70, 80, 90]], &[heat]);
    let report = fit_ensemble(&reference, &image, &model, &grid)?;
    for (c, s) in report.candidates.iter().zip(&report.scores) {
        println!("N {:3}  h {:7.1} K/s  similarity {s:.4}", c.counts[0], c.heating[0]);
    }
    let best = report.best_candidate();
    println!("best: N = {}, T = {:.1} mK", best.counts[0], report.temperatures[report.best][0].unwrap_or(f64::NAN) * 1e3);
    Ok(())
}
