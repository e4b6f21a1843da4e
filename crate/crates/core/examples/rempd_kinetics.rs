//! Blackbody redistribution and REMPD depletion of HD+ rotational levels, and
//! rotational thermometry from the resulting populations.

use ioncrystal::rempd::*;

fn main() -> ioncrystal::Result<()> {
    let scheme = LevelScheme::toy_hd_plus();
    let env = RadiationEnv {
        t_bbr: 300.0,
        ir: Some(IrPump { lower: (0, 2), upper: (4, 1), rate: 100.0 }),
        uv: Some(UvField { intensity: 5700.0, wavelength: 266e-9 }),
    };

    let (times, survival) = rempd_survival(&scheme, &env, 300.0, 120.0, 12_000)?;
    for (t, s) in times.iter().zip(&survival).step_by(1000) {
        println!("{t:6.1} s  {s:.4}");
    }
    let ts = survival_timescales(&times, &survival)?;
    println!("fast {:.3}/s (weight {:.2}), slow {:.5}/s", ts.fast, ts.fast_weight, ts.slow);

    let thermal = PopulationVector::boltzmann(&scheme, 335.0)?;
    let fit = fit_manifold(&scheme, &thermal.levels, 0)?;
    println!("rotational temperature of v = 0: {:.1} K", fit.temperature);
    Ok(())
}
