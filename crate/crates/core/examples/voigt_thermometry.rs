//! Doppler thermometry: fit a Voigt profile to the fluorescence lineshape of
//! a thermal Be+ velocity distribution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ioncrystal::analysis::lineshape_fit;
use ioncrystal::constants::BOLTZMANN;
use ioncrystal::presets;

fn main() -> ioncrystal::Result<()> {
    let be = presets::species("Be+")?;
    let detunings: Vec<f64> = (-100..=100).map(|k| k as f64 * 2e6).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in [1e-3, 10e-3, 100e-3] {
        let v: Vec<f64> = Normal::new(0.0, (BOLTZMANN * t / be.mass).sqrt())
            .expect("positive width")
            .sample_iter(&mut rng)
            .take(10_000)
            .collect();
        let sampled = be.mass * v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64 / BOLTZMANN;
        let fit = lineshape_fit(&v, be.mass, 313e-9, 19.4e6, &detunings)?;
        println!(
            "set {:6.1} mK  sampled {:6.1} mK  fitted {:6.1} mK  Doppler sigma {:.2} MHz",
            t * 1e3,
            sampled * 1e3,
            fit.temperature * 1e3,
            fit.doppler_sigma / 1e6
        );
    }
    Ok(())
}
