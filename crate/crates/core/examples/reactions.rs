//! Photoactivated Be+ + HD chemistry: Be+ turns into BeH+ and BeD+ while the
//! cooling laser is on. Fits the decay and reports the product branching.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ioncrystal::constants::PA_PER_MBAR;
use ioncrystal::dynamics::init_ensemble;
use ioncrystal::presets;
use ioncrystal::reactions::*;

fn main() -> ioncrystal::Result<()> {
    let pressure = 1e-8 * PA_PER_MBAR;
    let be = presets::species("Be+")?;
    let trap = presets::trap("be")?;
    let mut state = init_ensemble(&[(be, 200)], &trap, 1, 0.0)?;

    let channels = vec![library_channel("Be+*+HD")?.with_pressure(pressure)];
    let density = presets::gas("HD")?.with_pressure(pressure).number_density()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut log = ReactionLog::default();
    run_reactions(&mut state, &channels, 20.0, 0.5, None, &mut rng, &mut log)?;

    let (t, n) = log.series("Be+");
    for (t, n) in t.iter().zip(&n).step_by(4) {
        println!("{t:5.1} s  {n:4} Be+");
    }
    let fit = fit_decay(&t, &n, density)?;
    println!("k = {:.3e} m^3/s (set 1.1e-15), reduced chi2 {:.2}", fit.k, fit.reduced_chi2);
    let beh = log.events.iter().filter(|e| e.product == "BeH+").count();
    let bed = log.events.iter().filter(|e| e.product == "BeD+").count();
    println!("BeH+ : BeD+ = {beh} : {bed}");
    Ok(())
}
