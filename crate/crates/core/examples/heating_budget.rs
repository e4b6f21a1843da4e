//! Background-gas collision heating and the steady-state energy balance of a
//! sympathetically cooled three-species crystal.

use ioncrystal::constants::PA_PER_MBAR;
use ioncrystal::presets;
use ioncrystal::trap::*;

fn main() -> ioncrystal::Result<()> {
    let ba = presets::species("Ba+")?;
    for mbar in [1e-10, 1e-9, 1e-8] {
        let n2 = presets::gas("N2")?.with_pressure(mbar * PA_PER_MBAR);
        let r = collision_rates(&ba, 0.0, &n2)?;
        println!(
            "N2 at {mbar:.0e} mbar: {:.4} collisions/s, h = {:.2} K/s, {:.0} K per collision",
            r.gamma_elastic, r.heating_rate, r.mean_transfer
        );
    }

    let lc = ba.clone().laser_cooled(760.0);
    println!("\nBa+ at 9.9 K/s settles at {:.1} mK", equilibrium_temperature(&lc, 9.9)? * 1e3);

    let rows = [
        SpeciesRateRow::new(lc, 830, 25e-3, 9.9),
        SpeciesRateRow::new(presets::species("AF+")?, 200, 88e-3, 15.9),
        SpeciesRateRow::new(presets::species("Ba136+")?, 420, 37e-3, 9.9),
    ];
    let b = energy_balance(&rows)?;
    println!(
        "ledger: cooling {:.1} K/s, predicted T_LC {:.2} mK, residual {:.0} K/s of {:.0}",
        b.lc_cooling_rate,
        b.lc_temperature_predicted * 1e3,
        b.residual,
        b.gross_cooling
    );
    Ok(())
}
