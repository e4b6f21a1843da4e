//! Secular frequencies, stability and cold-plasma estimates for a few species
//! in the Be+ trap.

use std::f64::consts::PI;

use ioncrystal::presets;
use ioncrystal::trap::*;

fn main() -> ioncrystal::Result<()> {
    let be = presets::species("Be+")?;
    let mut trap = presets::trap("be")?.calibrated_to_radial(&be, 2.0 * PI * 280e3);
    trap.v_ec = 4.0;

    println!("{:<8} {:>7} {:>10} {:>10}", "species", "q", "f_r kHz", "f_z kHz");
    for name in ["Be+", "H2+", "HD+", "N2+", "Ar+", "Ar2+"] {
        let sp = presets::species(name)?;
        let q = mathieu_q(&trap, &sp);
        match secular_frequencies(&trap, &sp) {
            Ok(f) => println!("{name:<8} {q:>7.4} {:>10.1} {:>10.1}", f.omega_r / 2e3 / PI, f.omega_z / 2e3 / PI),
            Err(_) => println!("{name:<8} {q:>7.4}   unstable"),
        }
    }

    let p = plasma_estimate(&trap, &be, 5e-3)?;
    println!("\nBe+ density {:.3e} m^-3, spacing {:.1} um", p.density, p.spacing * 1e6);
    println!("Gamma at 5 mK = {:.0}, crystallizes below {:.2} mK", p.gamma, p.t_crystal * 1e3);

    let s = zero_temperature_spheroid(&trap, &be, 1000)?;
    println!("1000 Be+: radius {:.0} um, half length {:.0} um", s.radius * 1e6, s.half_length * 1e6);
    Ok(())
}
