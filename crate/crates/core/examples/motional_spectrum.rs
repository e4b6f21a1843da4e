//! Secular-motion spectra of sympathetically cooled Ar+, N2+ and Ar2+ in a
//! Be+ crystal, by free-oscillation FFT and by a swept excitation.

use std::f64::consts::PI;

use ioncrystal::analysis::{spectrum_fft, spectrum_sweep, FftConfig, SweepConfig};
use ioncrystal::dynamics::*;
use ioncrystal::presets;
use ioncrystal::trap::axis_frequencies_sq;

fn main() -> ioncrystal::Result<()> {
    let be = presets::species("Be+")?.laser_cooled(866.4);
    let mut trap = presets::trap("be")?;
    trap.v_ec = 4.0;
    let trap = trap.calibrated_to_radial(&be, 2.0 * PI * 280e3);
    let mut counts = vec![(be, 210)];
    for name in ["Ar+", "N2+", "Ar2+"] {
        counts.push((presets::species(name)?, 30));
    }

    let mut state = init_ensemble(&counts, &trap, 11, 0.0)?;
    let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, trap.clone(), 1.0);
    cfg.timestep = cfg.timestep_limit(&state);
    relax(&mut state, &cfg, 2e5, 1e-3)?;
    let cooling = Cooling::from_species(state.species()).three_axis();
    let heating = HeatingModel::uniform(vec![5.8; 4]);
    evolve(&mut state, &cfg, &cooling, &heating, 1e-3, &mut [])?;

    for (s, (sp, _)) in counts.iter().enumerate().skip(1) {
        let single = axis_frequencies_sq(&trap, sp)[0].sqrt() / (2.0 * PI);
        let spec = spectrum_fft(&state, &cfg, &cooling, &heating, &FftConfig::new(s, 1e-3))?;
        let peak = spec.peak_in(0.5 * single, 2.0 * single).map_or(f64::NAN, |p| p.frequency);
        println!("{:<5} single ion {:6.1} kHz, in crystal {:6.1} kHz", sp.name, single / 1e3, peak / 1e3);
    }

    // swept drive across the Ar+ line, reading out Be+ energy
    let frequencies = (0..21).map(|i| 60e3 + 2.5e3 * i as f64).collect();
    let sweep = SweepConfig {
        frequencies,
        amplitude: 0.5,
        direction: [1.0, 0.0, 0.0],
        settle: 0.2e-3,
        dwell: 0.2e-3,
        readout: 0,
        sample_stride: 10,
    };
    let spec = spectrum_sweep(&state, &cfg, &cooling, &heating, &sweep)?;
    for (f, r) in spec.frequencies.iter().zip(&spec.response) {
        println!("{:6.1} kHz  {r:.3e}", f / 1e3);
    }
    for p in &spec.peaks {
        println!("sweep peak at {:.1} kHz", p.frequency / 1e3);
    }
    Ok(())
}
