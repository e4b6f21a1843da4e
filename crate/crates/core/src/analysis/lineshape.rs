//! Fluorescence lineshapes and Voigt thermometry.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Complex;

use crate::constants::BOLTZMANN;
use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};

const WEIDEMAN_N: usize = 32;

fn weideman_coefficients() -> &'static (f64, [f64; WEIDEMAN_N]) {
    static COEF: OnceLock<(f64, [f64; WEIDEMAN_N])> = OnceLock::new();
    COEF.get_or_init(|| {
        let n = WEIDEMAN_N as f64;
        let m = 2 * WEIDEMAN_N;
        let l = (n / 2f64.sqrt()).sqrt();
        let mut c = [0.0; WEIDEMAN_N];
        for (j, cj) in c.iter_mut().enumerate() {
            let mm = (j + 1) as f64;
            let mut s = 0.0;
            for k in -(m as i64) + 1..m as i64 {
                let t = l * (k as f64 * PI / m as f64 / 2.0).tan();
                let f = (-t * t).exp() * (l * l + t * t);
                s += f * (PI * k as f64 * mm / m as f64).cos();
            }
            *cj = s / (2 * m) as f64;
        }
        (l, c)
    })
}

/// Faddeeva function w(z) = exp(-z²) erfc(-iz) for Im z >= 0 (Weideman's
/// rational expansion with 32 terms).
pub fn faddeeva(z: Complex<f64>) -> Complex<f64> {
    let (l, c) = weideman_coefficients();
    let i = Complex::new(0.0, 1.0);
    let d = Complex::new(*l, 0.0) - i * z;
    let zz = (Complex::new(*l, 0.0) + i * z) / d;
    let mut p = Complex::new(0.0, 0.0);
    for cj in c.iter().rev() {
        p = p * zz + cj;
    }
    p * 2.0 / (d * d) + Complex::new(1.0 / PI.sqrt(), 0.0) / d
}

/// Area-normalized Lorentzian with half width at half maximum `gamma`.
pub fn lorentzian(x: f64, gamma: f64) -> f64 {
    gamma / (PI * (x * x + gamma * gamma))
}

/// Area-normalized Voigt profile: Gaussian of standard deviation `sigma`
/// convolved with a Lorentzian of HWHM `gamma`.
pub fn voigt(x: f64, sigma: f64, gamma: f64) -> f64 {
    let sigma = sigma.abs();
    if sigma <= 1e-9 * gamma {
        return lorentzian(x, gamma);
    }
    if gamma <= 0.0 {
        return (-0.5 * x * x / (sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
    }
    let z = Complex::new(x, gamma) / (sigma * 2f64.sqrt());
    faddeeva(z).re / (sigma * (2.0 * PI).sqrt())
}

/// Fluorescence versus laser detuning (Hz) for a set of velocities along
/// the beam: each ion contributes a Lorentzian of the natural linewidth
/// (FWHM, Hz) shifted by v/λ.
pub fn synthetic_lineshape(velocities: &[f64], wavelength: f64, natural_linewidth: f64, detunings: &[f64]) -> Vec<f64> {
    let gamma = 0.5 * natural_linewidth;
    let n = velocities.len().max(1) as f64;
    detunings
        .iter()
        .map(|&d| velocities.iter().map(|v| lorentzian(d - v / wavelength, gamma)).sum::<f64>() / n)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineshapeFit {
    pub detunings: Vec<f64>,
    pub signal: Vec<f64>,
    pub model: Vec<f64>,
    pub amplitude: f64,
    /// Hz
    pub center: f64,
    /// Gaussian standard deviation (Hz).
    pub doppler_sigma: f64,
    /// K
    pub temperature: f64,
    /// RMS residual relative to the signal maximum.
    pub relative_residual: f64,
}

/// Builds the synthetic lineshape of the sampled velocities and fits a Voigt
/// profile with the Lorentzian width fixed to the natural linewidth. The
/// Gaussian width gives `T = m (σ λ)² / k_B`.
pub fn lineshape_fit(
    velocities: &[f64],
    mass: f64,
    wavelength: f64,
    natural_linewidth: f64,
    detunings: &[f64],
) -> Result<LineshapeFit> {
    if velocities.is_empty() {
        return Err(Error::InsufficientSamples("no velocity samples".into()));
    }
    if !(wavelength > 0.0 && natural_linewidth > 0.0 && mass > 0.0) {
        return Err(invalid("wavelength, linewidth and mass must be positive"));
    }
    if detunings.len() < 8 || detunings.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("scan grid needs at least 8 strictly increasing detunings"));
    }
    let signal = synthetic_lineshape(velocities, wavelength, natural_linewidth, detunings);
    let gamma = 0.5 * natural_linewidth;
    let top = signal.iter().copied().fold(0.0, f64::max);
    let imax = signal.iter().position(|&s| s == top).unwrap();
    // Start from the Olivero-Longbothum width relation.
    let half: Vec<f64> = detunings.iter().zip(&signal).filter(|(_, s)| **s >= 0.5 * top).map(|(d, _)| *d).collect();
    let fwhm = half.last().unwrap() - half[0];
    let f_l = natural_linewidth;
    let f_g = ((fwhm - 0.5346 * f_l).powi(2) - 0.2166 * f_l * f_l).max(0.0).sqrt();
    let sigma0 = (f_g / 2.3548).max(0.05 * gamma);
    let area0 = top / voigt(0.0, sigma0, gamma);
    let scale = top;
    let residuals = |p: &[f64]| -> Vec<f64> {
        detunings.iter().zip(&signal).map(|(d, s)| (p[0] * voigt(d - p[1], p[2], gamma) - s) / scale).collect()
    };
    let fit = levenberg_marquardt(residuals, &[area0, detunings[imax], sigma0], &LmOptions::default())?;
    let rel = (fit.cost / signal.len() as f64).sqrt();
    if !fit.converged {
        return Err(Error::FitFailed { reason: "Voigt fit did not converge".into(), residual: rel });
    }
    let p = &fit.params;
    let sigma = p[2].abs();
    let model = detunings.iter().map(|d| p[0] * voigt(d - p[1], sigma, gamma)).collect();
    let v_sigma = sigma * wavelength;
    Ok(LineshapeFit {
        detunings: detunings.to_vec(),
        signal,
        model,
        amplitude: p[0],
        center: p[1],
        doppler_sigma: sigma,
        temperature: mass * v_sigma * v_sigma / BOLTZMANN,
        relative_residual: rel,
    })
}
