//! Motional-resonance spectra by resonant excitation (step sweep) and by
//! Fourier analysis of a displaced ensemble.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::constants::BOLTZMANN;
use crate::dynamics::{evolve, Cooling, EnsembleState, ExcitationDrive, ForceConfig, HeatingModel, Observer, TrapMode};
use crate::error::{invalid, Error, Result};
use crate::io::{Cell, Csv};
use crate::trap::axis_frequencies_sq;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    /// Mean secular energy of the readout species per drive frequency.
    Sweep,
    /// Power of the species-averaged x coordinate (m²).
    Fft,
}

impl SpectrumMethod {
    pub fn name(self) -> &'static str {
        match self {
            SpectrumMethod::Sweep => "sweep",
            SpectrumMethod::Fft => "fft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frequency: f64,
    pub height: f64,
    /// Full width at half maximum (Hz).
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub method: SpectrumMethod,
    pub frequencies: Vec<f64>,
    pub response: Vec<f64>,
    pub peaks: Vec<Peak>,
    /// Problems met while measuring (lost ions, unstable runs).
    pub flags: Vec<String>,
}

impl Spectrum {
    pub fn to_csv(&self) -> Csv {
        let mut c = Csv::with_header(&["freq_hz", "response"]);
        for (f, r) in self.frequencies.iter().zip(&self.response) {
            c.row(&[Cell::F(*f), Cell::F(*r)]);
        }
        c
    }

    /// Strongest peak inside `[lo, hi]`.
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<Peak> {
        self.peaks
            .iter()
            .filter(|p| p.frequency >= lo && p.frequency <= hi)
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .copied()
    }

    /// Peak closest to `f`.
    pub fn nearest_peak(&self, f: f64) -> Option<Peak> {
        self.peaks.iter().min_by(|a, b| (a.frequency - f).abs().total_cmp(&(b.frequency - f).abs())).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Peaks must exceed this multiple of the median response.
    pub floor_factor: f64,
    /// ... and this fraction of the strongest maximum.
    pub relative_min: f64,
    /// ... and this absolute value.
    pub absolute_min: f64,
    /// Maxima closer than this keep only the higher one (Hz).
    pub min_separation: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { floor_factor: 5.0, relative_min: 1e-3, absolute_min: 0.0, min_separation: 0.0 }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Local maxima above `floor_factor` times the median, refined by a parabola
/// through the maximum and its neighbours.
pub fn detect_peaks(freqs: &[f64], resp: &[f64], opts: &PeakOptions) -> Vec<Peak> {
    let n = freqs.len().min(resp.len());
    if n < 3 {
        return Vec::new();
    }
    let floor = median(&resp[..n]);
    let top = resp[..n].iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let thr = (opts.floor_factor * floor).max(opts.relative_min * top).max(opts.absolute_min);
    let mut found: Vec<Peak> = Vec::new();
    for i in 1..n - 1 {
        let (a, b, c) = (resp[i - 1], resp[i], resp[i + 1]);
        if !(b > thr && b > a && b >= c) {
            continue;
        }
        let (x0, x1, x2) = (freqs[i - 1], freqs[i], freqs[i + 1]);
        // Vertex of the parabola through the three points.
        let d1 = (b - a) / (x1 - x0);
        let d2 = (c - b) / (x2 - x1);
        let curv = (d2 - d1) / (x2 - x0);
        let (f, h) = if curv < 0.0 {
            let xv = (0.5 * (x0 + x1) - d1 / (2.0 * curv)).clamp(x0, x2);
            (xv, a + d1 * (xv - x0) + curv * (xv - x0) * (xv - x1))
        } else {
            (x1, b)
        };
        let half = 0.5 * h;
        let cross = |range: &mut dyn Iterator<Item = usize>, prev_init: usize| {
            let mut prev = prev_init;
            for k in range {
                if resp[k] <= half {
                    let t = (resp[prev] - half) / (resp[prev] - resp[k]);
                    return Some(freqs[prev] + t * (freqs[k] - freqs[prev]));
                }
                prev = k;
            }
            None
        };
        let lo = cross(&mut (0..i).rev(), i).unwrap_or(freqs[0]);
        let hi = cross(&mut (i + 1..n), i).unwrap_or(freqs[n - 1]);
        let p = Peak { frequency: f, height: h, width: hi - lo };
        if let Some(last) = found.last_mut() {
            if p.frequency - last.frequency < opts.min_separation {
                if p.height > last.height {
                    *last = p;
                }
                continue;
            }
        }
        found.push(p);
    }
    found
}

fn radial_frequency(trap: &crate::trap::TrapConfig, sp: &crate::trap::IonSpecies) -> f64 {
    axis_frequencies_sq(trap, sp)[0].max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

/// Single-particle radial (x) frequencies of the species present (Hz).
pub fn expected_frequencies(state: &EnsembleState, cfg: &ForceConfig) -> Vec<(usize, f64)> {
    let counts = state.counts();
    state
        .species()
        .iter()
        .enumerate()
        .filter(|(s, _)| counts[*s] > 0)
        .map(|(s, sp)| (s, radial_frequency(&cfg.trap, sp)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FftConfig {
    /// Species index whose ions are displaced and averaged.
    pub target: usize,
    /// Displacement along x as a fraction of the ensemble radius.
    pub offset_fraction: f64,
    pub duration: f64,
    /// Sampling interval (s); every step in rf_full mode, 1/(10 f_max) otherwise.
    pub sample_interval: Option<f64>,
    /// Upper end of the returned spectrum (Hz); 3 f_max by default.
    pub max_frequency: Option<f64>,
    /// RMS amplitude below which nothing counts as a peak (m).
    pub detection_limit: f64,
}

impl FftConfig {
    pub fn new(target: usize, duration: f64) -> Self {
        Self {
            target,
            offset_fraction: 0.05,
            duration,
            sample_interval: None,
            max_frequency: None,
            detection_limit: 1e-9,
        }
    }
}

struct MeanX {
    stride: usize,
    target: usize,
    samples: Vec<f64>,
}

impl Observer for MeanX {
    fn stride(&self) -> usize {
        self.stride
    }
    fn observe(&mut self, state: &EnsembleState, _cfg: &ForceConfig) -> Result<()> {
        let (mut s, mut n) = (0.0, 0usize);
        for ion in state.ions().iter().filter(|i| i.alive && i.species == self.target) {
            s += ion.position[0];
            n += 1;
        }
        self.samples.push(if n > 0 { s / n as f64 } else { 0.0 });
        Ok(())
    }
}

/// Hann-windowed amplitude spectrum: a sinusoid of amplitude A at a bin
/// frequency shows up with power A².
pub fn hann_power_spectrum(samples: &[f64], interval: f64, pad_factor: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n.max(2) - 1) as f64).cos())
        .collect();
    let wsum: f64 = w.iter().sum();
    let m = n.next_power_of_two() * pad_factor.max(1);
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|k| if k < n { Complex::new((samples[k] - mean) * w[k], 0.0) } else { Complex::new(0.0, 0.0) })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * interval);
    let freqs = (1..m / 2).map(|k| k as f64 * df).collect();
    let power = (1..m / 2).map(|k| (2.0 * buf[k].norm() / wsum).powi(2)).collect();
    (freqs, power)
}

/// Displaces the target species radially, evolves the ensemble and Fourier
/// transforms the species-averaged x coordinate.
pub fn spectrum_fft(
    state: &EnsembleState,
    cfg: &ForceConfig,
    cooling: &Cooling,
    heating: &HeatingModel,
    fft: &FftConfig,
) -> Result<Spectrum> {
    if fft.target >= state.species().len() || state.counts()[fft.target] == 0 {
        return Err(invalid(format!("target species {} has no ions", fft.target)));
    }
    if !(fft.offset_fraction >= 0.0) {
        return Err(invalid("offset fraction must be >= 0"));
    }
    let expected = expected_frequencies(state, cfg);
    let f_low = expected.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    if !(fft.duration >= 10.0 / f_low) {
        return Err(Error::WindowTooShort(format!(
            "{:.3e} s is shorter than 10 periods of the lowest expected frequency {:.3e} Hz",
            fft.duration, f_low
        )));
    }
    let f_max = state
        .species()
        .iter()
        .zip(state.counts())
        .filter(|(_, c)| *c > 0)
        .flat_map(|(sp, _)| axis_frequencies_sq(&cfg.trap, sp))
        .map(|w2| w2.abs().sqrt() / (2.0 * std::f64::consts::PI))
        .fold(0.0, f64::max);
    let interval = match (fft.sample_interval, cfg.mode) {
        (Some(i), _) => i,
        (None, TrapMode::RfFull) => cfg.timestep,
        (None, TrapMode::Pseudopotential) => 1.0 / (10.0 * f_max),
    };
    let stride = ((interval / cfg.timestep).floor() as usize).max(1);

    let mut st = state.clone();
    let radius = st.ions().iter().filter(|i| i.alive).map(|i| i.position[0].hypot(i.position[1])).fold(0.0, f64::max);
    let offset = fft.offset_fraction * radius;
    let target = fft.target;
    for ion in st.ions_mut().iter_mut().filter(|i| i.alive && i.species == target) {
        ion.position[0] += offset;
    }
    let mut rec = MeanX { stride, target, samples: Vec::new() };
    let lost_before = st.losses().len();
    evolve(&mut st, cfg, cooling, heating, fft.duration, &mut [&mut rec])?;
    let mut flags = Vec::new();
    if st.losses().len() > lost_before {
        flags.push(format!("{} ions lost during the evolution", st.losses().len() - lost_before));
    }
    if rec.samples.len() < 16 {
        return Err(Error::InsufficientSamples(format!("{} samples", rec.samples.len())));
    }
    let dt_s = stride as f64 * cfg.timestep;
    let (freqs, power) = hann_power_spectrum(&rec.samples, dt_s, 4);
    let f_cut = fft.max_frequency.unwrap_or(3.0 * f_max);
    let keep = freqs.iter().take_while(|f| **f <= f_cut).count();
    let (freqs, power) = (freqs[..keep].to_vec(), power[..keep].to_vec());
    let opts = PeakOptions {
        absolute_min: fft.detection_limit * fft.detection_limit,
        min_separation: 2.0 / fft.duration,
        ..PeakOptions::default()
    };
    let peaks = detect_peaks(&freqs, &power, &opts);
    Ok(Spectrum { method: SpectrumMethod::Fft, frequencies: freqs, response: power, peaks, flags })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Drive frequencies (Hz), strictly increasing.
    pub frequencies: Vec<f64>,
    /// V/m
    pub amplitude: f64,
    pub direction: [f64; 3],
    /// Driven time before the response is averaged (s).
    pub settle: f64,
    /// Averaging time (s).
    pub dwell: f64,
    /// Species whose secular energy is the response.
    pub readout: usize,
    pub sample_stride: usize,
}

struct Kinetic {
    stride: usize,
    species: usize,
    sum: f64,
    n: usize,
}

impl Observer for Kinetic {
    fn stride(&self) -> usize {
        self.stride
    }
    fn observe(&mut self, state: &EnsembleState, _cfg: &ForceConfig) -> Result<()> {
        let m = state.species()[self.species].mass;
        for ion in state.ions().iter().filter(|i| i.alive && i.species == self.species) {
            self.sum += 0.5 * m * ion.velocity.iter().map(|v| v * v).sum::<f64>();
            self.n += 1;
        }
        Ok(())
    }
}

/// Runs the driven ensemble once per frequency (each from the same initial
/// state) and records the readout species' mean kinetic energy per ion in
/// kelvin as the fluorescence proxy.
pub fn spectrum_sweep(
    state: &EnsembleState,
    cfg: &ForceConfig,
    cooling: &Cooling,
    heating: &HeatingModel,
    sweep: &SweepConfig,
) -> Result<Spectrum> {
    let f = &sweep.frequencies;
    if f.len() < 3 || f.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("sweep needs at least 3 strictly increasing frequencies"));
    }
    if sweep.readout >= state.species().len() || state.counts()[sweep.readout] == 0 {
        return Err(invalid(format!("readout species {} has no ions", sweep.readout)));
    }
    if !(sweep.dwell > 0.0 && sweep.settle >= 0.0) {
        return Err(invalid("dwell must be > 0 and settle >= 0"));
    }
    let expected = expected_frequencies(state, cfg);
    let mut flags: Vec<String> = Vec::new();
    let (lo, hi) = (f[0], f[f.len() - 1]);
    if !expected.iter().any(|e| e.1 >= lo && e.1 <= hi) {
        return Err(invalid(format!("sweep range {lo:.4e}..{hi:.4e} Hz covers no single-particle frequency")));
    }
    for (s, fe) in &expected {
        if *fe < lo || *fe > hi {
            flags.push(format!("{} at {:.4e} Hz outside the sweep range", state.species()[*s].name, fe));
        }
    }
    let results: Vec<(f64, Option<String>)> = f
        .par_iter()
        .map(|&freq| {
            let run = || -> Result<(f64, usize)> {
                let mut st = state.clone();
                let mut c = cfg.clone();
                let mut d = ExcitationDrive::new(sweep.amplitude, freq, sweep.direction)?;
                d.t0 = st.time();
                c.drive = Some(d);
                let before = st.losses().len();
                if sweep.settle > 0.0 {
                    evolve(&mut st, &c, cooling, heating, sweep.settle, &mut [])?;
                }
                let mut k = Kinetic { stride: sweep.sample_stride.max(1), species: sweep.readout, sum: 0.0, n: 0 };
                evolve(&mut st, &c, cooling, heating, sweep.dwell, &mut [&mut k])?;
                let e = if k.n > 0 { k.sum / k.n as f64 / BOLTZMANN } else { 0.0 };
                Ok((e, st.losses().len() - before))
            };
            match run() {
                Ok((e, 0)) => (e, None),
                Ok((e, lost)) => (e, Some(format!("{freq:.4e} Hz: {lost} ions lost"))),
                Err(err) => (0.0, Some(format!("{freq:.4e} Hz: unstable ({err})"))),
            }
        })
        .collect();
    let response: Vec<f64> = results.iter().map(|r| r.0).collect();
    flags.extend(results.into_iter().filter_map(|r| r.1));
    let peaks = detect_peaks(f, &response, &PeakOptions { relative_min: 0.0, ..PeakOptions::default() });
    Ok(Spectrum { method: SpectrumMethod::Sweep, frequencies: f.clone(), response, peaks, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{init_ensemble, IonState};
    use crate::presets;

    #[test]
    fn parabolic_refinement_is_exact_for_parabolas() {
        let f: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let r: Vec<f64> = f.iter().map(|x| (100.0 - (x - 7.3) * (x - 7.3)).max(0.0)).collect();
        let p = detect_peaks(&f, &r, &PeakOptions { floor_factor: 0.0, ..Default::default() });
        assert_eq!(p.len(), 1);
        assert!((p[0].frequency - 7.3).abs() < 1e-12);
        assert!((p[0].height - 100.0).abs() < 1e-9);
    }

    #[test]
    fn floor_rejects_small_maxima() {
        let f: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut r = vec![1.0; 50];
        r[10] = 4.0;
        r[30] = 6.0;
        let p = detect_peaks(&f, &r, &PeakOptions::default());
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].frequency, 30.0);
    }

    #[test]
    fn sine_amplitude_normalization() {
        let dt = 1e-3;
        let x: Vec<f64> = (0..4096).map(|k| 2e-6 * (2.0 * std::f64::consts::PI * 62.5 * k as f64 * dt).sin()).collect();
        let (f, p) = hann_power_spectrum(&x, dt, 4);
        let peaks = detect_peaks(&f, &p, &PeakOptions { min_separation: 2.0 / 4.096, ..Default::default() });
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert!((peaks[0].frequency - 62.5).abs() < 0.01);
        assert!((peaks[0].height.sqrt() / 2e-6 - 1.0).abs() < 0.02);
    }

    fn single_ion() -> (EnsembleState, ForceConfig) {
        let be = presets::species("Be+").unwrap();
        let mut trap = presets::trap("be").unwrap();
        trap.v_ec = 5.0;
        let ion = IonState { position: [2e-6, 0.0, 0.0], velocity: [0.0; 3], species: 0, alive: true };
        let st = EnsembleState::from_ions(vec![ion], vec![be], 1).unwrap();
        let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, trap, 1.0);
        cfg.timestep = cfg.timestep_limit(&st);
        (st, cfg)
    }

    #[test]
    fn single_ion_fft_line() {
        let (st, cfg) = single_ion();
        let fr = expected_frequencies(&st, &cfg)[0].1;
        let mut fc = FftConfig::new(0, 30.0 / fr);
        fc.offset_fraction = 0.0;
        let s = spectrum_fft(&st, &cfg, &Cooling::off(), &HeatingModel::none(), &fc).unwrap();
        let p = s.peak_in(0.5 * fr, 1.5 * fr).unwrap();
        assert!((p.frequency / fr - 1.0).abs() < 0.01, "{} vs {}", p.frequency, fr);
        assert_eq!(s.peaks.len(), 1, "{:?}", s.peaks);
        assert!(matches!(
            spectrum_fft(&st, &cfg, &Cooling::off(), &HeatingModel::none(), &FftConfig::new(0, 5.0 / fr)),
            Err(Error::WindowTooShort(_))
        ));
    }

    #[test]
    fn zero_offset_cold_crystal_has_no_peaks() {
        let be = presets::species("Be+").unwrap().laser_cooled(1000.0);
        let mut trap = presets::trap("be").unwrap();
        trap.v_ec = 5.0;
        let mut st = init_ensemble(&[(be, 20)], &trap, 3, 0.0).unwrap();
        let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, trap, 1.0);
        cfg.timestep = cfg.timestep_limit(&st);
        crate::dynamics::relax(&mut st, &cfg, 2e5, 1e-4).unwrap();
        let fr = expected_frequencies(&st, &cfg)[0].1;
        let mut fc = FftConfig::new(0, 20.0 / fr);
        fc.offset_fraction = 0.0;
        let cooling = Cooling::from_species(st.species());
        let s = spectrum_fft(&st, &cfg, &cooling, &HeatingModel::none(), &fc).unwrap();
        assert!(s.peaks.is_empty(), "{:?}", s.peaks);
        fc.offset_fraction = 0.05;
        let s = spectrum_fft(&st, &cfg, &cooling, &HeatingModel::none(), &fc).unwrap();
        assert!(!s.peaks.is_empty());
    }

    #[test]
    fn single_ion_sweep_resonance() {
        let (st, cfg) = single_ion();
        let fr = expected_frequencies(&st, &cfg)[0].1;
        let freqs: Vec<f64> = (0..21).map(|k| fr * (0.9 + 0.01 * k as f64)).collect();
        let sw = SweepConfig {
            frequencies: freqs,
            amplitude: 0.05,
            direction: [1.0, 0.0, 0.0],
            settle: 20.0 / fr,
            dwell: 40.0 / fr,
            readout: 0,
            sample_stride: 5,
        };
        let cooling = Cooling::off().with_damping(2e4);
        let s = spectrum_sweep(&st, &cfg, &cooling, &HeatingModel::none(), &sw).unwrap();
        let p = s.peak_in(0.0, f64::INFINITY).unwrap();
        assert!((p.frequency / fr - 1.0).abs() < 0.02, "{} vs {}", p.frequency, fr);
        assert!(s.response.iter().all(|r| *r >= 0.0));
    }
}
