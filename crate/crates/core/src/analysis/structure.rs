//! Pair correlation, shell profile and caging of a sampled ensemble.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::io::{Cell, Csv};

pub const CAGING_THRESHOLD: f64 = 0.3;
pub const MIN_SAMPLES_PER_ION: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Gas,
    Liquid,
    Crystallized,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Gas => "gas",
            Phase::Liquid => "liquid",
            Phase::Crystallized => "crystallized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureConfig {
    /// Only ions of this species index; all species when `None`.
    pub species: Option<usize>,
    /// Range of g(r) in units of the mean nearest-neighbour distance.
    pub r_max: f64,
    pub g_bins: usize,
    pub shell_bins: usize,
    /// Ions with |z| below this fraction of the maximum |z| enter the shell profile.
    pub central_fraction: f64,
    pub caging_threshold: f64,
    /// Snapshots used for g(r) (evenly spaced over the window).
    pub g_snapshots: usize,
    /// Shuffled reference ensembles per snapshot.
    pub reference_draws: usize,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            species: None,
            r_max: 3.0,
            g_bins: 30,
            shell_bins: 48,
            central_fraction: 0.5,
            caging_threshold: CAGING_THRESHOLD,
            g_snapshots: 40,
            reference_draws: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureMetrics {
    /// (r in m, g)
    pub g_r: Vec<(f64, f64)>,
    /// (rho in m, density in ions per m² of the cylinder-projected slab)
    pub shell_profile: Vec<(f64, f64)>,
    pub shells: usize,
    /// Depth of the deepest minimum of g(r) behind its first peak.
    pub g_overshoot: f64,
    pub monotonic: bool,
    pub mean_spacing: f64,
    pub rms_displacement: f64,
    pub caging_ratio: f64,
    pub phase: Phase,
}

impl StructureMetrics {
    pub fn g_csv(&self) -> Csv {
        let mut c = Csv::with_header(&["r_m", "g"]);
        for &(r, g) in &self.g_r {
            c.row(&[Cell::F(r), Cell::F(g)]);
        }
        c
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn pair_histogram(pos: &[[f64; 3]], width: f64, hist: &mut [f64]) {
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let k = (dist(&pos[i], &pos[j]) / width) as usize;
            if k < hist.len() {
                hist[k] += 1.0;
            }
        }
    }
}

fn mean_nn_distance(pos: &[[f64; 3]]) -> f64 {
    let mut sum = 0.0;
    for i in 0..pos.len() {
        let mut best = f64::INFINITY;
        for j in 0..pos.len() {
            if i != j {
                best = best.min(dist(&pos[i], &pos[j]));
            }
        }
        sum += best;
    }
    sum / pos.len() as f64
}

/// Local maxima of a 3-bin smoothed profile rising at least `prominence`
/// (relative to the profile maximum) above the minima on both sides.
pub fn count_peaks(profile: &[f64], prominence: f64) -> usize {
    let n = profile.len();
    if n < 3 {
        return 0;
    }
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            profile[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let top = s.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    let thr = prominence * top;
    let valley = |range: &mut dyn Iterator<Item = usize>, h: f64| {
        let mut v = h;
        for k in range {
            if s[k] > h {
                return Some(v);
            }
            v = v.min(s[k]);
        }
        // Open edge: the profile never rises again on this side.
        if v < h { Some(v) } else { None }
    };
    let mut count = 0;
    for i in 0..n {
        let h = s[i];
        if h < thr || (i > 0 && s[i - 1] >= h) || (i + 1 < n && s[i + 1] > h) {
            continue;
        }
        let left = valley(&mut (0..i).rev(), h);
        let right = valley(&mut (i + 1..n), h);
        let base = match (left, right) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 0.0,
        };
        if h - base >= thr {
            count += 1;
        }
    }
    count
}

/// Computes g(r) against a reference built by independently shuffling each
/// Cartesian coordinate across ions (same marginals, no correlations), the
/// radial density profile of the central slab, and the caging ratio
/// (RMS displacement about the window-mean position over mean
/// nearest-neighbour distance).
pub fn structure_metrics(traj: &Trajectory, cfg: &StructureConfig) -> Result<StructureMetrics> {
    if cfg.r_max <= 0.0 || cfg.g_bins < 3 || cfg.shell_bins < 3 || cfg.g_snapshots == 0 || cfg.reference_draws == 0 {
        return Err(invalid("structure config needs r_max > 0, at least 3 bins and one snapshot"));
    }
    let snaps = &traj.snapshots;
    if snaps.len() < MIN_SAMPLES_PER_ION {
        return Err(Error::InsufficientSamples(format!(
            "{} samples per ion, need at least {MIN_SAMPLES_PER_ION}",
            snaps.len()
        )));
    }
    let last = snaps.last().unwrap();
    let sel: Vec<usize> = (0..last.ions.len())
        .filter(|&i| {
            cfg.species.map_or(true, |s| last.ions[i].species == s) && snaps.iter().all(|sn| sn.ions.get(i).is_some_and(|x| x.alive))
        })
        .collect();
    if sel.len() < 2 {
        return Err(Error::InsufficientSamples("fewer than two ions present over the whole window".into()));
    }
    let positions = |k: usize| -> Vec<[f64; 3]> { sel.iter().map(|&i| snaps[k].ions[i].position).collect() };

    let n_g = cfg.g_snapshots.min(snaps.len());
    let picks: Vec<usize> = (0..n_g).map(|k| (k * (snaps.len() - 1)) / (n_g.max(2) - 1).max(1)).collect();
    let spacing = picks.iter().map(|&k| mean_nn_distance(&positions(k))).sum::<f64>() / n_g as f64;
    let width = cfg.r_max * spacing / cfg.g_bins as f64;
    let mut hist = vec![0.0; cfg.g_bins];
    let mut reference = vec![0.0; cfg.g_bins];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_9e);
    for &k in &picks {
        let pos = positions(k);
        pair_histogram(&pos, width, &mut hist);
        for _ in 0..cfg.reference_draws {
            let mut axes: Vec<Vec<f64>> = (0..3).map(|a| pos.iter().map(|p| p[a]).collect()).collect();
            for ax in axes.iter_mut() {
                ax.shuffle(&mut rng);
            }
            let shuffled: Vec<[f64; 3]> = (0..pos.len()).map(|i| [axes[0][i], axes[1][i], axes[2][i]]).collect();
            let mut h = vec![0.0; cfg.g_bins];
            pair_histogram(&shuffled, width, &mut h);
            for (r, v) in reference.iter_mut().zip(h) {
                *r += v / cfg.reference_draws as f64;
            }
        }
    }
    let g_r: Vec<(f64, f64)> = (0..cfg.g_bins)
        .map(|b| {
            let r = (b as f64 + 0.5) * width;
            let g = if reference[b] > 0.0 { hist[b] / reference[b] } else { 0.0 };
            (r, g)
        })
        .collect();

    // Overshoot: largest drop of g behind its maximum, beyond counting noise.
    let peak = (0..g_r.len()).max_by(|&a, &b| g_r[a].1.total_cmp(&g_r[b].1)).unwrap();
    let mut overshoot = 0.0f64;
    let mut significant = false;
    for b in peak + 1..g_r.len() {
        let drop = g_r[peak].1 - g_r[b].1;
        // Poisson error of the histogram ratio
        let var = |k: usize| g_r[k].1 * g_r[k].1 / hist[k].max(1.0);
        let noise = 3.0 * (var(peak) + var(b)).sqrt();
        overshoot = overshoot.max(drop);
        if drop > noise + 0.05 {
            significant = true;
        }
    }
    let monotonic = !significant;

    // Caging: displacement about the mean position over the whole window.
    let m = snaps.len() as f64;
    let mut msd = 0.0;
    for &i in &sel {
        let mut mean = [0.0; 3];
        for s in snaps {
            for a in 0..3 {
                mean[a] += s.ions[i].position[a] / m;
            }
        }
        for s in snaps {
            msd += dist(&s.ions[i].position, &mean).powi(2);
        }
    }
    let rms = (msd / (m * sel.len() as f64)).sqrt();
    let caging_ratio = rms / spacing;

    // Shell profile from all samples of the central slab.
    let zmax = sel.iter().map(|&i| snaps.iter().map(|s| s.ions[i].position[2].abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let zcut = cfg.central_fraction * zmax;
    let rho_max = sel
        .iter()
        .map(|&i| snaps.iter().map(|s| s.ions[i].position[0].hypot(s.ions[i].position[1])).fold(0.0, f64::max))
        .fold(0.0, f64::max)
        * 1.02;
    let dr = rho_max.max(f64::MIN_POSITIVE) / cfg.shell_bins as f64;
    let mut counts = vec![0.0; cfg.shell_bins];
    for s in snaps {
        for &i in &sel {
            let p = s.ions[i].position;
            if p[2].abs() <= zcut {
                let k = (p[0].hypot(p[1]) / dr) as usize;
                if k < counts.len() {
                    counts[k] += 1.0;
                }
            }
        }
    }
    let shell_profile: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let rho = (k as f64 + 0.5) * dr;
            (rho, c / (m * 2.0 * std::f64::consts::PI * rho * dr))
        })
        .collect();
    // Count peaks in the radial distribution (counts per shell, not per area,
    // so the axis region does not dominate).
    let shells = count_peaks(&counts, 0.15);

    let phase = if caging_ratio < cfg.caging_threshold {
        Phase::Crystallized
    } else if !monotonic {
        Phase::Liquid
    } else {
        Phase::Gas
    };
    Ok(StructureMetrics {
        g_r,
        shell_profile,
        shells,
        g_overshoot: overshoot,
        monotonic,
        mean_spacing: spacing,
        rms_displacement: rms,
        caging_ratio,
        phase,
    })
}
