//! Rovibrational population kinetics under blackbody radiation, spontaneous
//! emission, IR pumping and UV photodissociation, and rotational
//! thermometry from level populations.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::constants::{BOLTZMANN, PLANCK, SPEED_OF_LIGHT};
use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, linear_least_squares, LmOptions};
use crate::io::{Cell, Csv};

const TOY_SCHEME: &str = include_str!("../../data/hd_plus_toy.txt");

/// Largest RK4 step as a fraction of the fastest decay time.
pub const STEP_FRACTION: f64 = 0.05;
/// Step count above which [`integrate`] reports a stiff system.
pub const MAX_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub v: u32,
    pub j: u32,
    /// J
    pub energy: f64,
}

impl Level {
    pub fn degeneracy(&self) -> f64 {
        (2 * self.j + 1) as f64
    }

    pub fn label(&self) -> String {
        format!("v{}J{}", self.v, self.j)
    }
}

/// Spontaneous emission line `upper -> lower`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub upper: (u32, u32),
    pub lower: (u32, u32),
    /// 1/s
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelScheme {
    pub levels: Vec<Level>,
    pub lines: Vec<Line>,
    /// UV dissociation cross sections (m²) by (v, J).
    pub dissociation: BTreeMap<(u32, u32), f64>,
}

impl LevelScheme {
    /// The bundled toy HD⁺-like scheme (v = 0..4). Not authoritative data.
    pub fn toy_hd_plus() -> Self {
        Self::parse(TOY_SCHEME).expect("bundled level scheme parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `level v J energy_J`, `line v J v' J' A_per_s` and
    /// `diss v J sigma_m2` records; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            let tok: Vec<&str> = body.split_whitespace().collect();
            let perr = |m: String| Error::Parse { line, message: m };
            let int = |k: usize| -> Result<u32> {
                tok.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| perr(format!("field {k}: expected integer")))
            };
            let num = |k: usize| -> Result<f64> {
                tok.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| perr(format!("field {k}: expected number")))
            };
            let want = |n: usize| -> Result<()> {
                if tok.len() == n {
                    Ok(())
                } else {
                    Err(perr(format!("`{}` takes {} fields, got {}", tok[0], n - 1, tok.len() - 1)))
                }
            };
            match tok[0] {
                "level" => {
                    want(4)?;
                    s.levels.push(Level { v: int(1)?, j: int(2)?, energy: num(3)? });
                }
                "line" => {
                    want(6)?;
                    s.lines.push(Line { upper: (int(1)?, int(2)?), lower: (int(3)?, int(4)?), a: num(5)? });
                }
                "diss" => {
                    want(4)?;
                    s.dissociation.insert((int(1)?, int(2)?), num(3)?);
                }
                other => return Err(perr(format!("unknown record `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn index_of(&self, v: u32, j: u32) -> Result<usize> {
        self.levels.iter().position(|l| l.v == v && l.j == j).ok_or(Error::UnknownLevel { v, j })
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(invalid("level scheme has no levels"));
        }
        for (i, a) in self.levels.iter().enumerate() {
            if self.levels[..i].iter().any(|b| b.v == a.v && b.j == a.j) {
                return Err(invalid(format!("duplicate level (v={}, J={})", a.v, a.j)));
            }
            if !a.energy.is_finite() {
                return Err(invalid(format!("level (v={}, J={}): non-finite energy", a.v, a.j)));
            }
            let below = self.levels.iter().filter(|b| b.v == a.v && b.j < a.j);
            if below.into_iter().any(|b| b.energy >= a.energy) {
                return Err(invalid(format!("v={}: energies must increase with J", a.v)));
            }
        }
        for l in &self.lines {
            let u = self.index_of(l.upper.0, l.upper.1)?;
            let d = self.index_of(l.lower.0, l.lower.1)?;
            if l.upper.1.abs_diff(l.lower.1) != 1 {
                return Err(Error::SelectionRule { v: l.upper.0, j: l.upper.1, v2: l.lower.0, j2: l.lower.1 });
            }
            if !(l.a >= 0.0) {
                return Err(invalid("Einstein A coefficients must be >= 0"));
            }
            if !(self.levels[u].energy > self.levels[d].energy) {
                return Err(invalid(format!(
                    "line (v={}, J={}) -> (v={}, J={}): upper level must lie higher",
                    l.upper.0, l.upper.1, l.lower.0, l.lower.1
                )));
            }
        }
        for (&(v, j), &sigma) in &self.dissociation {
            self.index_of(v, j)?;
            if !(sigma >= 0.0) {
                return Err(invalid("dissociation cross sections must be >= 0"));
            }
        }
        Ok(())
    }

    /// Sub-scheme with the levels of vibrational state `v` only.
    pub fn manifold(&self, v: u32) -> Self {
        Self {
            levels: self.levels.iter().filter(|l| l.v == v).copied().collect(),
            lines: self.lines.iter().filter(|l| l.upper.0 == v && l.lower.0 == v).copied().collect(),
            dissociation: self.dissociation.iter().filter(|(k, _)| k.0 == v).map(|(k, s)| (*k, *s)).collect(),
        }
    }
}

/// IR pump between two levels (rate out of `lower`, 1/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrPump {
    pub lower: (u32, u32),
    pub upper: (u32, u32),
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvField {
    /// W/m²
    pub intensity: f64,
    /// m
    pub wavelength: f64,
}

impl UvField {
    pub fn photon_flux(&self) -> f64 {
        self.intensity * self.wavelength / (PLANCK * SPEED_OF_LIGHT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RadiationEnv {
    /// K
    pub t_bbr: f64,
    pub ir: Option<IrPump>,
    pub uv: Option<UvField>,
}

/// Planck occupation number at energy `e` (J) and temperature `t` (K).
pub fn planck_occupation(e: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = e / (BOLTZMANN * t);
    if x > 700.0 {
        0.0
    } else {
        1.0 / x.exp_m1()
    }
}

/// Generator of the population dynamics, `dp/dt = G p`. The last row and
/// column belong to the dissociated sink.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub generator: DMatrix<f64>,
}

impl RateMatrix {
    pub fn levels(&self) -> usize {
        self.generator.nrows() - 1
    }

    /// Largest total loss rate out of any level (1/s).
    pub fn max_rate(&self) -> f64 {
        (0..self.generator.nrows()).map(|i| self.generator[(i, i)].abs()).fold(0.0, f64::max)
    }

    /// Stationary distribution over the levels (sink excluded), assuming no
    /// flow into the sink.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.levels();
        let mut a = self.generator.view((0, 0), (n, n)).into_owned();
        let mut b = DVector::zeros(n);
        for k in 0..n {
            a[(n - 1, k)] = 1.0;
        }
        b[n - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or_else(|| Error::Degenerate("rate matrix has no unique stationary state".into()))?;
        Ok(x.iter().copied().collect())
    }
}

pub fn build_rate_matrix(scheme: &LevelScheme, env: &RadiationEnv) -> Result<RateMatrix> {
    scheme.validate()?;
    if !(env.t_bbr >= 0.0) {
        return Err(invalid("blackbody temperature must be >= 0"));
    }
    let n = scheme.levels.len();
    let mut g = DMatrix::zeros(n + 1, n + 1);
    for l in &scheme.lines {
        let u = scheme.index_of(l.upper.0, l.upper.1)?;
        let d = scheme.index_of(l.lower.0, l.lower.1)?;
        let (lu, ld) = (scheme.levels[u], scheme.levels[d]);
        let nbar = planck_occupation(lu.energy - ld.energy, env.t_bbr);
        g[(d, u)] += l.a * (1.0 + nbar);
        g[(u, d)] += l.a * nbar * lu.degeneracy() / ld.degeneracy();
    }
    if let Some(ir) = env.ir {
        if !(ir.rate >= 0.0) {
            return Err(invalid("IR pump rate must be >= 0"));
        }
        let d = scheme.index_of(ir.lower.0, ir.lower.1)?;
        let u = scheme.index_of(ir.upper.0, ir.upper.1)?;
        g[(u, d)] += ir.rate;
        g[(d, u)] += ir.rate * scheme.levels[d].degeneracy() / scheme.levels[u].degeneracy();
    }
    if let Some(uv) = env.uv {
        if !(uv.intensity >= 0.0 && uv.wavelength > 0.0) {
            return Err(invalid("UV field needs intensity >= 0 and wavelength > 0"));
        }
        let flux = uv.photon_flux();
        for (&(v, j), &sigma) in &scheme.dissociation {
            g[(n, scheme.index_of(v, j)?)] += sigma * flux;
        }
    }
    for c in 0..=n {
        let s: f64 = (0..=n).filter(|&r| r != c).map(|r| g[(r, c)]).sum();
        g[(c, c)] = -s;
    }
    Ok(RateMatrix { generator: g })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationVector {
    pub levels: Vec<f64>,
    pub sink: f64,
}

impl PopulationVector {
    pub fn new(levels: Vec<f64>, sink: f64) -> Result<Self> {
        let p = Self { levels, sink };
        p.validate()?;
        Ok(p)
    }

    /// All population in one level.
    pub fn delta(scheme: &LevelScheme, v: u32, j: u32) -> Result<Self> {
        let mut levels = vec![0.0; scheme.levels.len()];
        levels[scheme.index_of(v, j)?] = 1.0;
        Ok(Self { levels, sink: 0.0 })
    }

    /// Thermal populations over every level of the scheme.
    pub fn boltzmann(scheme: &LevelScheme, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(invalid("temperature must be >= 0"));
        }
        let e0 = scheme.levels.iter().map(|l| l.energy).fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = scheme
            .levels
            .iter()
            .map(|l| {
                if t == 0.0 {
                    if l.energy == e0 {
                        l.degeneracy()
                    } else {
                        0.0
                    }
                } else {
                    l.degeneracy() * (-(l.energy - e0) / (BOLTZMANN * t)).exp()
                }
            })
            .collect();
        let z: f64 = w.iter().sum();
        Ok(Self { levels: w.iter().map(|x| x / z).collect(), sink: 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.iter().chain([&self.sink]).any(|p| !(*p >= -1e-12)) {
            return Err(invalid("populations must be >= 0"));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("populations sum to {}, not 1", self.total())));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.levels.iter().sum::<f64>() + self.sink
    }

    pub fn survival(&self) -> f64 {
        1.0 - self.sink
    }

    fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.levels.len() + 1, self.levels.iter().copied().chain([self.sink]))
    }

    fn from_vector(x: &DVector<f64>) -> Self {
        let n = x.len() - 1;
        Self { levels: x.rows(0, n).iter().copied().collect(), sink: x[n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrajectory {
    pub times: Vec<f64>,
    pub populations: Vec<PopulationVector>,
}

impl PopulationTrajectory {
    pub fn survival(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.survival()).collect()
    }

    pub fn to_csv(&self, scheme: &LevelScheme) -> Csv {
        let labels: Vec<String> = scheme.levels.iter().map(|l| l.label()).collect();
        let mut header = vec!["t_s"];
        header.extend(labels.iter().map(|s| s.as_str()));
        header.push("sink");
        let mut csv = Csv::with_header(&header);
        for (t, p) in self.times.iter().zip(&self.populations) {
            let mut row = vec![Cell::F(*t)];
            row.extend(p.levels.iter().map(|x| Cell::F(*x)));
            row.push(Cell::F(p.sink));
            csv.row(&row);
        }
        csv
    }
}

/// Fixed-step RK4 over `duration`, returning `samples + 1` evenly spaced
/// states (including the start).
pub fn integrate(
    initial: &PopulationVector,
    matrix: &RateMatrix,
    duration: f64,
    samples: usize,
) -> Result<PopulationTrajectory> {
    if !(duration > 0.0) {
        return Err(invalid("duration must be positive"));
    }
    if samples == 0 {
        return Err(invalid("need at least one output sample"));
    }
    initial.validate()?;
    if initial.levels.len() != matrix.levels() {
        return Err(Error::DimensionMismatch { a: (initial.levels.len(), 1), b: (matrix.levels(), 1) });
    }
    let g = &matrix.generator;
    let rate = matrix.max_rate();
    let per_sample = if rate > 0.0 { (duration / samples as f64 * rate / STEP_FRACTION).ceil() as u64 } else { 1 };
    let total = per_sample.max(1).saturating_mul(samples as u64);
    if total > MAX_STEPS {
        return Err(Error::Stiff { steps: total, limit: MAX_STEPS });
    }
    let h = duration / total as f64;
    let mut x = initial.as_vector();
    let mut times = vec![0.0];
    let mut populations = vec![initial.clone()];
    for s in 1..=samples {
        for _ in 0..per_sample.max(1) {
            let k1 = g * &x;
            let k2 = g * (&x + &k1 * (0.5 * h));
            let k3 = g * (&x + &k2 * (0.5 * h));
            let k4 = g * (&x + &k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        times.push(duration * s as f64 / samples as f64);
        populations.push(PopulationVector::from_vector(&x));
    }
    Ok(PopulationTrajectory { times, populations })
}

/// Survival `1 - sink` starting from a thermal distribution at `t_rot`.
pub fn rempd_survival(
    scheme: &LevelScheme,
    env: &RadiationEnv,
    t_rot: f64,
    duration: f64,
    samples: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = build_rate_matrix(scheme, env)?;
    let p0 = PopulationVector::boltzmann(scheme, t_rot)?;
    let traj = integrate(&p0, &m, duration, samples)?;
    let s = traj.survival();
    Ok((traj.times, s))
}

/// Fast and slow decay rates from `S = a e^{-k1 t} + (1 - a) e^{-k2 t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timescales {
    pub fast_weight: f64,
    /// 1/s
    pub fast: f64,
    /// 1/s
    pub slow: f64,
}

impl Timescales {
    pub fn ratio(&self) -> f64 {
        self.fast / self.slow
    }
}

/// Two-exponential fit of a survival curve.
///
/// The sample spacing has to resolve the fast decay; coarser grids return a
/// fast rate of roughly the inverse spacing.
pub fn survival_timescales(times: &[f64], survival: &[f64]) -> Result<Timescales> {
    if times.len() != survival.len() || times.len() < 6 {
        return Err(Error::InsufficientSamples("need at least 6 survival points".into()));
    }
    let n = times.len();
    let tail = n / 2;
    let slow0 = ((survival[tail] / survival[n - 1]).ln() / (times[n - 1] - times[tail])).max(1e-12);
    let a0 = (1.0 - survival[tail] * (slow0 * times[tail]).exp()).clamp(0.01, 0.99);
    let fast0 = ((1.0 - survival[1]) / (a0 * times[1])).max(10.0 * slow0);
    let fit = levenberg_marquardt(
        |p| {
            times
                .iter()
                .zip(survival)
                .map(|(t, s)| p[0] * (-p[1].abs() * t).exp() + (1.0 - p[0]) * (-p[2].abs() * t).exp() - s)
                .collect()
        },
        &[a0, fast0, slow0],
        &LmOptions::default(),
    )?;
    let (a, k1, k2) = (fit.params[0], fit.params[1].abs(), fit.params[2].abs());
    let (a, fast, slow) = if k1 >= k2 { (a, k1, k2) } else { (1.0 - a, k2, k1) };
    Ok(Timescales { fast_weight: a, fast, slow })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationalFit {
    /// K; infinite or negative when the populations do not fall with energy.
    pub temperature: f64,
    /// Weighted RMS residual of ln(p/g).
    pub residual: f64,
    /// Set for non-thermal input.
    pub flagged: bool,
}

/// Residual of ln(p/g) above which the input is flagged as non-thermal.
pub const THERMAL_RESIDUAL_LIMIT: f64 = 0.25;

/// Weighted least-squares fit of `ln(p / g)` against energy. Input rows are
/// `(energy J, degeneracy, population)`; weights are the populations.
pub fn boltzmann_fit(rows: &[(f64, f64, f64)]) -> Result<RotationalFit> {
    let used: Vec<_> = rows.iter().filter(|r| r.2 > 0.0 && r.1 > 0.0).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientSamples(format!("{} levels with positive population, need 3", used.len())));
    }
    let e0 = used.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let x = DMatrix::from_fn(used.len(), 2, |i, j| if j == 0 { 1.0 } else { (used[i].0 - e0) / BOLTZMANN });
    let y: Vec<f64> = used.iter().map(|r| (r.2 / r.1).ln()).collect();
    let w: Vec<f64> = used.iter().map(|r| r.2).collect();
    let c = linear_least_squares(&x, &y, &w)?;
    let wsum: f64 = w.iter().sum();
    let residual = (used
        .iter()
        .zip(&y)
        .zip(&w)
        .map(|((r, y), w)| w * (y - c[0] - c[1] * (r.0 - e0) / BOLTZMANN).powi(2))
        .sum::<f64>()
        / wsum)
        .sqrt();
    // Slope in units of 1/K.
    let slope = c[1];
    let span = used.iter().map(|r| (r.0 - e0) / BOLTZMANN).fold(0.0, f64::max);
    let temperature = if slope.abs() * span < 1e-12 { f64::INFINITY } else { -1.0 / slope };
    let flagged = !(temperature > 0.0 && temperature.is_finite()) || residual > THERMAL_RESIDUAL_LIMIT;
    Ok(RotationalFit { temperature, residual, flagged })
}

/// [`boltzmann_fit`] over the levels of one vibrational state.
pub fn fit_manifold(scheme: &LevelScheme, populations: &[f64], v: u32) -> Result<RotationalFit> {
    if populations.len() != scheme.levels.len() {
        return Err(Error::DimensionMismatch { a: (populations.len(), 1), b: (scheme.levels.len(), 1) });
    }
    let rows: Vec<_> = scheme
        .levels
        .iter()
        .zip(populations)
        .filter(|(l, _)| l.v == v)
        .map(|(l, p)| (l.energy, l.degeneracy(), *p))
        .collect();
    boltzmann_fit(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(x: f64) -> f64 {
        x * crate::constants::INVERSE_CM_IN_JOULE
    }

    #[test]
    fn toy_scheme_parses() {
        let s = LevelScheme::toy_hd_plus();
        assert!(s.levels.len() < 50);
        s.index_of(0, 2).unwrap();
        s.index_of(4, 1).unwrap();
        assert!(matches!(s.index_of(9, 0), Err(Error::UnknownLevel { .. })));
    }

    #[test]
    fn parse_errors() {
        let bad = "level 0 0 0\nlevel 0 1 1e-22\nline 0 1 0 1 1.0\n";
        assert!(matches!(LevelScheme::parse(bad), Err(Error::SelectionRule { .. })));
        let unknown = "level 0 0 0\nline 0 1 0 0 1.0\n";
        assert!(matches!(LevelScheme::parse(unknown), Err(Error::UnknownLevel { v: 0, j: 1 })));
        assert!(matches!(LevelScheme::parse("level 0 x 0\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn columns_sum_to_zero() {
        let s = LevelScheme::toy_hd_plus();
        let env = RadiationEnv {
            t_bbr: 300.0,
            ir: Some(IrPump { lower: (0, 2), upper: (4, 1), rate: 50.0 }),
            uv: Some(UvField { intensity: 5700.0, wavelength: 266e-9 }),
        };
        let m = build_rate_matrix(&s, &env).unwrap();
        for c in 0..m.generator.ncols() {
            let sum: f64 = m.generator.column(c).iter().sum();
            assert!(sum.abs() <= 1e-12 * m.max_rate(), "{c}: {sum}");
        }
    }

    #[test]
    fn zero_temperature_keeps_only_emission() {
        let s = LevelScheme::toy_hd_plus();
        let m = build_rate_matrix(&s, &RadiationEnv::default()).unwrap();
        for (r, l) in s.levels.iter().enumerate() {
            for (c, u) in s.levels.iter().enumerate() {
                if r != c && m.generator[(r, c)] != 0.0 {
                    assert!(u.energy > l.energy);
                }
            }
        }
    }

    #[test]
    fn bbr_stationary_state_is_thermal() {
        let s = LevelScheme::toy_hd_plus().manifold(0);
        let m = build_rate_matrix(&s, &RadiationEnv { t_bbr: 300.0, ..Default::default() }).unwrap();
        let st = m.stationary().unwrap();
        let b = PopulationVector::boltzmann(&s, 300.0).unwrap();
        for (x, y) in st.iter().zip(&b.levels) {
            assert!((x / y - 1.0).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn rk4_matches_matrix_exponential() {
        let s = LevelScheme::toy_hd_plus().manifold(0);
        let env = RadiationEnv {
            t_bbr: 300.0,
            ir: Some(IrPump { lower: (0, 2), upper: (0, 3), rate: 0.5 }),
            uv: None,
        };
        let mut s2 = s.clone();
        s2.dissociation.insert((0, 3), 1e-21);
        let env = RadiationEnv { uv: Some(UvField { intensity: 1e4, wavelength: 266e-9 }), ..env };
        let m = build_rate_matrix(&s2, &env).unwrap();
        let p0 = PopulationVector::delta(&s2, 0, 2).unwrap();
        let t = 20.0;
        let traj = integrate(&p0, &m, t, 4).unwrap();
        for (ti, p) in traj.times.iter().zip(&traj.populations) {
            let x = (&m.generator * *ti).exp() * p0.as_vector();
            let y = p.as_vector();
            assert!((x - &y).amax() < 1e-8, "t = {ti}");
            assert!((p.total() - 1.0).abs() < 1e-9);
            assert!(p.levels.iter().all(|v| *v >= -1e-9));
        }
    }

    #[test]
    fn zero_matrix_is_identity() {
        let m = RateMatrix { generator: DMatrix::zeros(4, 4) };
        let p = PopulationVector::new(vec![0.2, 0.3, 0.5], 0.0).unwrap();
        let tr = integrate(&p, &m, 1.0, 3).unwrap();
        assert_eq!(tr.populations.last().unwrap(), &p);
    }

    #[test]
    fn boltzmann_fit_exact_and_uniform() {
        let b = 11.0;
        let rows: Vec<_> = (0..=6u32)
            .map(|j| {
                let e = cm(b * (j * (j + 1)) as f64);
                let g = (2 * j + 1) as f64;
                (e, g, g * (-e / (BOLTZMANN * 335.0)).exp())
            })
            .collect();
        let f = boltzmann_fit(&rows).unwrap();
        assert!((f.temperature / 335.0 - 1.0).abs() < 1e-9);
        assert!(!f.flagged);
        let flat: Vec<_> = (0..5).map(|k| (cm(10.0 * k as f64), 1.0, 0.2)).collect();
        let f = boltzmann_fit(&flat).unwrap();
        assert!(f.flagged && f.temperature.is_infinite());
        assert!(boltzmann_fit(&rows[..2]).is_err());
    }

    #[test]
    fn survival_without_uv_is_one() {
        let s = LevelScheme::toy_hd_plus();
        let env = RadiationEnv { t_bbr: 300.0, ir: Some(IrPump { lower: (0, 2), upper: (4, 1), rate: 100.0 }), uv: None };
        let (_, surv) = rempd_survival(&s, &env, 300.0, 1.0, 10).unwrap();
        assert!(surv.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }
}
