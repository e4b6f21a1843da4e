//! Force evaluation: trap, Coulomb, light pressure and excitation drive.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::constants::COULOMB_CONSTANT;
use crate::error::{invalid, Error, Result};
use crate::trap::{axis_frequencies_sq, TrapConfig};

use super::state::EnsembleState;

/// Pairs closer than this abort the run (m).
pub const MIN_PAIR_DISTANCE: f64 = 100e-9;

/// Ions per tile of the pair kernel. Fixed so that the summation order never
/// depends on the number of worker threads.
const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapMode {
    /// Time-dependent RF field, micromotion included.
    RfFull,
    /// Time-averaged harmonic pseudopotential.
    Pseudopotential,
}

impl TrapMode {
    pub fn name(self) -> &'static str {
        match self {
            TrapMode::RfFull => "rf_full",
            TrapMode::Pseudopotential => "pseudopotential",
        }
    }
}

/// Linear frequency sweep of an excitation drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub f_start: f64,
    pub f_end: f64,
    /// Hz/s, signed.
    pub rate: f64,
}

/// Uniform oscillating electric field `E0 cos(phi(t)) e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationDrive {
    /// V/m
    pub amplitude: f64,
    /// Hz, used when there is no sweep.
    pub frequency: f64,
    pub direction: [f64; 3],
    pub sweep: Option<Sweep>,
    /// Time at which the drive phase (and any sweep) starts.
    pub t0: f64,
}

impl ExcitationDrive {
    pub fn new(amplitude: f64, frequency: f64, direction: [f64; 3]) -> Result<Self> {
        let d = Self { amplitude, frequency, direction, sweep: None, t0: 0.0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("drive amplitude must be >= 0"));
        }
        let n = self.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(invalid("drive direction must be a unit vector"));
        }
        Ok(())
    }

    /// Instantaneous frequency (Hz).
    pub fn frequency_at(&self, t: f64) -> f64 {
        match self.sweep {
            None => self.frequency,
            Some(s) => {
                let tau = (t - self.t0).max(0.0);
                let f = s.f_start + s.rate * tau;
                if s.rate >= 0.0 {
                    f.min(s.f_end)
                } else {
                    f.max(s.f_end)
                }
            }
        }
    }

    fn phase(&self, t: f64) -> f64 {
        let tau = t - self.t0;
        match self.sweep {
            None => 2.0 * PI * self.frequency * tau,
            Some(s) => {
                let tau = tau.max(0.0);
                let t_end = if s.rate == 0.0 { f64::INFINITY } else { (s.f_end - s.f_start) / s.rate };
                if tau <= t_end {
                    2.0 * PI * (s.f_start * tau + 0.5 * s.rate * tau * tau)
                } else {
                    let p_end = s.f_start * t_end + 0.5 * s.rate * t_end * t_end;
                    2.0 * PI * (p_end + s.f_end * (tau - t_end))
                }
            }
        }
    }

    /// Field vector at time `t` (V/m).
    pub fn field(&self, t: f64) -> [f64; 3] {
        let e = self.amplitude * self.phase(t).cos();
        [e * self.direction[0], e * self.direction[1], e * self.direction[2]]
    }
}

/// Linear ramp of the RF amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfRamp {
    pub t0: f64,
    pub v_start: f64,
    pub v_end: f64,
    pub duration: f64,
}

impl RfRamp {
    pub fn value(&self, t: f64) -> f64 {
        let s = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        self.v_start + (self.v_end - self.v_start) * s
    }
}

/// Everything that determines the conservative force field.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceConfig {
    pub mode: TrapMode,
    pub trap: TrapConfig,
    /// s
    pub timestep: f64,
    pub coulomb: bool,
    pub drive: Option<ExcitationDrive>,
    /// When set, overrides `trap.v_rf` as a function of time.
    pub rf_ramp: Option<RfRamp>,
}

impl ForceConfig {
    pub fn new(mode: TrapMode, trap: TrapConfig, timestep: f64) -> Self {
        Self { mode, trap, timestep, coulomb: true, drive: None, rf_ramp: None }
    }

    pub fn v_rf_at(&self, t: f64) -> f64 {
        self.rf_ramp.map_or(self.trap.v_rf, |r| r.value(t))
    }

    /// Trap at time `t` with any RF ramp applied.
    pub fn trap_at(&self, t: f64) -> TrapConfig {
        let mut trap = self.trap.clone();
        trap.v_rf = self.v_rf_at(t);
        trap
    }

    /// Largest allowed timestep for the species present in `state`.
    pub fn timestep_limit(&self, state: &EnsembleState) -> f64 {
        match self.mode {
            TrapMode::RfFull => self.trap.rf_period() / 50.0,
            TrapMode::Pseudopotential => {
                let counts = state.counts();
                let mut w_max: f64 = 0.0;
                for (s, sp) in state.species().iter().enumerate() {
                    if counts[s] == 0 {
                        continue;
                    }
                    let v_max = match self.rf_ramp {
                        Some(r) => r.v_start.abs().max(r.v_end.abs()),
                        None => self.trap.v_rf.abs(),
                    };
                    let mut trap = self.trap.clone();
                    trap.v_rf = v_max;
                    for w2 in axis_frequencies_sq(&trap, sp) {
                        w_max = w_max.max(w2.abs().sqrt());
                    }
                }
                if w_max == 0.0 {
                    f64::INFINITY
                } else {
                    2.0 * PI / w_max / 100.0
                }
            }
        }
    }

    pub fn validate(&self, state: &EnsembleState) -> Result<()> {
        self.trap.validate()?;
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(invalid("timestep must be positive"));
        }
        if let Some(d) = &self.drive {
            d.validate()?;
        }
        let limit = self.timestep_limit(state);
        if self.timestep > limit * (1.0 + 1e-9) {
            return Err(Error::TimestepTooLarge { dt: self.timestep, limit, mode: self.mode.name() });
        }
        Ok(())
    }
}

/// Forces on every ion at a given time, indexed like the ion list.
#[derive(Debug, Clone)]
pub(crate) struct ForceCache {
    pub time: f64,
    pub config: ForceConfig,
    pub light_pressure: Vec<f64>,
    pub axis: [f64; 3],
    pub force: Vec<[f64; 3]>,
}

struct Tile {
    row: [Vec<f64>; 3],
    col: [Vec<f64>; 3],
    min_r2: f64,
}

/// Adds the interactions of ion `i` with the targets to the target buffers
/// and returns the force on `i`. `kq` is `k * q_i`.
#[inline(always)]
fn pair_row(
    p: [f64; 3],
    kq: f64,
    xs: &[f64],
    ys: &[f64],
    zs: &[f64],
    qs: &[f64],
    tx: &mut [f64],
    ty: &mut [f64],
    tz: &mut [f64],
    min_r2: &mut f64,
) -> [f64; 3] {
    const L: usize = 4;
    let n = xs.len();
    let split = n - n % L;
    let mut ax = [0.0f64; L];
    let mut ay = [0.0f64; L];
    let mut az = [0.0f64; L];
    let mut mr = [f64::INFINITY; L];
    let it = xs[..split]
        .chunks_exact(L)
        .zip(ys[..split].chunks_exact(L))
        .zip(zs[..split].chunks_exact(L))
        .zip(qs[..split].chunks_exact(L))
        .zip(tx[..split].chunks_exact_mut(L))
        .zip(ty[..split].chunks_exact_mut(L))
        .zip(tz[..split].chunks_exact_mut(L));
    for ((((((x, y), z), q), fx), fy), fz) in it {
        for l in 0..L {
            let dx = p[0] - x[l];
            let dy = p[1] - y[l];
            let dz = p[2] - z[l];
            let r2 = dx * dx + dy * dy + dz * dz;
            mr[l] = if r2 < mr[l] { r2 } else { mr[l] };
            let s = kq * q[l] / (r2 * r2.sqrt());
            ax[l] += s * dx;
            ay[l] += s * dy;
            az[l] += s * dz;
            fx[l] -= s * dx;
            fy[l] -= s * dy;
            fz[l] -= s * dz;
        }
    }
    for j in split..n {
        let dx = p[0] - xs[j];
        let dy = p[1] - ys[j];
        let dz = p[2] - zs[j];
        let r2 = dx * dx + dy * dy + dz * dz;
        mr[0] = mr[0].min(r2);
        let s = kq * qs[j] / (r2 * r2.sqrt());
        ax[0] += s * dx;
        ay[0] += s * dy;
        az[0] += s * dz;
        tx[j] -= s * dx;
        ty[j] -= s * dy;
        tz[j] -= s * dz;
    }
    *min_r2 = min_r2.min(mr[0].min(mr[1]).min(mr[2].min(mr[3])));
    [
        (ax[0] + ax[1]) + (ax[2] + ax[3]),
        (ay[0] + ay[1]) + (ay[2] + ay[3]),
        (az[0] + az[1]) + (az[2] + az[3]),
    ]
}

fn tile(b: usize, x: &[f64], y: &[f64], z: &[f64], q: &[f64]) -> Tile {
    let n = x.len();
    let start = b * BLOCK;
    let end = (start + BLOCK).min(n);
    let m = end - start;
    let mut row = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    let mut col = [vec![0.0; n - end], vec![0.0; n - end], vec![0.0; n - end]];
    let mut min_r2 = f64::INFINITY;
    for i in start..end {
        let p = [x[i], y[i], z[i]];
        let kq = COULOMB_CONSTANT * q[i];
        let li = i - start;
        let (head, tail) = (li + 1, m);
        let [rx, ry, rz] = &mut row;
        let fi = pair_row(
            p,
            kq,
            &x[i + 1..end],
            &y[i + 1..end],
            &z[i + 1..end],
            &q[i + 1..end],
            &mut rx[head..tail],
            &mut ry[head..tail],
            &mut rz[head..tail],
            &mut min_r2,
        );
        let [cx, cy, cz] = &mut col;
        let fo = pair_row(
            p, kq, &x[end..], &y[end..], &z[end..], &q[end..], cx, cy, cz, &mut min_r2,
        );
        row[0][li] += fi[0] + fo[0];
        row[1][li] += fi[1] + fo[1];
        row[2][li] += fi[2] + fo[2];
    }
    Tile { row, col, min_r2 }
}

/// Direct-sum Coulomb forces on point charges. Returns the forces and the
/// smallest squared pair distance.
///
/// The sum is tiled in fixed blocks; tiles run in parallel and are reduced
/// in ascending block order, so results are bit-identical for any number of
/// threads.
pub fn coulomb_forces(x: &[f64], y: &[f64], z: &[f64], q: &[f64]) -> (Vec<[f64; 3]>, f64) {
    let n = x.len();
    let nb = n.div_ceil(BLOCK);
    let tiles: Vec<Tile> = if nb > 1 {
        (0..nb).into_par_iter().map(|b| tile(b, x, y, z, q)).collect()
    } else {
        (0..nb).map(|b| tile(b, x, y, z, q)).collect()
    };
    let mut f = vec![[0.0; 3]; n];
    let mut min_r2 = f64::INFINITY;
    for (b, t) in tiles.iter().enumerate() {
        min_r2 = min_r2.min(t.min_r2);
        let start = b * BLOCK;
        for (li, fi) in f[start..start + t.row[0].len()].iter_mut().enumerate() {
            *fi = [t.row[0][li], t.row[1][li], t.row[2][li]];
        }
    }
    for (b, t) in tiles.iter().enumerate() {
        let end = ((b + 1) * BLOCK).min(n);
        for (k, fi) in f[end..].iter_mut().enumerate() {
            fi[0] += t.col[0][k];
            fi[1] += t.col[1][k];
            fi[2] += t.col[2][k];
        }
    }
    (f, min_r2)
}

/// Coulomb energy `sum_{i<j} k q_i q_j / r_ij` in fixed order.
pub fn coulomb_energy(x: &[f64], y: &[f64], z: &[f64], q: &[f64]) -> f64 {
    let n = x.len();
    let mut e = 0.0;
    for i in 0..n {
        let mut ei = 0.0;
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            let dz = z[i] - z[j];
            ei += q[j] / (dx * dx + dy * dy + dz * dz).sqrt();
        }
        e += COULOMB_CONSTANT * q[i] * ei;
    }
    e
}

/// Per-ion Coulomb energy (half of each pair assigned to each partner).
pub fn coulomb_energy_per_ion(x: &[f64], y: &[f64], z: &[f64], q: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut e = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            let dz = z[i] - z[j];
            let u = 0.5 * COULOMB_CONSTANT * q[i] * q[j] / (dx * dx + dy * dy + dz * dz).sqrt();
            e[i] += u;
            e[j] += u;
        }
    }
    e
}

/// Alive ions as structure-of-arrays plus their indices.
pub(crate) struct Soa {
    pub idx: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub q: Vec<f64>,
}

pub(crate) fn gather(state: &EnsembleState) -> Soa {
    let n = state.alive_count();
    let mut s = Soa {
        idx: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for (i, ion) in state.ions().iter().enumerate().filter(|(_, i)| i.alive) {
        s.idx.push(i);
        s.x.push(ion.position[0]);
        s.y.push(ion.position[1]);
        s.z.push(ion.position[2]);
        s.q.push(state.species()[ion.species].charge);
    }
    s
}

/// Trap force on one ion at time `t`.
fn trap_force(cfg: &ForceConfig, t: f64, pos: [f64; 3], mass: f64, charge: f64, w2: Option<[f64; 3]>) -> [f64; 3] {
    match cfg.mode {
        TrapMode::Pseudopotential => {
            let w2 = w2.expect("pseudopotential frequencies");
            [-mass * w2[0] * pos[0], -mass * w2[1] * pos[1], -mass * w2[2] * pos[2]]
        }
        TrapMode::RfFull => {
            let tr = &cfg.trap;
            let r02 = tr.r0 * tr.r0;
            let rf = cfg.v_rf_at(t) * (tr.omega_rf * t).cos();
            let vs = tr.static_quadrupole();
            let ec = tr.kappa * charge * tr.v_ec;
            [
                charge * (rf - vs) * pos[0] / r02 + ec * pos[0],
                charge * (vs - rf) * pos[1] / r02 + ec * pos[1],
                -2.0 * ec * pos[2],
            ]
        }
    }
}

/// Total force on every ion at time `t` (dead ions get zero). Also returns
/// the closest pair when it is below [`MIN_PAIR_DISTANCE`].
pub(crate) fn total_forces(
    state: &EnsembleState,
    cfg: &ForceConfig,
    light_pressure: &[f64],
    axis: [f64; 3],
    t: f64,
) -> Result<Vec<[f64; 3]>> {
    let soa = gather(state);
    let mut out = vec![[0.0; 3]; state.ions().len()];
    if cfg.coulomb && soa.idx.len() > 1 {
        let (fc, min_r2) = coulomb_forces(&soa.x, &soa.y, &soa.z, &soa.q);
        if min_r2 < MIN_PAIR_DISTANCE * MIN_PAIR_DISTANCE {
            return Err(closest_pair(&soa, t));
        }
        for (k, &i) in soa.idx.iter().enumerate() {
            out[i] = fc[k];
        }
    }
    let trap = cfg.trap_at(t);
    let w2: Vec<Option<[f64; 3]>> = state
        .species()
        .iter()
        .map(|sp| match cfg.mode {
            TrapMode::Pseudopotential => Some(axis_frequencies_sq(&trap, sp)),
            TrapMode::RfFull => None,
        })
        .collect();
    let field = cfg.drive.as_ref().map(|d| d.field(t));
    for &i in &soa.idx {
        let ion = &state.ions()[i];
        let sp = &state.species()[ion.species];
        let ft = trap_force(cfg, t, ion.position, sp.mass, sp.charge, w2[ion.species]);
        let f = &mut out[i];
        for k in 0..3 {
            f[k] += ft[k];
        }
        if let Some(e) = field {
            for k in 0..3 {
                f[k] += sp.charge * e[k];
            }
        }
        if let Some(&lp) = light_pressure.get(ion.species) {
            for k in 0..3 {
                f[k] += lp * axis[k];
            }
        }
    }
    Ok(out)
}

fn closest_pair(soa: &Soa, t: f64) -> Error {
    let n = soa.idx.len();
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let d = ((soa.x[i] - soa.x[j]).powi(2) + (soa.y[i] - soa.y[j]).powi(2) + (soa.z[i] - soa.z[j]).powi(2)).sqrt();
            if d < best.2 {
                best = (soa.idx[i], soa.idx[j], d);
            }
        }
    }
    Error::PairCollapse { a: best.0, b: best.1, distance: best.2, time: t }
}

/// Trap potential energy of one ion in the pseudopotential (J).
pub fn pseudo_potential_energy(trap: &TrapConfig, sp: &crate::trap::IonSpecies, pos: [f64; 3]) -> f64 {
    let w2 = axis_frequencies_sq(trap, sp);
    0.5 * sp.mass * (w2[0] * pos[0] * pos[0] + w2[1] * pos[1] * pos[1] + w2[2] * pos[2] * pos[2])
}
