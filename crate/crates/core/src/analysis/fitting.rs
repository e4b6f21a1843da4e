//! Ion numbers, temperatures and heating rates from image comparison.

use rayon::prelude::*;

use crate::dynamics::{
    evolve, init_ensemble, relax, secular_temperature, steps_for, Beam, Cooling, EnsembleState, ForceConfig,
    HeatingModel, SnapshotRecorder, TrapMode,
};
use crate::error::{invalid, Error, Result};
use crate::trap::{IonSpecies, TrapConfig};

use super::image::{image_similarity, render_ccd, CcdImage, ImageConfig};
use super::structure::count_peaks;

/// How a candidate ensemble is simulated before it is imaged.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub trap: TrapConfig,
    /// Laser-cooled species carry their friction coefficient.
    pub species: Vec<IonSpecies>,
    pub beam: Beam,
    /// Time from the relaxed start to the exposure (s).
    pub equilibrate: f64,
    pub exposure: f64,
    /// Snapshots recorded during the exposure.
    pub samples: usize,
    pub seed: u64,
    /// Defaults to the pseudopotential limit.
    pub timestep: Option<f64>,
}

impl EnsembleModel {
    pub fn new(trap: TrapConfig, species: Vec<IonSpecies>) -> Self {
        Self {
            trap,
            species,
            beam: Beam::ThreeAxis,
            equilibrate: 1e-3,
            exposure: 1e-3,
            samples: 200,
            seed: 1,
            timestep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub counts: Vec<usize>,
    /// Heating rate per species (K/s).
    pub heating: Vec<f64>,
}

/// Result of simulating one candidate.
#[derive(Debug, Clone)]
pub struct CandidateRun {
    pub image: CcdImage,
    /// Mean secular temperature per species over the exposure (K).
    pub temperatures: Vec<Option<f64>>,
    pub state: EnsembleState,
}

/// Simulates the candidate in pseudopotential mode and renders the exposure.
pub fn simulate_candidate(model: &EnsembleModel, cand: &Candidate, image: &ImageConfig) -> Result<CandidateRun> {
    if cand.counts.len() != model.species.len() || cand.heating.len() != model.species.len() {
        return Err(invalid("candidate needs one count and one heating rate per species"));
    }
    if model.samples < 2 {
        return Err(invalid("need at least two samples per exposure"));
    }
    let counts: Vec<(IonSpecies, usize)> =
        model.species.iter().cloned().zip(cand.counts.iter().copied()).filter(|c| c.1 > 0).collect();
    let mut state = init_ensemble(&counts, &model.trap, model.seed, 0.0)?;
    // species indices of the state follow the filtered list
    let heating: Vec<f64> =
        model.species.iter().zip(&cand.counts).zip(&cand.heating).filter(|((_, n), _)| **n > 0).map(|(_, h)| *h).collect();
    let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, model.trap.clone(), 1.0);
    cfg.timestep = model.timestep.unwrap_or_else(|| cfg.timestep_limit(&state));
    relax(&mut state, &cfg, 2e5, 0.5e-3)?;
    let mut cooling = Cooling::from_species(state.species());
    cooling.beam = model.beam;
    let heat = HeatingModel::uniform(heating);
    evolve(&mut state, &cfg, &cooling, &heat, model.equilibrate, &mut [])?;
    let stride = (steps_for(model.exposure, cfg.timestep) / model.samples).max(1);
    let mut rec = SnapshotRecorder::new(stride);
    evolve(&mut state, &cfg, &cooling, &heat, model.exposure, &mut [&mut rec])?;
    let img = render_ccd(&rec.trajectory, image)?;
    let t_state = secular_temperature(&rec.trajectory.snapshots, state.species(), TrapMode::Pseudopotential, 0.0)?;
    let mut temperatures = vec![None; model.species.len()];
    let mut k = 0;
    for (s, n) in cand.counts.iter().enumerate() {
        if *n > 0 {
            temperatures[s] = t_state[k];
            k += 1;
        }
    }
    Ok(CandidateRun { image: img, temperatures, state })
}

/// Cartesian product of per-species count lists and heating-rate lists.
pub fn candidate_grid(counts: &[Vec<usize>], heating: &[Vec<f64>]) -> Vec<Candidate> {
    let mut out = vec![Candidate { counts: vec![], heating: vec![] }];
    for axis in counts {
        out = out
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |&n| {
                    let mut c = c.clone();
                    c.counts.push(n);
                    c
                })
            })
            .collect();
    }
    for axis in heating {
        out = out
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |&h| {
                    let mut c = c.clone();
                    c.heating.push(h);
                    c
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub candidates: Vec<Candidate>,
    pub scores: Vec<f64>,
    pub temperatures: Vec<Vec<Option<f64>>>,
    pub best: usize,
}

impl FitReport {
    pub fn best_candidate(&self) -> &Candidate {
        &self.candidates[self.best]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best]
    }

    /// Plain-text key-value block.
    pub fn to_text(&self, species: &[IonSpecies]) -> String {
        let b = self.best_candidate();
        let mut s = String::new();
        s.push_str(&format!("candidates = {}\n", self.candidates.len()));
        s.push_str(&format!("score = {:.6}\n", self.best_score()));
        for (i, sp) in species.iter().enumerate() {
            s.push_str(&format!("count.{} = {}\n", sp.name, b.counts[i]));
            s.push_str(&format!("heating.{} = {:.6e}\n", sp.name, b.heating[i]));
            if let Some(t) = self.temperatures[self.best][i] {
                s.push_str(&format!("temperature.{} = {:.6e}\n", sp.name, t));
            }
        }
        s
    }
}

fn check_reference(reference: &CcdImage, image: &ImageConfig) -> Result<()> {
    image.validate()?;
    if reference.width != image.width || reference.height != image.height {
        return Err(Error::DimensionMismatch { a: (reference.width, reference.height), b: (image.width, image.height) });
    }
    if let Some(v) = reference.meta.get("view") {
        if v != image.view.name() {
            return Err(invalid(format!("reference view {v} differs from render view {}", image.view.name())));
        }
    }
    Ok(())
}

/// Scores every candidate against the reference. Candidates run in
/// parallel; the highest score wins and ties go to the lowest index.
pub fn fit_ensemble(
    reference: &CcdImage,
    image: &ImageConfig,
    model: &EnsembleModel,
    candidates: &[Candidate],
) -> Result<FitReport> {
    check_reference(reference, image)?;
    if candidates.is_empty() {
        return Err(Error::Degenerate("empty search space".into()));
    }
    let runs: Vec<(f64, Vec<Option<f64>>)> = candidates
        .par_iter()
        .map(|c| {
            let run = simulate_candidate(model, c, image)?;
            Ok((image_similarity(reference, &run.image)?, run.temperatures))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.0 > runs[best].0 {
            best = i;
        }
    }
    Ok(FitReport {
        candidates: candidates.to_vec(),
        scores: runs.iter().map(|r| r.0).collect(),
        temperatures: runs.into_iter().map(|r| r.1).collect(),
        best,
    })
}

/// Grid search followed by successive contraction around the best count
/// vector: each round halves the count step until it reaches one ion.
pub fn fit_counts_refined(
    reference: &CcdImage,
    image: &ImageConfig,
    model: &EnsembleModel,
    coarse: &[Candidate],
    initial_step: usize,
    min_step: usize,
) -> Result<Vec<FitReport>> {
    let mut reports = vec![fit_ensemble(reference, image, model, coarse)?];
    let mut step = initial_step / 2;
    while step >= min_step.max(1) {
        let best = reports.last().unwrap().best_candidate().clone();
        let mut next = Vec::new();
        for s in 0..best.counts.len() {
            for sign in [-1i64, 1] {
                let n = best.counts[s] as i64 + sign * step as i64;
                if n >= 0 {
                    let mut c = best.clone();
                    c.counts[s] = n as usize;
                    next.push(c);
                }
            }
        }
        next.insert(0, best);
        reports.push(fit_ensemble(reference, image, model, &next)?);
        step /= 2;
    }
    Ok(reports)
}

/// Two-stage heating-rate determination: a common heating rate and the ion
/// numbers first, then the rate of species `sc` alone with all others frozen.
#[derive(Debug, Clone)]
pub struct StagedFit {
    pub stage1: FitReport,
    pub stage2: FitReport,
    pub h_lc: f64,
    pub h_sc: f64,
    pub t_sc: Option<f64>,
    /// Equals the SC heating rate in equilibrium (K/s).
    pub sympathetic_rate: f64,
}

pub fn staged_fit(
    reference: &CcdImage,
    image: &ImageConfig,
    model: &EnsembleModel,
    stage1: &[Candidate],
    sc: usize,
    sc_rates: &[f64],
) -> Result<StagedFit> {
    if sc >= model.species.len() {
        return Err(invalid("SC species index out of range"));
    }
    if sc_rates.is_empty() {
        return Err(Error::Degenerate("empty SC heating-rate grid".into()));
    }
    let r1 = fit_ensemble(reference, image, model, stage1)?;
    let frozen = r1.best_candidate().clone();
    let h_lc = frozen.heating.iter().enumerate().find(|(i, _)| *i != sc).map_or(frozen.heating[0], |x| *x.1);
    let stage2: Vec<Candidate> = sc_rates
        .iter()
        .map(|&h| {
            let mut c = frozen.clone();
            c.heating[sc] = h;
            c
        })
        .collect();
    let r2 = fit_ensemble(reference, image, model, &stage2)?;
    let h_sc = r2.best_candidate().heating[sc];
    let t_sc = r2.temperatures[r2.best][sc];
    Ok(StagedFit { stage1: r1, stage2: r2, h_lc, h_sc, t_sc, sympathetic_rate: h_sc })
}

/// Number of shell maxima across the image's vertical axis, from the
/// central half of the columns.
pub fn shell_count(img: &CcdImage, prominence: f64) -> usize {
    let (c0, c1) = (img.width / 4, 3 * img.width / 4);
    let profile: Vec<f64> = (0..img.height).map(|r| (c0..c1).map(|c| img.get(c, r)).sum()).collect();
    count_peaks(&profile, prominence)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScBound {
    /// First SC heating rate at which the LC shells are gone.
    pub h_sc: f64,
    pub t_sc: Option<f64>,
    pub t_lc: Option<f64>,
    /// (h_sc, shell count, T_SC) for every rate tried.
    pub trace: Vec<(f64, usize, Option<f64>)>,
}

/// Raises the SC heating rate until the LC shell count drops below that
/// of the lowest rate; the SC temperature there bounds the SC temperature
/// of the observed ensemble from above.
pub fn sc_upper_bound(
    model: &EnsembleModel,
    base: &Candidate,
    sc: usize,
    rates: &[f64],
    image: &ImageConfig,
    prominence: f64,
) -> Result<Option<ScBound>> {
    if rates.windows(2).any(|w| !(w[1] > w[0])) || rates.len() < 2 {
        return Err(invalid("SC rates must be at least two increasing values"));
    }
    let lc = model.species.iter().position(|s| s.is_laser_cooled()).ok_or(Error::EmptyEnsemble)?;
    let mut trace = Vec::new();
    let mut reference_shells = None;
    for &h in rates {
        let mut c = base.clone();
        c.heating[sc] = h;
        let run = simulate_candidate(model, &c, image)?;
        let shells = shell_count(&run.image, prominence);
        trace.push((h, shells, run.temperatures[sc]));
        let r = *reference_shells.get_or_insert(shells);
        if shells < r {
            return Ok(Some(ScBound { h_sc: h, t_sc: run.temperatures[sc], t_lc: run.temperatures[lc], trace }));
        }
    }
    Ok(None)
}
