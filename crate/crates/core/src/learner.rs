//! Learning every component by peeling: warm start, refine, then drop the
//! rows the new weight explains and repeat with one component fewer.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Partial, Result};
use crate::graddescent::{refine, GradConfig, RefineOutcome};
use crate::model::{dot, Dataset};
use crate::momentdescent::{moment_descent, DescentState, MomentDescentConfig};
use crate::sampler::{BatchSource, SubsampleSource};

/// Largest `k` matched by exhaustive permutation search.
pub const MAX_BRUTE_FORCE_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub k: usize,
    pub eps: f64,
    pub eps_w: f64,
    pub eps_g: f64,
    pub removal_scale: f64,
    pub delta: f64,
    pub sigma: f64,
    pub delta_sep: f64,
    pub pmin: f64,
    pub descent: MomentDescentConfig,
    pub grad: GradConfig,
}

impl LearnerConfig {
    /// Smallest refinement target kept before double precision takes over.
    pub const EPS_G_FLOOR: f64 = 1e-9;

    pub fn default_eps_g(k: usize, d: usize, sigma: f64, delta_sep: f64, pmin: f64, eps: f64) -> f64 {
        let base = pmin * delta_sep / (sigma * d as f64);
        eps.min(base.powi((k * k) as i32)).max(Self::EPS_G_FLOOR)
    }

    pub fn new(k: usize, d: usize, sigma: f64, delta_sep: f64, pmin: f64, eps: f64) -> Result<Self> {
        if k == 0 || k > d {
            return Err(MlrError::param(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
        }
        let delta = 0.1;
        let eps_w = (pmin * delta_sep / sigma).min(0.25);
        let eps_g = Self::default_eps_g(k, d, sigma, delta_sep, pmin, eps);
        let descent = MomentDescentConfig::new(k, sigma, pmin, eps_w / sigma, delta)?;
        let mut grad = GradConfig::new(d, sigma, delta_sep, pmin, eps_g)?;
        // early steps travel about eta0 pmin^2 / d, so cover twice the warm-start radius
        grad.eta0 = 2.0 * eps_w * d as f64 / (pmin * pmin);
        grad.t_max = grad.default_steps();
        Ok(LearnerConfig {
            k,
            eps,
            eps_w,
            eps_g,
            removal_scale: 3.0,
            delta,
            sigma,
            delta_sep,
            pmin,
            descent,
            grad,
        })
    }

    pub fn removal_threshold(&self, d: usize) -> f64 {
        self.eps_g * self.sigma * self.removal_scale * (d as f64).ln().max(1.0)
    }
}

/// Keep rows with `|<x, v> - alpha| > threshold`, in order. Also returns the
/// indices of the removed rows.
pub fn remove_explained(data: &Dataset, v: &[f64], threshold: f64) -> Result<(Dataset, Vec<usize>)> {
    if !(threshold >= 0.0) {
        return Err(MlrError::param("threshold must be nonnegative"));
    }
    let resid = data.residuals(v)?;
    let (kept, removed): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| resid[i].abs() > threshold);
    Ok((data.select(&kept), removed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `permutation[i]` is the truth index matched to estimate `i`.
    pub permutation: Vec<usize>,
    pub max_error: f64,
    pub per_component: Vec<f64>,
}

/// Exhaustive search for the relabeling that minimizes the largest error.
pub fn recovery_error(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Matching> {
    let k = truth.len();
    if estimates.len() != k {
        return Err(MlrError::shape(format!("{} estimates for {k} true weights", estimates.len())));
    }
    if k > MAX_BRUTE_FORCE_K {
        return Err(MlrError::param(format!(
            "k = {k} is too large for exhaustive matching; use a greedy matcher"
        )));
    }
    if estimates.iter().chain(truth).any(|w| w.len() != truth.first().map_or(0, |t| t.len())) {
        return Err(MlrError::shape("weight vectors differ in length"));
    }
    let dist = |e: &[f64], t: &[f64]| e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let table: Vec<Vec<f64>> = estimates.iter().map(|e| truth.iter().map(|t| dist(e, t)).collect()).collect();

    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = Matching {
        permutation: perm.clone(),
        max_error: f64::INFINITY,
        per_component: vec![],
    };
    let mut consider = |p: &[usize]| {
        let errs: Vec<f64> = p.iter().enumerate().map(|(i, &j)| table[i][j]).collect();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        if worst < best.max_error {
            best = Matching {
                permutation: p.to_vec(),
                max_error: worst,
                per_component: errs,
            };
        }
    };
    // Heap's algorithm
    let mut c = vec![0usize; k];
    consider(&perm);
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            consider(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub components: usize,
    pub descent: DescentState,
    pub refine: RefineOutcome,
    pub threshold: f64,
    pub rows_before: usize,
    pub removed: usize,
    /// Positions in the original dataset of the rows removed this round.
    #[serde(skip)]
    pub removed_rows: Vec<usize>,
    pub descent_secs: f64,
    pub refine_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub recovered: Vec<Vec<f64>>,
    pub rounds: Vec<RoundReport>,
    pub matched: Option<Matching>,
    pub seeds: Vec<u64>,
    pub rows_total: usize,
    pub rows_drawn: usize,
    pub total_secs: f64,
}

impl FitReport {
    pub fn evaluate(&mut self, truth: &[Vec<f64>]) -> Result<&Matching> {
        self.matched = Some(recovery_error(&self.recovered, truth)?);
        Ok(self.matched.as_ref().expect("just set"))
    }

    /// Drop per-iteration traces, keeping the summaries.
    pub fn without_traces(mut self) -> Self {
        for r in &mut self.rounds {
            r.descent.trace.clear();
            r.refine.trace.clear();
        }
        self
    }
}

pub fn learn_all<R: Rng + ?Sized>(data: &Dataset, cfg: &LearnerConfig, rng: &mut R) -> Result<FitReport> {
    if data.has_hidden() {
        return Err(MlrError::HiddenLabels);
    }
    let d = data.dim();
    if cfg.k == 0 || cfg.k > d {
        return Err(MlrError::param(format!("need 1 <= k <= d, got k = {}", cfg.k)));
    }
    if cfg.grad.d != d {
        return Err(MlrError::shape("refinement config was built for another dimension"));
    }
    let started = Instant::now();
    let threshold = cfg.removal_threshold(d);
    let mut report = FitReport {
        recovered: Vec::with_capacity(cfg.k),
        rounds: Vec::with_capacity(cfg.k),
        matched: None,
        seeds: Vec::new(),
        rows_total: data.len(),
        rows_drawn: 0,
        total_secs: 0.0,
    };
    // positions of the remaining rows in the original dataset
    let mut origin: Vec<usize> = (0..data.len()).collect();
    let mut remaining = data.clone();

    for round in 0..cfg.k {
        let components = cfg.k - round;
        let descent_cfg = cfg.descent.for_components(components);
        let seed: u64 = rng.random();
        report.seeds.push(seed);

        let fail = |err: MlrError, mut report: FitReport| {
            report.total_secs = started.elapsed().as_secs_f64();
            err.with_partial("learner", Partial::Fit(report))
        };
        if remaining.len() < descent_cfg.m.max(cfg.grad.m) {
            let err = MlrError::Exhausted {
                stage: "learner",
                reason: format!("{} rows left for round {}", remaining.len(), round + 1),
                partial: None,
            };
            return Err(fail(err, report));
        }

        let t0 = Instant::now();
        let mut source = SubsampleSource::new(&remaining, seed)?;
        let descent = match moment_descent(&mut source, &descent_cfg, rng) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, report)),
        };
        let descent_secs = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let refined = match refine(&mut source, &descent.a, &cfg.grad) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, report)),
        };
        let refine_secs = t1.elapsed().as_secs_f64();
        report.rows_drawn += source.rows_drawn();

        let v = refined.v.clone();
        let (kept, removed_local) = remove_explained(&remaining, &v, threshold)?;
        let removed_rows: Vec<usize> = removed_local.iter().map(|&i| origin[i]).collect();
        let removed_set = removed_local;
        let mut next_origin = Vec::with_capacity(kept.len());
        let mut r = 0;
        for (i, &o) in origin.iter().enumerate() {
            if r < removed_set.len() && removed_set[r] == i {
                r += 1;
            } else {
                next_origin.push(o);
            }
        }
        report.rounds.push(RoundReport {
            round: round + 1,
            components,
            descent,
            refine: refined,
            threshold,
            rows_before: remaining.len(),
            removed: removed_rows.len(),
            removed_rows,
            descent_secs,
            refine_secs,
        });
        report.recovered.push(v);
        origin = next_origin;
        remaining = kept;
    }
    report.total_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// `|<x, v> - alpha|` for the rows of one component, a diagnostic for removal thresholds.
pub fn component_residuals(data: &Dataset, z: &[usize], component: usize, v: &DVector<f64>) -> Vec<f64> {
    data.rows()
        .zip(z)
        .filter(|(_, &zi)| zi == component)
        .map(|((x, a), _)| (dot(x, v.as_slice()) - a).abs())
        .collect()
}
