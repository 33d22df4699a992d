//! Warm start by moment descent.
//!
//! Each iteration estimates the smallest residual scale `sigma_t`, builds the
//! moment subspace for the current residuals and tries random directions in
//! it. A trial step is kept when the re-estimated scale drops by the
//! acceptance factor.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Partial, Result};
use crate::momentsub::{powerw_with_estimate, PowerwTolerances, SubspaceEstimate};
use crate::model::Dataset;
use crate::onedvar::{estimate_variances, estimate_variances_from, min_variance, OneDConfig, OneDEstimate};
use crate::sampler::BatchSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDescentConfig {
    pub t_max: usize,
    pub q: usize,
    pub m: usize,
    pub eta_scale: f64,
    pub accept_factor: f64,
    pub eps: f64,
    pub delta: f64,
    pub sigma: f64,
    pub k: usize,
    pub pmin: f64,
    /// Consecutive iterations without an accepted step before giving up.
    pub max_stalls: usize,
    pub onedvar: OneDConfig,
    /// Restarts per variance fit once a previous fit can seed the first one.
    pub warm_restarts: usize,
    pub tolerances: PowerwTolerances,
    /// Starting iterate; the origin when absent.
    pub a0: Option<Vec<f64>>,
}

impl MomentDescentConfig {
    pub fn new(k: usize, sigma: f64, pmin: f64, eps: f64, delta: f64) -> Result<Self> {
        if k == 0 {
            return Err(MlrError::param("k must be at least 1"));
        }
        if !(sigma >= 1.0) || !(pmin > 0.0 && pmin <= 1.0) {
            return Err(MlrError::param("need sigma >= 1 and pmin in (0, 1]"));
        }
        if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(MlrError::param("eps and delta must lie in (0, 1)"));
        }
        let kf = k as f64;
        Ok(MomentDescentConfig {
            t_max: (200.0 * kf * sigma * (sigma / eps).ln()).ceil() as usize,
            q: (8.0 * (kf * sigma / (eps * delta)).ln()).ceil() as usize,
            m: 20_000,
            eta_scale: 0.1,
            accept_factor: 1.0 - 1.0 / (150.0 * kf * sigma),
            eps,
            delta,
            sigma,
            k,
            pmin,
            max_stalls: 3,
            warm_restarts: 2,
            onedvar: OneDConfig {
                variance_floor: OneDConfig::floor_for_target(eps * sigma),
                ..OneDConfig::default()
            },
            tolerances: PowerwTolerances {
                weight_cutoff: pmin / 2.0,
                ..PowerwTolerances::default()
            },
            a0: None,
        })
    }

    /// Same settings for a different component count.
    pub fn for_components(&self, k: usize) -> Self {
        let kf = k.max(1) as f64;
        MomentDescentConfig {
            k,
            t_max: (200.0 * kf * self.sigma * (self.sigma / self.eps).ln()).ceil() as usize,
            accept_factor: 1.0 - 1.0 / (150.0 * kf * self.sigma),
            q: (8.0 * (kf * self.sigma / (self.eps * self.delta)).ln()).ceil() as usize,
            ..self.clone()
        }
    }

    pub fn weight_cutoff(&self) -> f64 {
        self.pmin / 2.0
    }

    pub fn step_size(&self, sigma_t: f64) -> f64 {
        self.eta_scale * sigma_t / (self.sigma * (self.k as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub sigma_t: f64,
    pub eta: f64,
    /// Directions tried this iteration.
    pub trials: usize,
    /// 1 when a direction was accepted, else 0.
    pub accepted: usize,
    /// Re-estimated scale of the accepted step.
    pub sigma_next: Option<f64>,
    pub accept_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentStatus {
    Running,
    Converged,
    IterationCap,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentState {
    pub a: Vec<f64>,
    pub sigma_t: f64,
    pub iter: usize,
    pub trace: Vec<IterationRecord>,
    pub status: DescentStatus,
    pub rows_used: usize,
}

/// Uniformly random unit vector in the column span of `u`.
pub fn propose_direction<R: Rng + ?Sized>(u: &SubspaceEstimate, rng: &mut R) -> DVector<f64> {
    loop {
        let gamma = DVector::from_fn(u.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &u.basis * gamma;
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            return v / n;
        }
    }
}

/// Every accepted step shrank the squared scale by at least its factor.
pub fn accepted_step_contract(trace: &[IterationRecord]) -> bool {
    trace.iter().all(|r| match r.sigma_next {
        Some(s) if r.accepted > 0 => s * s <= r.accept_factor * r.sigma_t * r.sigma_t,
        _ => true,
    })
}

fn smallest_scale<R: Rng + ?Sized>(
    source: &mut dyn BatchSource,
    a: &[f64],
    prior: Option<&OneDEstimate>,
    cfg: &MomentDescentConfig,
    rng: &mut R,
) -> Result<(f64, Dataset, OneDEstimate)> {
    let batch = source.next_batch(cfg.m)?.residualize(a)?;
    let est = match prior {
        Some(p) => {
            let warm = OneDConfig {
                restarts: cfg.warm_restarts.max(1),
                ..cfg.onedvar
            };
            estimate_variances_from(batch.labels(), p, &warm, rng)?
        }
        None => estimate_variances(batch.labels(), cfg.k, &cfg.onedvar, rng)?,
    };
    let scale = min_variance(&est, cfg.weight_cutoff()).sqrt();
    Ok((scale, batch, est))
}

pub fn moment_descent<R: Rng + ?Sized>(
    source: &mut dyn BatchSource,
    cfg: &MomentDescentConfig,
    rng: &mut R,
) -> Result<DescentState> {
    let d = source.dim();
    let a0 = match &cfg.a0 {
        Some(a) if a.len() != d => return Err(MlrError::shape("starting iterate has the wrong length")),
        Some(a) => a.clone(),
        None => vec![0.0; d],
    };
    if cfg.k > d {
        return Err(MlrError::param(format!("k = {} exceeds dimension {d}", cfg.k)));
    }
    let mut state = DescentState {
        a: a0,
        sigma_t: f64::INFINITY,
        iter: 0,
        trace: Vec::new(),
        status: DescentStatus::Running,
        rows_used: 0,
    };
    let start_rows = source.rows_drawn();
    let mut stalls = 0;
    let mut prior: Option<OneDEstimate> = None;

    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) => {
                    state.rows_used = source.rows_drawn() - start_rows;
                    return Err(err.with_partial("moment descent", Partial::Descent(state)));
                }
            }
        };
    }

    for t in 0..cfg.t_max {
        state.iter = t;
        let (sigma_t, batch, est) = bail!(smallest_scale(source, &state.a, prior.as_ref(), cfg, rng));
        state.sigma_t = sigma_t;
        if sigma_t <= cfg.eps * cfg.sigma {
            state.status = DescentStatus::Converged;
            break;
        }
        let sub = bail!(powerw_with_estimate(&batch, cfg.k, &est, &cfg.tolerances));
        let eta = cfg.step_size(sigma_t);
        let mut record = IterationRecord {
            iter: t,
            sigma_t,
            eta,
            trials: 0,
            accepted: 0,
            sigma_next: None,
            accept_factor: cfg.accept_factor,
        };
        for _ in 0..cfg.q {
            record.trials += 1;
            let dir = propose_direction(&sub.subspace, rng);
            let trial: Vec<f64> = state.a.iter().zip(dir.iter()).map(|(a, v)| a + eta * v).collect();
            let (next, _, _) = bail!(smallest_scale(source, &trial, Some(&est), cfg, rng));
            if next * next <= cfg.accept_factor * sigma_t * sigma_t {
                record.accepted = 1;
                record.sigma_next = Some(next);
                state.a = trial;
                break;
            }
        }
        prior = Some(est);
        state.trace.push(record);
        if state.trace.last().is_some_and(|r| r.accepted == 0) {
            stalls += 1;
            if stalls >= cfg.max_stalls {
                state.status = DescentStatus::Stalled;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    if state.status == DescentStatus::Running {
        state.status = DescentStatus::IterationCap;
        state.iter = cfg.t_max;
    }
    state.rows_used = source.rows_drawn() - start_rows;
    Ok(state)
}
