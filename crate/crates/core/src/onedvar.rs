//! Component variances of a zero-mean one-dimensional Gaussian mixture.
//!
//! EM over zero-mean Gaussians, restarted from several log-spaced
//! initializations between the 5% and 95% quantiles of `z^2`. The restart with
//! the best log-likelihood wins. Large inputs are summarized into log-spaced
//! bins of `z^2` that keep exact counts and sums, so each EM pass costs one
//! sweep over the bins instead of the data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneDConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the mean log-likelihood gains less than this per iteration.
    pub tol: f64,
    pub variance_floor: f64,
    /// Bin count for the `z^2` summary; 0 runs EM on the raw values.
    pub bins: usize,
}

impl Default for OneDConfig {
    fn default() -> Self {
        OneDConfig {
            restarts: 10,
            max_iters: 300,
            tol: 1e-9,
            variance_floor: 1e-8,
            bins: 2048,
        }
    }
}

impl OneDConfig {
    /// Floor derived from a target standard-deviation accuracy `eps`.
    pub fn floor_for_target(eps: f64) -> f64 {
        (eps * eps / 4.0).max(1e-8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDEstimate {
    /// Ascending, each at least the configured floor.
    pub variances: Vec<f64>,
    pub mix_weights: Vec<f64>,
    /// Mean log-likelihood per value at the returned parameters' E-step.
    pub loglik: f64,
    pub restarts_used: usize,
}

pub fn estimate_variances<R: Rng + ?Sized>(
    values: &[f64],
    k: usize,
    cfg: &OneDConfig,
    rng: &mut R,
) -> Result<OneDEstimate> {
    fit(values, k, None, cfg, rng)
}

/// [`estimate_variances`] with `init` as the first restart in place of the
/// quantile spread; `cfg.restarts - 1` random restarts follow.
pub fn estimate_variances_from<R: Rng + ?Sized>(
    values: &[f64],
    init: &OneDEstimate,
    cfg: &OneDConfig,
    rng: &mut R,
) -> Result<OneDEstimate> {
    fit(values, init.variances.len(), Some(init), cfg, rng)
}

fn fit<R: Rng + ?Sized>(
    values: &[f64],
    k: usize,
    init: Option<&OneDEstimate>,
    cfg: &OneDConfig,
    rng: &mut R,
) -> Result<OneDEstimate> {
    if values.is_empty() {
        return Err(MlrError::data("no values to fit"));
    }
    if k == 0 {
        return Err(MlrError::param("component count must be at least 1"));
    }
    if k > values.len() {
        return Err(MlrError::param(format!("{k} components requested from {} values", values.len())));
    }
    if k > MAX_COMPONENTS {
        return Err(MlrError::param(format!("at most {MAX_COMPONENTS} components")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MlrError::data("values must be finite"));
    }
    if !(cfg.variance_floor > 0.0) {
        return Err(MlrError::param("variance floor must be positive"));
    }
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let floor = cfg.variance_floor;

    if k == 1 {
        let var = (sq.iter().sum::<f64>() / sq.len() as f64).max(floor);
        let loglik = e_step(&Summary::exact(&sq), &[var], &[1.0], &mut [0.0], &mut [0.0]);
        return Ok(OneDEstimate {
            variances: vec![var],
            mix_weights: vec![1.0],
            loglik,
            restarts_used: 1,
        });
    }

    let mut sorted = sq.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let lo = quantile(&sorted, 0.05).max(floor);
    let hi = quantile(&sorted, 0.95).max(lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let summary = if cfg.bins > 0 && sorted.len() > 4 * cfg.bins {
        Summary::binned(&sorted, cfg.bins)
    } else {
        Summary::exact(&sq)
    };

    let restarts = cfg.restarts.max(1);
    let mut best: Option<EmFit> = None;
    for r in 0..restarts {
        let (mut vars, weights) = match (r, init) {
            (0, Some(est)) => (
                est.variances.iter().map(|&v| v.max(floor)).collect::<Vec<_>>(),
                est.mix_weights.iter().map(|&w| w.max(1e-3)).collect::<Vec<_>>(),
            ),
            (0, None) => (
                (0..k)
                    .map(|i| (llo + (lhi - llo) * i as f64 / (k - 1) as f64).exp())
                    .collect(),
                vec![1.0 / k as f64; k],
            ),
            _ => (
                (0..k).map(|_| (llo + (lhi - llo) * rng.random::<f64>()).exp()).collect(),
                vec![1.0 / k as f64; k],
            ),
        };
        vars.sort_unstable_by(f64::total_cmp);
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        let fit = run_em(&summary, vars, weights, cfg, None);
        // strict comparison keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one restart");

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| best.vars[a].total_cmp(&best.vars[b]));
    Ok(OneDEstimate {
        variances: order.iter().map(|&i| best.vars[i]).collect(),
        mix_weights: order.iter().map(|&i| best.weights[i]).collect(),
        loglik: best.loglik,
        restarts_used: restarts,
    })
}

/// Smallest variance among components holding at least `weight_cutoff` of the
/// mass; the overall minimum when none qualifies.
pub fn min_variance(est: &OneDEstimate, weight_cutoff: f64) -> f64 {
    let qualified = est
        .variances
        .iter()
        .zip(&est.mix_weights)
        .filter(|(_, &w)| w >= weight_cutoff)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    if qualified.is_finite() {
        qualified
    } else {
        est.variances.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let t = pos - i as f64;
    sorted[i] * (1.0 - t) + sorted[j] * t
}

const MAX_COMPONENTS: usize = 32;

/// Weighted points for EM: `count` values of `z^2` summing to `sum`, placed at
/// their mean `at`.
struct Summary {
    at: Vec<f64>,
    count: Vec<f64>,
    sum: Vec<f64>,
    n: f64,
}

impl Summary {
    fn exact(sq: &[f64]) -> Self {
        Summary {
            at: sq.to_vec(),
            count: vec![1.0; sq.len()],
            sum: sq.to_vec(),
            n: sq.len() as f64,
        }
    }

    /// Log-spaced bins over the positive values of ascending `sorted`; exact
    /// zeros get a bin of their own.
    fn binned(sorted: &[f64], bins: usize) -> Self {
        let mut out = Summary {
            at: Vec::with_capacity(bins + 1),
            count: Vec::with_capacity(bins + 1),
            sum: Vec::with_capacity(bins + 1),
            n: sorted.len() as f64,
        };
        let zeros = sorted.partition_point(|&s| s <= 0.0);
        if zeros > 0 {
            out.at.push(0.0);
            out.count.push(zeros as f64);
            out.sum.push(0.0);
        }
        let pos = &sorted[zeros..];
        if pos.is_empty() {
            return out;
        }
        let (lmin, lmax) = (pos[0].ln(), pos[pos.len() - 1].ln());
        let width = ((lmax - lmin) / bins as f64).max(f64::MIN_POSITIVE);
        let mut i = 0;
        while i < pos.len() {
            let b = (((pos[i].ln() - lmin) / width) as usize).min(bins - 1);
            let (mut c, mut total) = (0.0, 0.0);
            while i < pos.len() && (((pos[i].ln() - lmin) / width) as usize).min(bins - 1) == b {
                c += 1.0;
                total += pos[i];
                i += 1;
            }
            out.at.push(total / c);
            out.count.push(c);
            out.sum.push(total);
        }
        out
    }
}

struct EmFit {
    vars: Vec<f64>,
    weights: Vec<f64>,
    loglik: f64,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One pass over the summary: mean log-likelihood at the given parameters,
/// and the responsibility-weighted sufficient statistics for the M-step.
fn e_step(data: &Summary, vars: &[f64], weights: &[f64], mass: &mut [f64], moment: &mut [f64]) -> f64 {
    let k = vars.len();
    let mut offset = [0.0f64; MAX_COMPONENTS];
    let mut inv2 = [0.0f64; MAX_COMPONENTS];
    for i in 0..k {
        offset[i] = weights[i].ln() - 0.5 * vars[i].ln() - HALF_LN_2PI;
        inv2[i] = 0.5 / vars[i];
    }
    mass.iter_mut().for_each(|v| *v = 0.0);
    moment.iter_mut().for_each(|v| *v = 0.0);
    let mut ll = 0.0;
    let mut lp = [0.0f64; MAX_COMPONENTS];
    for ((&s, &c), &total) in data.at.iter().zip(&data.count).zip(&data.sum) {
        let mut mx = f64::NEG_INFINITY;
        for i in 0..k {
            lp[i] = offset[i] - s * inv2[i];
            mx = mx.max(lp[i]);
        }
        let mut tot = 0.0;
        for v in lp.iter_mut().take(k) {
            *v = (*v - mx).exp();
            tot += *v;
        }
        ll += c * (mx + tot.ln());
        let inv = 1.0 / tot;
        for i in 0..k {
            let r = lp[i] * inv;
            mass[i] += r * c;
            moment[i] += r * total;
        }
    }
    ll / data.n
}

fn run_em(data: &Summary, mut vars: Vec<f64>, mut weights: Vec<f64>, cfg: &OneDConfig, mut trace: Option<&mut Vec<f64>>) -> EmFit {
    let k = vars.len();
    let mut mass = vec![0.0; k];
    let mut moment = vec![0.0; k];
    let mut prev = f64::NEG_INFINITY;
    let mut loglik = prev;
    for it in 0..=cfg.max_iters {
        let ll = e_step(data, &vars, &weights, &mut mass, &mut moment);
        if let Some(t) = trace.as_deref_mut() {
            t.push(ll);
        }
        loglik = ll;
        if ll - prev < cfg.tol || it == cfg.max_iters {
            break;
        }
        prev = ll;
        for i in 0..k {
            weights[i] = mass[i] / data.n;
            if mass[i] > 0.0 {
                vars[i] = (moment[i] / mass[i]).max(cfg.variance_floor);
            }
        }
    }
    EmFit { vars, weights, loglik }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::StandardNormal;

    fn mixture(n: usize, sds: &[f64], seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| {
                let c = rng.random_range(0..sds.len());
                sds[c] * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    #[test]
    fn single_component_is_sample_variance() {
        let v = mixture(100_000, &[1.0], 1);
        let est = estimate_variances(&v, 1, &OneDConfig::default(), &mut seeded(0)).unwrap();
        assert!((est.variances[0] - 1.0).abs() < 0.03);
        assert_eq!(est.mix_weights, vec![1.0]);
    }

    #[test]
    fn two_well_separated_components() {
        let v = mixture(100_000, &[1.0, 5.0], 2);
        let est = estimate_variances(&v, 2, &OneDConfig::default(), &mut seeded(0)).unwrap();
        assert!((est.variances[0] - 1.0).abs() / 1.0 < 0.1, "{:?}", est);
        assert!((est.variances[1] - 25.0).abs() / 25.0 < 0.1, "{:?}", est);
        assert!((est.mix_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_input_hits_floor() {
        let cfg = OneDConfig::default();
        let est = estimate_variances(&[0.0; 50], 2, &cfg, &mut seeded(0)).unwrap();
        assert_eq!(est.variances, vec![cfg.variance_floor; 2]);
    }

    #[test]
    fn parameter_and_data_errors() {
        let cfg = OneDConfig::default();
        assert!(matches!(estimate_variances(&[1.0], 2, &cfg, &mut seeded(0)), Err(MlrError::Parameter(_))));
        assert!(matches!(
            estimate_variances(&[1.0, f64::NAN], 1, &cfg, &mut seeded(0)),
            Err(MlrError::Data(_))
        ));
        assert!(estimate_variances(&[], 1, &cfg, &mut seeded(0)).is_err());
    }

    #[test]
    fn min_variance_filters_light_components() {
        let est = |v: Vec<f64>, w: Vec<f64>| OneDEstimate {
            variances: v,
            mix_weights: w,
            loglik: 0.0,
            restarts_used: 1,
        };
        assert_eq!(min_variance(&est(vec![0.01, 4.0], vec![0.5, 0.5]), 0.1), 0.01);
        assert_eq!(min_variance(&est(vec![0.0001, 4.0], vec![0.001, 0.999]), 0.1), 4.0);
        assert_eq!(min_variance(&est(vec![2.5], vec![1.0]), 0.1), 2.5);
        assert_eq!(min_variance(&est(vec![1.0, 2.0], vec![0.01, 0.01]), 0.1), 1.0);
    }

    #[test]
    fn likelihood_never_decreases() {
        let v = mixture(20_000, &[0.3, 1.0, 4.0], 5);
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let cfg = OneDConfig {
            tol: f64::NEG_INFINITY,
            max_iters: 200,
            ..OneDConfig::default()
        };
        for init in [vec![0.01, 0.02, 0.03], vec![1.0, 10.0, 100.0], vec![0.5, 0.6, 50.0]] {
            let mut trace = Vec::new();
            run_em(&Summary::exact(&sq), init.clone(), vec![1.0 / 3.0; 3], &cfg, Some(&mut trace));
            let mut sorted = sq.clone();
            sorted.sort_unstable_by(f64::total_cmp);
            let mut binned = Vec::new();
            run_em(&Summary::binned(&sorted, 256), init, vec![1.0 / 3.0; 3], &cfg, Some(&mut binned));
            for w in binned.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "binned {} -> {}", w[0], w[1]);
            }
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn scaling_inputs_scales_variances() {
        let v = mixture(20_000, &[0.5, 3.0], 7);
        let cfg = OneDConfig {
            variance_floor: 1e-14,
            ..OneDConfig::default()
        };
        let base = estimate_variances(&v, 2, &cfg, &mut seeded(11)).unwrap();
        for c in [0.1, 3.0, 17.0] {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let est = estimate_variances(&scaled, 2, &cfg, &mut seeded(11)).unwrap();
            for (a, b) in est.variances.iter().zip(&base.variances) {
                assert!((a / (c * c) - b).abs() <= 1e-6 * b, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let v = mixture(5_000, &[1.0, 2.0, 6.0], 3);
        let a = estimate_variances(&v, 3, &OneDConfig::default(), &mut seeded(4)).unwrap();
        let b = estimate_variances(&v, 3, &OneDConfig::default(), &mut seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binned_fit_matches_raw_fit() {
        let v = mixture(100_000, &[0.2, 1.0], 9);
        let raw = OneDConfig {
            bins: 0,
            ..OneDConfig::default()
        };
        let a = estimate_variances(&v, 2, &raw, &mut seeded(1)).unwrap();
        let b = estimate_variances(&v, 2, &OneDConfig::default(), &mut seeded(1)).unwrap();
        for (x, y) in a.variances.iter().zip(&b.variances) {
            assert!((x - y).abs() <= 1e-3 * x, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn warm_start_reaches_the_same_fit() {
        let v = mixture(50_000, &[0.5, 2.0], 10);
        let cold = estimate_variances(&v, 2, &OneDConfig::default(), &mut seeded(1)).unwrap();
        let cfg = OneDConfig {
            restarts: 1,
            ..OneDConfig::default()
        };
        let nudged = OneDEstimate {
            variances: cold.variances.iter().map(|x| x * 1.1).collect(),
            ..cold.clone()
        };
        let warm = estimate_variances_from(&v, &nudged, &cfg, &mut seeded(2)).unwrap();
        for (x, y) in cold.variances.iter().zip(&warm.variances) {
            assert!((x - y).abs() <= 1e-3 * x);
        }
    }
}
