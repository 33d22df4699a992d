//! Refinement by stochastic descent on `g(v) = E[log(|alpha - <v, x>| + zeta)]`.
//!
//! The per-row gradient `sign(r) x / (|r| + zeta)` pulls `v` towards the
//! component whose residuals are smallest, so a close warm start converges to
//! that component alone.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Partial, Result};
use crate::model::{dot, Dataset};
use crate::sampler::BatchSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradConfig {
    pub zeta: f64,
    pub t_max: usize,
    pub m: usize,
    pub eta0: f64,
    pub decay_const: f64,
    pub eps: f64,
    pub d: usize,
    pub sigma: f64,
    pub delta_sep: f64,
    pub pmin: f64,
    /// Record the batch objective every this many steps; 0 disables it.
    pub trace_every: usize,
}

impl GradConfig {
    pub fn default_zeta(sigma: f64, delta_sep: f64, pmin: f64) -> f64 {
        (delta_sep / (2.0 * sigma)).min(delta_sep * pmin / 64.0)
    }

    pub fn new(d: usize, sigma: f64, delta_sep: f64, pmin: f64, eps: f64) -> Result<Self> {
        if d == 0 {
            return Err(MlrError::param("dimension must be at least 1"));
        }
        if !(sigma >= 1.0) || !(delta_sep > 0.0) || !(pmin > 0.0 && pmin <= 1.0) || !(eps > 0.0) {
            return Err(MlrError::param("need sigma >= 1, delta > 0, pmin in (0, 1], eps > 0"));
        }
        let zeta = Self::default_zeta(sigma, delta_sep, pmin);
        let mut cfg = GradConfig {
            zeta,
            t_max: 0,
            m: 4096,
            eta0: 0.5,
            decay_const: 0.5,
            eps,
            d,
            sigma,
            delta_sep,
            pmin,
            trace_every: 10,
        };
        cfg.t_max = cfg.default_steps();
        Ok(cfg)
    }

    /// Steps per contraction window, `d / pmin^2`.
    pub fn window(&self) -> usize {
        (self.d as f64 / (self.pmin * self.pmin)).ceil() as usize
    }

    /// Enough steps for the step length to decay from its start (or `zeta`)
    /// down to `eps`: `d / (decay_const pmin^2) ln(max(zeta, 10 eta0 pmin / d) / eps)`.
    pub fn default_steps(&self) -> usize {
        let d = self.d as f64;
        let start = self.zeta.max(10.0 * self.eta0 * self.pmin / d);
        let rate = self.decay_const * self.pmin * self.pmin / d;
        ((start / self.eps).ln().max(1.0) / rate).ceil() as usize
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self.t_max = self.default_steps();
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self.t_max = self.default_steps();
        self
    }

    pub fn step_size(&self, t: usize) -> f64 {
        let d = self.d as f64;
        let base = self.eta0 * self.zeta * self.pmin / d;
        base * (1.0 - self.decay_const * self.pmin * self.pmin / d).powi(t as i32)
    }

    fn check(&self) -> Result<()> {
        if !(self.zeta > 0.0) || !(self.eta0 > 0.0) || self.m == 0 {
            return Err(MlrError::param("refinement needs zeta > 0, eta0 > 0 and a nonempty batch"));
        }
        let shrink = self.decay_const * self.pmin * self.pmin / self.d as f64;
        if !(0.0..1.0).contains(&shrink) {
            return Err(MlrError::param("decay factor must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1/m) sum sign(alpha - <v, x>) / (|alpha - <v, x>| + zeta) x`.
pub fn stochastic_gradient(batch: &Dataset, v: &[f64], zeta: f64) -> Result<DVector<f64>> {
    if v.len() != batch.dim() {
        return Err(MlrError::shape("iterate and batch dimensions differ"));
    }
    if batch.is_empty() {
        return Err(MlrError::data("gradient needs a nonempty batch"));
    }
    let mut g = vec![0.0; batch.dim()];
    for (x, a) in batch.rows() {
        let r = a - dot(x, v);
        let s = sign(r) / (r.abs() + zeta);
        if s != 0.0 {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += s * xi;
            }
        }
    }
    let m = batch.len() as f64;
    Ok(DVector::from_iterator(g.len(), g.into_iter().map(|x| x / m)))
}

/// Mean of `log(|alpha - <v, x>| + zeta)`.
pub fn empirical_objective(batch: &Dataset, v: &[f64], zeta: f64) -> Result<f64> {
    if v.len() != batch.dim() {
        return Err(MlrError::shape("iterate and batch dimensions differ"));
    }
    if batch.is_empty() {
        return Err(MlrError::data("objective needs a nonempty batch"));
    }
    let total: f64 = batch.rows().map(|(x, a)| ((a - dot(x, v)).abs() + zeta).ln()).sum();
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    pub t: usize,
    pub eta: f64,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub v: Vec<f64>,
    pub steps: usize,
    pub trace: Vec<RefineRecord>,
    pub rows_used: usize,
}

pub fn refine(source: &mut dyn BatchSource, v0: &[f64], cfg: &GradConfig) -> Result<RefineOutcome> {
    refine_observed(source, v0, cfg, |_, _| {})
}

/// [`refine`], calling `observe(t, v)` after every step.
pub fn refine_observed<F: FnMut(usize, &[f64])>(
    source: &mut dyn BatchSource,
    v0: &[f64],
    cfg: &GradConfig,
    mut observe: F,
) -> Result<RefineOutcome> {
    cfg.check()?;
    if v0.len() != source.dim() {
        return Err(MlrError::shape("warm start has the wrong length"));
    }
    let start_rows = source.rows_drawn();
    let mut out = RefineOutcome {
        v: v0.to_vec(),
        steps: 0,
        trace: Vec::new(),
        rows_used: 0,
    };
    for t in 0..cfg.t_max {
        let batch = match source.next_batch(cfg.m) {
            Ok(b) => b,
            Err(err) => {
                out.rows_used = source.rows_drawn() - start_rows;
                return Err(err.with_partial("refinement", Partial::Refine(out)));
            }
        };
        let g = stochastic_gradient(&batch, &out.v, cfg.zeta)?;
        let eta = cfg.step_size(t);
        if cfg.trace_every > 0 && t % cfg.trace_every == 0 {
            out.trace.push(RefineRecord {
                t,
                eta,
                objective: empirical_objective(&batch, &out.v, cfg.zeta)?,
                grad_norm: g.norm(),
            });
        }
        for (vi, gi) in out.v.iter_mut().zip(g.iter()) {
            *vi += eta * gi;
        }
        out.steps = t + 1;
        observe(t, &out.v);
    }
    out.rows_used = source.rows_drawn() - start_rows;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Monte-Carlo `E[sign(<b, y>) <a, y> / (|<b, y>| + zeta)]` for standard normal `y`.
pub fn inverse_gaussian_expectation<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    zeta: f64,
    n: usize,
    rng: &mut R,
) -> Result<ScalarEstimate> {
    if a.len() != b.len() {
        return Err(MlrError::shape("a and b differ in length"));
    }
    if b.iter().all(|&x| x == 0.0) {
        return Err(MlrError::param("b must be nonzero"));
    }
    if n == 0 || zeta < 0.0 {
        return Err(MlrError::param("need n >= 1 and zeta >= 0"));
    }
    let mut y = vec![0.0; a.len()];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        for yi in y.iter_mut() {
            *yi = rng.sample(StandardNormal);
        }
        let bb = dot(b, &y);
        let val = sign(bb) * dot(a, &y) / (bb.abs() + zeta);
        let delta = val - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (val - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    Ok(ScalarEstimate {
        estimate: mean,
        std_error: (var / n as f64).sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_dataset, MixtureModel, ModelBounds};
    use crate::rng::seeded;
    use crate::sampler::{ModelSource, SubsampleSource};

    fn unit(d: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize()
    }

    #[test]
    fn gradient_examples() {
        let batch = Dataset::from_rows(&[(vec![1.0, 2.0], 3.0)]).unwrap();
        assert_eq!(stochastic_gradient(&batch, &[1.0, 1.0], 0.5).unwrap().amax(), 0.0);
        let batch = Dataset::from_rows(&[(vec![1.0, 0.0, 0.0], 1.0)]).unwrap();
        let g = stochastic_gradient(&batch, &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(g.as_slice(), &[0.5, 0.0, 0.0]);
    }

    #[test]
    fn objective_examples() {
        let batch = Dataset::from_rows(&[(vec![1.0, 2.0], 3.0), (vec![0.0, 1.0], 1.0)]).unwrap();
        assert!((empirical_objective(&batch, &[1.0, 1.0], 0.3).unwrap() - 0.3f64.ln()).abs() < 1e-15);
        let batch = Dataset::from_rows(&[(vec![2.0], 1.0)]).unwrap();
        assert!((empirical_objective(&batch, &[1.0], 0.3).unwrap() - 1.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_is_concave_between_kinks() {
        // log(|r| + zeta) is concave on each side of r = 0, so the batch
        // objective is concave on any segment where no residual changes sign
        let mut rng = seeded(3);
        let model = MixtureModel::isotropic(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![0.5, 0.5, 0.0]), DVector::from_vec(vec![-0.5, 0.0, 0.5])],
            ModelBounds::default(),
        )
        .unwrap();
        let data = sample_dataset(&model, 100_000, &mut rng).unwrap();
        let mut checked = 0;
        while checked < 50 {
            let u = unit(3, &mut rng) * 3.0;
            let w = &u + unit(3, &mut rng) * 0.2;
            let keep: Vec<usize> = (0..data.len())
                .filter(|&i| {
                    let (x, a) = (data.row(i), data.labels()[i]);
                    (a - dot(x, u.as_slice())) * (a - dot(x, w.as_slice())) > 0.0
                })
                .collect();
            let batch = data.select(&keep);
            let mid = (&u + &w) / 2.0;
            let fu = empirical_objective(&batch, u.as_slice(), 0.1).unwrap();
            let fw = empirical_objective(&batch, w.as_slice(), 0.1).unwrap();
            let fm = empirical_objective(&batch, mid.as_slice(), 0.1).unwrap();
            assert!((fu + fw) / 2.0 <= fm + 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn population_objective_has_a_cusp_at_the_weight() {
        let mut rng = seeded(13);
        let w = unit(3, &mut rng) * 0.5;
        let model = MixtureModel::isotropic(vec![1.0], vec![w.clone()], ModelBounds::default()).unwrap();
        let data = sample_dataset(&model, 100_000, &mut rng).unwrap();
        let dir = unit(3, &mut rng) * 0.05;
        let f = |v: &DVector<f64>| empirical_objective(&data, v.as_slice(), 0.1).unwrap();
        assert!((f(&(&w + &dir)) + f(&(&w - &dir))) / 2.0 > f(&w));
    }

    #[test]
    fn step_schedule_is_positive_and_geometric() {
        let cfg = GradConfig::new(10, 1.0, 1.0, 1.0, 1e-3).unwrap().with_zeta(0.1);
        assert!((cfg.step_size(0) - cfg.eta0 * 0.1 / 10.0).abs() < 1e-15);
        assert!((cfg.step_size(1) / cfg.step_size(0) - 0.95).abs() < 1e-15);
        assert!((0..cfg.t_max).all(|t| cfg.step_size(t) > 0.0));
        assert_eq!(cfg.window(), 10);
        assert!((GradConfig::default_zeta(2.0, 1.0, 0.5) - 1.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn k1_refine_converges() {
        let mut rng = seeded(40);
        let w = unit(10, &mut rng);
        let model = MixtureModel::isotropic(vec![1.0], vec![w.clone()], ModelBounds::default()).unwrap();
        let v0 = &w + unit(10, &mut rng) * 0.05;
        let cfg = GradConfig::new(10, 1.0, 1.0, 1.0, 1e-3).unwrap().with_zeta(0.1);
        let mut src = ModelSource::new(&model, 41);
        let out = refine(&mut src, v0.as_slice(), &cfg).unwrap();
        let err = (DVector::from_vec(out.v) - &w).norm();
        assert!(err <= 1e-3, "error {err}");
    }

    #[test]
    fn start_at_truth_stays_put() {
        let mut rng = seeded(42);
        let w = unit(10, &mut rng);
        let model = MixtureModel::isotropic(vec![1.0], vec![w.clone()], ModelBounds::default()).unwrap();
        let cfg = GradConfig::new(10, 1.0, 1.0, 1.0, 1e-3).unwrap().with_zeta(0.1);
        let mut src = ModelSource::new(&model, 43);
        let mut worst: f64 = 0.0;
        refine_observed(&mut src, w.as_slice(), &cfg, |_, v| {
            worst = worst.max((DVector::from_column_slice(v) - &w).norm());
        })
        .unwrap();
        assert!(worst <= 1e-2, "drift {worst}");
    }

    #[test]
    fn k2_refine_picks_the_nearby_weight() {
        let mut rng = seeded(44);
        let w1 = unit(10, &mut rng) * 0.5;
        let w2 = -&w1;
        let model =
            MixtureModel::isotropic(vec![0.5, 0.5], vec![w1.clone(), w2.clone()], ModelBounds::default()).unwrap();
        let data = sample_dataset(&model, 200_000, &mut rng).unwrap().strip_hidden().0;
        let cfg = GradConfig::new(10, 1.0, 1.0, 0.5, 1e-4).unwrap();
        let v0 = &w1 + unit(10, &mut rng) * (0.9 * cfg.zeta);
        let mut src = SubsampleSource::new(&data, 45).unwrap();
        let out = refine(&mut src, v0.as_slice(), &cfg).unwrap();
        let v = DVector::from_vec(out.v);
        assert!((&v - &w1).norm() <= 1e-2);
        assert!((&v - &w2).norm() >= 0.5);
    }

    #[test]
    fn exhausted_refine_returns_partial() {
        let model =
            MixtureModel::isotropic(vec![1.0], vec![DVector::from_vec(vec![1.0, 0.0])], ModelBounds::default())
                .unwrap();
        let mut cfg = GradConfig::new(2, 1.0, 1.0, 1.0, 1e-3).unwrap();
        cfg.m = 100;
        let mut src = ModelSource::new(&model, 1).with_budget(350);
        let err = refine(&mut src, &[0.0, 0.0], &cfg).unwrap_err();
        match err.partial() {
            Some(Partial::Refine(r)) => assert_eq!(r.steps, 3),
            other => panic!("unexpected partial {other:?}"),
        }
    }

    #[test]
    fn inverse_gaussian_trivial_cases() {
        let mut rng = seeded(9);
        let a = [0.3, -0.2, 0.9];
        let est = inverse_gaussian_expectation(&a, &a, 0.0, 10_000, &mut rng).unwrap();
        assert!((est.estimate - 1.0).abs() <= 1e-12);
        let est = inverse_gaussian_expectation(&[1.0, 0.0], &[0.0, 2.0], 0.1, 200_000, &mut rng).unwrap();
        assert!(est.estimate.abs() <= 3.0 * est.std_error);
        assert!(inverse_gaussian_expectation(&a, &[0.0; 3], 0.1, 10, &mut rng).is_err());
    }
}
