//! The generative model, its assumption checks, and labeled datasets.
//!
//! Each sample picks a component `z` with probability `probs[z]`, draws
//! `x = cov_sqrts[z] * g` with `g` standard normal, and labels it with
//! `alpha = <weights[z], x>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};

/// Bounds the learner is told about: every covariance square root lies
/// between `I` and `sigma * I`, every weight pair is at least `delta` apart,
/// and every mixing probability is at least `pmin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    pub sigma: f64,
    pub delta: f64,
    pub pmin: f64,
}

impl Default for ModelBounds {
    fn default() -> Self {
        ModelBounds {
            sigma: 1.0,
            delta: 1.0,
            pmin: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub probs: Vec<f64>,
    pub weights: Vec<DVector<f64>>,
    /// Symmetric PSD square roots; component `i` has covariance `cov_sqrts[i]^2`.
    pub cov_sqrts: Vec<DMatrix<f64>>,
    pub bounds: ModelBounds,
}

const SIMPLEX_TOL: f64 = 1e-12;
const EIG_TOL: f64 = 1e-9;

impl MixtureModel {
    pub fn new(
        probs: Vec<f64>,
        weights: Vec<DVector<f64>>,
        cov_sqrts: Vec<DMatrix<f64>>,
        bounds: ModelBounds,
    ) -> Result<Self> {
        let model = MixtureModel {
            probs,
            weights,
            cov_sqrts,
            bounds,
        };
        model.check_structure()?;
        Ok(model)
    }

    /// Model whose components all use the identity covariance.
    pub fn isotropic(probs: Vec<f64>, weights: Vec<DVector<f64>>, bounds: ModelBounds) -> Result<Self> {
        let d = weights.first().map_or(0, |w| w.len());
        let covs = vec![DMatrix::identity(d, d); weights.len()];
        Self::new(probs, weights, covs, bounds)
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn d(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len())
    }

    /// Shape, simplex and symmetry checks. Assumption checks live in
    /// [`MixtureModel::validate`].
    pub fn check_structure(&self) -> Result<()> {
        let k = self.probs.len();
        if k == 0 {
            return Err(MlrError::shape("model needs at least one component"));
        }
        if self.weights.len() != k || self.cov_sqrts.len() != k {
            return Err(MlrError::shape(format!(
                "{} probs, {} weights, {} covariance roots",
                k,
                self.weights.len(),
                self.cov_sqrts.len()
            )));
        }
        let d = self.weights[0].len();
        if d == 0 {
            return Err(MlrError::shape("dimension must be at least 1"));
        }
        for (i, (w, s)) in self.weights.iter().zip(&self.cov_sqrts).enumerate() {
            if w.len() != d {
                return Err(MlrError::shape(format!("weight {i} has length {} != {d}", w.len())));
            }
            if s.nrows() != d || s.ncols() != d {
                return Err(MlrError::shape(format!(
                    "covariance root {i} is {}x{}, expected {d}x{d}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            if w.iter().chain(s.iter()).any(|v| !v.is_finite()) {
                return Err(MlrError::data(format!("component {i} has non-finite entries")));
            }
            let scale = s.amax().max(1.0);
            if (s - s.transpose()).amax() > 1e-12 * scale {
                return Err(MlrError::data(format!("covariance root {i} is not symmetric")));
            }
        }
        if self.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(MlrError::data("mixing probabilities must be finite and nonnegative"));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(MlrError::data(format!("mixing probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Check covariance, proportion and separation bounds.
    pub fn validate(
        &self,
        sigma: f64,
        delta: f64,
        pmin: f64,
        opts: ValidationOptions,
    ) -> Result<ValidationReport> {
        self.check_structure()?;

        let mut min_eig = f64::INFINITY;
        let mut max_eig = f64::NEG_INFINITY;
        for s in &self.cov_sqrts {
            let eig = SymmetricEigen::new(s.clone());
            for &e in eig.eigenvalues.iter() {
                min_eig = min_eig.min(e);
                max_eig = max_eig.max(e);
            }
        }
        let a1 = CovarianceCheck {
            min_eigenvalue: min_eig,
            max_eigenvalue: max_eig,
            passed: min_eig >= 1.0 - EIG_TOL && max_eig <= sigma + EIG_TOL,
            enforced: opts.strict_a1,
        };

        let min_prob = self.probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let a2 = ProportionCheck {
            min_prob,
            passed: min_prob >= pmin,
        };

        let max_norm = self.weights.iter().map(|w| w.norm()).fold(0.0, f64::max);
        let mut min_dist = f64::INFINITY;
        for i in 0..self.k() {
            for j in (i + 1)..self.k() {
                min_dist = min_dist.min((&self.weights[i] - &self.weights[j]).norm());
            }
        }
        let a3 = SeparationCheck {
            max_weight_norm: max_norm,
            min_pairwise_distance: min_dist,
            passed: max_norm <= 1.0 + EIG_TOL && min_dist >= delta,
            enforced: opts.strict_a3,
        };

        Ok(ValidationReport { a1, a2, a3 })
    }

    /// [`MixtureModel::validate`] against the model's declared bounds.
    pub fn validate_declared(&self, opts: ValidationOptions) -> Result<ValidationReport> {
        self.validate(self.bounds.sigma, self.bounds.delta, self.bounds.pmin, opts)
    }

    /// `||Sigma_i (w_i - a)||` for every component.
    pub fn residual_scales(&self, a: &DVector<f64>) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.cov_sqrts)
            .map(|(w, s)| (s * (w - a)).norm())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub strict_a1: bool,
    pub strict_a3: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            strict_a1: true,
            strict_a3: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub passed: bool,
    pub enforced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionCheck {
    pub min_prob: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub max_weight_norm: f64,
    /// Infinite when the model has a single component.
    pub min_pairwise_distance: f64,
    pub passed: bool,
    pub enforced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub a1: CovarianceCheck,
    pub a2: ProportionCheck,
    pub a3: SeparationCheck,
}

impl ValidationReport {
    /// True when every enforced assumption holds.
    pub fn passed(&self) -> bool {
        (self.a1.passed || !self.a1.enforced) && self.a2.passed && (self.a3.passed || !self.a3.enforced)
    }
}

/// Labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    alpha: Vec<f64>,
    hidden_z: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(d: usize, x: Vec<f64>, alpha: Vec<f64>, hidden_z: Option<Vec<usize>>) -> Result<Self> {
        if d == 0 {
            return Err(MlrError::shape("dimension must be at least 1"));
        }
        if x.len() != d * alpha.len() {
            return Err(MlrError::shape(format!(
                "{} covariate entries for {} rows of dimension {d}",
                x.len(),
                alpha.len()
            )));
        }
        if let Some(z) = &hidden_z {
            if z.len() != alpha.len() {
                return Err(MlrError::shape("hidden_z length differs from row count"));
            }
        }
        if x.iter().chain(&alpha).any(|v| !v.is_finite()) {
            return Err(MlrError::data("dataset entries must be finite"));
        }
        Ok(Dataset { d, x, alpha, hidden_z })
    }

    pub fn from_rows(rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.0.len());
        let mut x = Vec::with_capacity(rows.len() * d);
        let mut alpha = Vec::with_capacity(rows.len());
        for (xi, a) in rows {
            if xi.len() != d {
                return Err(MlrError::shape("rows have differing dimensions"));
            }
            x.extend_from_slice(xi);
            alpha.push(*a);
        }
        Dataset::new(d, x, alpha, None)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.d).zip(self.alpha.iter().copied())
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.alpha
    }

    pub fn hidden_z(&self) -> Option<&[usize]> {
        self.hidden_z.as_deref()
    }

    pub fn has_hidden(&self) -> bool {
        self.hidden_z.is_some()
    }

    /// Split off the hidden component ids, for evaluation code only.
    pub fn strip_hidden(mut self) -> (Dataset, Option<Vec<usize>>) {
        let z = self.hidden_z.take();
        (self, z)
    }

    pub fn without_hidden(&self) -> Dataset {
        Dataset {
            d: self.d,
            x: self.x.clone(),
            alpha: self.alpha.clone(),
            hidden_z: None,
        }
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut alpha = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            alpha.push(self.alpha[i]);
        }
        let hidden_z = self.hidden_z.as_ref().map(|z| indices.iter().map(|&i| z[i]).collect());
        Dataset {
            d: self.d,
            x,
            alpha,
            hidden_z,
        }
    }

    /// `alpha_l - <x_l, v>` for every row.
    pub fn residuals(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d {
            return Err(MlrError::shape(format!("vector of length {} for dimension {}", v.len(), self.d)));
        }
        Ok(self.rows().map(|(x, a)| a - dot(x, v)).collect())
    }

    /// Replace every label by `alpha - <a, x>`.
    pub fn residualize(&self, a: &[f64]) -> Result<Dataset> {
        let alpha = self.residuals(a)?;
        Ok(Dataset {
            d: self.d,
            x: self.x.clone(),
            alpha,
            hidden_z: self.hidden_z.clone(),
        })
    }
}

/// Recipe for a random model: weights uniform in the unit ball, redrawn until
/// every pair is `delta` apart, and diagonal covariance square roots with
/// entries uniform in `[1, sigma]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub k: usize,
    pub d: usize,
    pub sigma: f64,
    pub delta: f64,
    /// Uniform when absent.
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
}

impl InstanceSpec {
    const MAX_DRAWS: usize = 10_000;

    pub fn new(k: usize, d: usize, sigma: f64, delta: f64) -> Self {
        InstanceSpec {
            k,
            d,
            sigma,
            delta,
            probs: None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MixtureModel> {
        let (k, d) = (self.k, self.d);
        if k == 0 || d == 0 {
            return Err(MlrError::param("need k >= 1 and d >= 1"));
        }
        if !(self.sigma >= 1.0) || !(self.delta >= 0.0) {
            return Err(MlrError::param("need sigma >= 1 and delta >= 0"));
        }
        let probs = self.probs.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
        if probs.len() != k {
            return Err(MlrError::shape(format!("{} probabilities for {k} components", probs.len())));
        }
        let pmin = probs.iter().cloned().fold(f64::INFINITY, f64::min);

        let mut weights: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut draws = 0;
        while weights.len() < k {
            draws += 1;
            if draws > Self::MAX_DRAWS {
                return Err(MlrError::param(format!(
                    "could not place {k} weights {} apart in the unit ball",
                    self.delta
                )));
            }
            let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            if norm == 0.0 {
                continue;
            }
            let radius = rng.random::<f64>().powf(1.0 / d as f64);
            let w = g * (radius / norm);
            if weights.iter().all(|u| (u - &w).norm() >= self.delta) {
                weights.push(w);
            } else if draws % 100 == 0 {
                weights.clear();
            }
        }
        let covs = (0..k)
            .map(|_| DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(1.0..=self.sigma))))
            .collect();
        let bounds = ModelBounds {
            sigma: self.sigma,
            delta: self.delta,
            pmin,
        };
        MixtureModel::new(probs, weights, covs, bounds)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draw `n` noiseless rows.
pub fn sample_dataset<R: Rng + ?Sized>(model: &MixtureModel, n: usize, rng: &mut R) -> Result<Dataset> {
    sample_dataset_with_noise(model, n, 0.0, rng)
}

/// Draw `n` rows with optional additive Gaussian label noise of standard
/// deviation `noise_std`.
pub fn sample_dataset_with_noise<R: Rng + ?Sized>(
    model: &MixtureModel,
    n: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<Dataset> {
    model.check_structure()?;
    if n == 0 {
        return Err(MlrError::param("sample count must be at least 1"));
    }
    if !(noise_std >= 0.0) {
        return Err(MlrError::param("label noise must be nonnegative"));
    }
    let d = model.d();
    let picker = WeightedIndex::new(&model.probs).map_err(|e| MlrError::data(e.to_string()))?;
    let mut x = Vec::with_capacity(n * d);
    let mut alpha = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut g = vec![0.0; d];
    for _ in 0..n {
        let comp = picker.sample(rng);
        for gi in g.iter_mut() {
            *gi = rng.sample(StandardNormal);
        }
        let s = &model.cov_sqrts[comp];
        let start = x.len();
        for r in 0..d {
            let mut acc = 0.0;
            for (c, gc) in g.iter().enumerate() {
                acc += s[(r, c)] * gc;
            }
            x.push(acc);
        }
        let mut label = dot(&x[start..], model.weights[comp].as_slice());
        if noise_std > 0.0 {
            label += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        alpha.push(label);
        z.push(comp);
    }
    Dataset::new(d, x, alpha, Some(z))
}
