//! Brute-force and Monte-Carlo ground truth for tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MlrError, Result};
use crate::model::MixtureModel;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub estimate: DMatrix<f64>,
    /// Per-entry standard error of the mean.
    pub std_error: DMatrix<f64>,
    /// Finite samples averaged.
    pub n: usize,
    /// Samples dropped for non-finite output.
    pub excluded: usize,
}

impl OracleResult {
    pub fn scalar(&self) -> (f64, f64) {
        (self.estimate[(0, 0)], self.std_error[(0, 0)])
    }

    /// Largest `|estimate - target| / std_error` over entries; entries with
    /// zero error must match exactly.
    pub fn max_z_score(&self, target: &DMatrix<f64>) -> f64 {
        self.estimate
            .iter()
            .zip(self.std_error.iter())
            .zip(target.iter())
            .map(|((e, s), t)| {
                let diff = (e - t).abs();
                if *s > 0.0 {
                    diff / s
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Sample mean and standard error of `f(y)` for `y ~ N(0, I_dim)`.
pub fn mc_expectation<R, F>(mut f: F, dim: usize, n: usize, rng: &mut R) -> Result<OracleResult>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> DMatrix<f64>,
{
    if n < 2 {
        return Err(MlrError::param("need at least two samples"));
    }
    let mut y = DVector::zeros(dim);
    let mut mean: Option<DMatrix<f64>> = None;
    let mut m2: Option<DMatrix<f64>> = None;
    let mut count = 0usize;
    let mut excluded = 0usize;
    for _ in 0..n {
        for yi in y.iter_mut() {
            *yi = rng.sample(StandardNormal);
        }
        let val = f(&y);
        if val.iter().any(|v| !v.is_finite()) {
            excluded += 1;
            continue;
        }
        count += 1;
        let mu = mean.get_or_insert_with(|| DMatrix::zeros(val.nrows(), val.ncols()));
        let s2 = m2.get_or_insert_with(|| DMatrix::zeros(val.nrows(), val.ncols()));
        if val.shape() != mu.shape() {
            return Err(MlrError::shape("integrand changed shape"));
        }
        let c = count as f64;
        for ((m, s), v) in mu.iter_mut().zip(s2.iter_mut()).zip(val.iter()) {
            let delta = v - *m;
            *m += delta / c;
            *s += delta * (v - *m);
        }
    }
    let (Some(estimate), Some(m2)) = (mean, m2) else {
        return Err(MlrError::data("every sample was non-finite"));
    };
    let denom = (count.max(2) - 1) as f64 * count as f64;
    let std_error = m2.map(|s| (s / denom).sqrt());
    Ok(OracleResult {
        estimate,
        std_error,
        n: count,
        excluded,
    })
}

/// Scalar convenience wrapper around [`mc_expectation`].
pub fn mc_expectation_scalar<R, F>(mut f: F, dim: usize, n: usize, rng: &mut R) -> Result<OracleResult>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    mc_expectation(|y| DMatrix::from_element(1, 1, f(y)), dim, n, rng)
}

/// Central differences per coordinate.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(objective: F, v: &[f64], h: f64) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(MlrError::param("step must be positive"));
    }
    let mut probe = v.to_vec();
    let mut g = DVector::zeros(v.len());
    for i in 0..v.len() {
        probe[i] = v[i] + h;
        let up = objective(&probe);
        probe[i] = v[i] - h;
        let down = objective(&probe);
        probe[i] = v[i];
        g[i] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// Index and value of `min_i |Sigma_i (w_i - a)|`, lowest index on ties.
pub fn brute_force_min_scale(model: &MixtureModel, a: &[f64]) -> Result<(usize, f64)> {
    if a.len() != model.d() {
        return Err(MlrError::shape("offset vector has the wrong length"));
    }
    let scales = model.residual_scales(&DVector::from_column_slice(a));
    let mut best = (0, scales[0]);
    for (i, &s) in scales.iter().enumerate().skip(1) {
        if s < best.1 {
            best = (i, s);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBounds;
    use crate::momentsub::{double_factorial, population_moment};
    use crate::rng::seeded;

    #[test]
    fn constant_integrand_has_zero_error() {
        let r = mc_expectation_scalar(|_| 1.0, 3, 100, &mut seeded(1)).unwrap();
        assert_eq!(r.scalar(), (1.0, 0.0));
    }

    #[test]
    fn unit_variance() {
        let r = mc_expectation_scalar(|y| y[0] * y[0], 3, 1_000_000, &mut seeded(2)).unwrap();
        let (e, s) = r.scalar();
        assert!((e - 1.0).abs() <= 3.0 * s);
    }

    #[test]
    fn gaussian_fourth_moment_identity() {
        let w = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let r = mc_expectation(
            |y| {
                let t = w.dot(y);
                y * y.transpose() * (t * t)
            },
            3,
            1_000_000,
            &mut seeded(3),
        )
        .unwrap();
        let ww = &w * w.transpose();
        let expected = &ww * double_factorial(2).unwrap() + (DMatrix::identity(3, 3) - &ww);
        assert!(r.max_z_score(&expected) <= 4.5, "{}", r.max_z_score(&expected));
        let closed = population_moment(&DMatrix::identity(3, 3), &w, 1).unwrap();
        assert!((closed - expected).amax() < 1e-12);
    }

    #[test]
    fn standard_error_scales_with_root_n() {
        let a = mc_expectation_scalar(|y| y[0] * y[1], 2, 50_000, &mut seeded(4)).unwrap().scalar().1;
        let b = mc_expectation_scalar(|y| y[0] * y[1], 2, 200_000, &mut seeded(5)).unwrap().scalar().1;
        assert!((a / b / 2.0 - 1.0).abs() <= 0.2);
    }

    #[test]
    fn non_finite_samples_are_excluded() {
        let mut i = 0;
        let r = mc_expectation_scalar(
            |_| {
                i += 1;
                if i % 10 == 0 {
                    f64::NAN
                } else {
                    2.0
                }
            },
            1,
            100,
            &mut seeded(6),
        )
        .unwrap();
        assert_eq!((r.n, r.excluded), (90, 10));
    }

    #[test]
    fn finite_difference_examples() {
        let v = [0.3, -1.2, 2.0];
        let g = finite_diff_grad(|x| x.iter().map(|t| t * t).sum::<f64>() / 2.0, &v, 1e-4).unwrap();
        assert!(g.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-6));
        let c = [1.5, -0.5, 4.0];
        let g = finite_diff_grad(|x| x.iter().zip(&c).map(|(a, b)| a * b).sum(), &v, 1e-3).unwrap();
        assert!(g.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn min_scale_examples() {
        let w1 = DVector::from_vec(vec![1.0, 0.0]);
        let w2 = DVector::from_vec(vec![0.0, 1.0]);
        let model =
            MixtureModel::isotropic(vec![0.5, 0.5], vec![w1.clone(), w2.clone()], ModelBounds::default()).unwrap();
        assert_eq!(brute_force_min_scale(&model, w1.as_slice()).unwrap(), (0, 0.0));
        let mid = (&w1 + &w2) / 2.0;
        let (j, v) = brute_force_min_scale(&model, mid.as_slice()).unwrap();
        assert_eq!(j, 0);
        assert!((v - (&w1 - &w2).norm() / 2.0).abs() < 1e-15);
        let single = MixtureModel::isotropic(vec![1.0], vec![w2], ModelBounds::default()).unwrap();
        assert_eq!(brute_force_min_scale(&single, &[5.0, -3.0]).unwrap().0, 0);
    }
}
