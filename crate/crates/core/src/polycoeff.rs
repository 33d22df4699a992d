//! Clustering centers and the monic polynomial `f(x) = prod_p (x^2 - z_p)`.
//!
//! The centers come from the estimated residual variances: the smallest one
//! is always a root, values within `eps / rho` of it are absorbed, and every
//! value beyond that becomes a root of its own. That keeps `f` tiny at every
//! estimated variance while `x f'(x)` stays large at the smallest one.

use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    /// Nondecreasing roots of `f` as a polynomial in `x^2`.
    pub centers: Vec<f64>,
    /// `coeffs[i]` multiplies `x^(2i)`; the last entry is 1.
    pub coeffs: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
    /// Some input was outside `[1/rho, rho]` and got clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centers {
    pub centers: Vec<f64>,
    pub clamped: bool,
}

/// Pick the polynomial roots for values `r` (sorted internally).
pub fn cluster_centers(r: &[f64], eps: f64, rho: f64) -> Result<Centers> {
    if r.is_empty() {
        return Err(MlrError::param("need at least one value to cluster"));
    }
    if !(eps > 0.0) {
        return Err(MlrError::param("eps must be positive"));
    }
    if !(rho > 1.0) || !rho.is_finite() {
        return Err(MlrError::param("rho must be finite and exceed 1"));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(MlrError::data("values to cluster must be finite"));
    }
    let (lo, hi) = (1.0 / rho, rho);
    let mut clamped = false;
    let mut sorted: Vec<f64> = r
        .iter()
        .map(|&v| {
            if v < lo || v > hi {
                clamped = true;
            }
            v.clamp(lo, hi)
        })
        .collect();
    sorted.sort_unstable_by(f64::total_cmp);

    let z1 = sorted[0];
    let cut = z1 + eps / rho;
    let mut centers = vec![z1];
    if let Some(j) = sorted.iter().position(|&v| v >= cut) {
        centers.extend_from_slice(&sorted[j..]);
    }
    Ok(Centers { centers, clamped })
}

/// Even-power coefficients of `prod_p (x^2 - z_p)`, lowest power first.
pub fn poly_coeffs(centers: &[f64]) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    for &z in centers {
        // multiply by (y - z) where y = x^2
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= z * c;
        }
        coeffs = next;
    }
    coeffs
}

/// Default conditioning bound: a margin over the spread of the values.
pub fn choose_rho(r: &[f64], margin: f64) -> f64 {
    let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    margin * max.max(1.0 / min)
}

impl PolynomialSpec {
    pub fn from_values(r: &[f64], eps: f64, rho: f64) -> Result<Self> {
        let Centers { centers, clamped } = cluster_centers(r, eps, rho)?;
        Ok(Self::from_centers(centers, eps, rho, clamped))
    }

    pub fn from_centers(mut centers: Vec<f64>, eps: f64, rho: f64, clamped: bool) -> Self {
        centers.sort_unstable_by(f64::total_cmp);
        let coeffs = poly_coeffs(&centers);
        PolynomialSpec {
            centers,
            coeffs,
            rho,
            eps,
            clamped,
        }
    }

    pub fn degree(&self) -> usize {
        self.centers.len()
    }

    /// `(f, f', f'')` at `x`, from the product form.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (mut f, mut f1, mut f2) = (1.0, 0.0, 0.0);
        let y = x * x;
        for &z in &self.centers {
            let h = y - z;
            let h1 = 2.0 * x;
            f2 = f2 * h + 2.0 * f1 * h1 + 2.0 * f;
            f1 = f1 * h + f * h1;
            f *= h;
        }
        (f, f1, f2)
    }

    /// `f` at `x = sqrt(y)`, i.e. `prod_p (y - z_p)`.
    pub fn value_at_sq(&self, y: f64) -> f64 {
        self.centers.iter().map(|&z| y - z).product()
    }

    /// `x f'(x)` at `x = sqrt(y)`, i.e. `2 y sum_p prod_{q != p} (y - z_q)`.
    pub fn scaled_slope_at_sq(&self, y: f64) -> f64 {
        // running product of the factors before p and after p
        let n = self.centers.len();
        let mut suffix = vec![1.0; n + 1];
        for p in (0..n).rev() {
            suffix[p] = suffix[p + 1] * (y - self.centers[p]);
        }
        let mut prefix = 1.0;
        let mut sum = 0.0;
        for p in 0..n {
            sum += prefix * suffix[p + 1];
            prefix *= y - self.centers[p];
        }
        2.0 * y * sum
    }

    /// `f(x)` by Horner's rule over the expanded coefficients.
    pub fn eval_coeffs(&self, x: f64) -> f64 {
        let y = x * x;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
    }
}
