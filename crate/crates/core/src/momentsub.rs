//! Mixed label moments and the subspace they reveal.
//!
//! With residual labels `alpha = <x, v_z>` and `x ~ N(0, Sigma_z^2)`,
//!
//! ```text
//! E[alpha^(2p) x x^T] / (2p-1)!! = sum_i p_i |Sigma_i v_i|^(2p) (2p Sigma_i^2 v_i v_i^T Sigma_i^2 / |Sigma_i v_i|^2 + Sigma_i^2)
//! ```
//!
//! so mixing the even moments with the coefficients of `f` gives
//! `sum_i p_i (X_i + Y_i)` with signal `X_i ~ Sigma_i^2 v_i v_i^T Sigma_i^2 * x f'(x)` and
//! covariance noise `Y_i = Sigma_i^2 f(x)`, both at `x = |Sigma_i v_i|`. Choosing the
//! roots of `f` at the estimated `|Sigma_i v_i|^2` cancels the noise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::model::{Dataset, MixtureModel};
use crate::onedvar::{estimate_variances, OneDConfig, OneDEstimate};
use crate::polycoeff::{choose_rho, PolynomialSpec};

/// Largest `p` accepted by [`double_factorial`].
pub const MAX_MOMENT_ORDER: usize = 15;

const WEIGHT_CAP: f64 = 1e300;

/// `(2p - 1)!!`, with `(-1)!! = 1`.
pub fn double_factorial(p: usize) -> Result<f64> {
    if p > MAX_MOMENT_ORDER {
        return Err(MlrError::param(format!("moment order {p} exceeds {MAX_MOMENT_ORDER}")));
    }
    Ok((1..=p).map(|i| (2 * i - 1) as f64).product())
}

#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub mat: DMatrix<f64>,
    pub sample_count: usize,
    pub spec: PolynomialSpec,
    /// Rows whose label power overflowed and was capped.
    pub clipped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceEstimate {
    /// `d x k`, orthonormal columns.
    #[serde(with = "matrix_rows")]
    pub basis: DMatrix<f64>,
    /// Descending absolute eigenvalues belonging to the columns of `basis`.
    pub abs_eigenvalues: Vec<f64>,
    /// The same eigenvalues with sign.
    pub eigenvalues: Vec<f64>,
}

/// Practical tolerances for the subspace step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerwTolerances {
    /// Accuracy target for the variance estimates feeding the polynomial; used
    /// as the EM convergence tolerance when the step estimates them itself.
    pub variance_eps: f64,
    /// Clustering separation for the polynomial centers.
    pub cluster_eps: f64,
    /// `rho = rho_margin * max(max r, 1 / min r)`.
    pub rho_margin: f64,
    /// Estimated components lighter than this do not become centers.
    pub weight_cutoff: f64,
}

impl Default for PowerwTolerances {
    fn default() -> Self {
        PowerwTolerances {
            variance_eps: 1e-3,
            cluster_eps: 0.05,
            rho_margin: 2.0,
            weight_cutoff: 0.0,
        }
    }
}

impl PowerwTolerances {
    /// The theoretical settings: variance accuracy `(eps / sigma)^(4k)` and
    /// clustering separation `eps`. The former underflows quickly in `k`.
    pub fn faithful(eps: f64, sigma: f64, k: usize) -> Self {
        PowerwTolerances {
            variance_eps: (eps / sigma).powi(4 * k as i32),
            cluster_eps: eps,
            ..Self::default()
        }
    }
}

/// Empirical mixed moment `(1/m) sum_l w(alpha_l) x_l x_l^T` with
/// `w(alpha) = sum_p c_p alpha^(2p) / (2p-1)!!`.
pub fn moment_matrix(data: &Dataset, spec: &PolynomialSpec) -> Result<MomentMatrix> {
    if data.is_empty() {
        return Err(MlrError::data("moment matrix needs at least one row"));
    }
    let s = spec.degree();
    let scaled: Vec<f64> = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(p, &c)| double_factorial(p).map(|df| c / df))
        .collect::<Result<_>>()?;
    let sq_cap = WEIGHT_CAP.powf(1.0 / s.max(1) as f64);

    let d = data.dim();
    let mut upper = vec![0.0; d * (d + 1) / 2];
    let mut clipped = 0usize;
    for (x, a) in data.rows() {
        let mut y = a * a;
        if y > sq_cap {
            y = sq_cap;
            clipped += 1;
        }
        let w = scaled.iter().rev().fold(0.0, |acc, &c| acc * y + c);
        let mut idx = 0;
        for r in 0..d {
            let wr = w * x[r];
            for c in r..d {
                upper[idx] += wr * x[c];
                idx += 1;
            }
        }
    }
    let m = data.len() as f64;
    let mut mat = DMatrix::zeros(d, d);
    let mut idx = 0;
    for r in 0..d {
        for c in r..d {
            let v = upper[idx] / m;
            mat[(r, c)] = v;
            mat[(c, r)] = v;
            idx += 1;
        }
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(MlrError::data("moment matrix has non-finite entries"));
    }
    Ok(MomentMatrix {
        mat,
        sample_count: data.len(),
        spec: spec.clone(),
        clipped_rows: clipped,
    })
}

/// Closed form of `E[<z, v>^(2p) z z^T]` for `z ~ N(0, cov_sqrt^2)`.
pub fn population_moment(cov_sqrt: &DMatrix<f64>, v: &DVector<f64>, p: usize) -> Result<DMatrix<f64>> {
    let d = cov_sqrt.nrows();
    if cov_sqrt.ncols() != d || v.len() != d {
        return Err(MlrError::shape("covariance root and vector disagree"));
    }
    let df = double_factorial(p)?;
    let cov = cov_sqrt * cov_sqrt;
    if p == 0 {
        return Ok(cov);
    }
    let sv = cov_sqrt * v;
    let y = sv.norm_squared();
    if y == 0.0 {
        return Ok(DMatrix::zeros(d, d));
    }
    let s2v = cov_sqrt * &sv;
    let outer = &s2v * s2v.transpose();
    Ok((outer * (2.0 * p as f64 / y) + cov) * (df * y.powi(p as i32)))
}

/// Per-component pieces of the population moment: `X_i` (signal) and `Y_i`
/// (covariance noise), unweighted by the mixing probabilities.
#[derive(Debug, Clone)]
pub struct MomentParts {
    pub signal: Vec<DMatrix<f64>>,
    pub noise: Vec<DMatrix<f64>>,
    pub probs: Vec<f64>,
    /// `|Sigma_i (w_i - a)|^2`.
    pub scales_sq: Vec<f64>,
}

impl MomentParts {
    pub fn total(&self) -> DMatrix<f64> {
        let d = self.signal[0].nrows();
        let mut m = DMatrix::zeros(d, d);
        for ((x, y), &p) in self.signal.iter().zip(&self.noise).zip(&self.probs) {
            m += (x + y) * p;
        }
        m
    }

    pub fn weighted_noise(&self) -> DMatrix<f64> {
        let d = self.noise[0].nrows();
        self.noise
            .iter()
            .zip(&self.probs)
            .fold(DMatrix::zeros(d, d), |acc, (y, &p)| acc + y * p)
    }
}

pub fn population_moment_parts(model: &MixtureModel, a: &DVector<f64>, spec: &PolynomialSpec) -> Result<MomentParts> {
    model.check_structure()?;
    if a.len() != model.d() {
        return Err(MlrError::shape("offset vector has the wrong length"));
    }
    let d = model.d();
    let mut parts = MomentParts {
        signal: Vec::with_capacity(model.k()),
        noise: Vec::with_capacity(model.k()),
        probs: model.probs.clone(),
        scales_sq: Vec::with_capacity(model.k()),
    };
    for (w, s) in model.weights.iter().zip(&model.cov_sqrts) {
        let v = w - a;
        let sv = s * &v;
        let y = sv.norm_squared();
        let cov = s * s;
        let signal = if y > 0.0 {
            let s2v = s * &sv;
            (&s2v * s2v.transpose()) * (spec.scaled_slope_at_sq(y) / y)
        } else {
            DMatrix::zeros(d, d)
        };
        parts.noise.push(cov * spec.value_at_sq(y));
        parts.signal.push(signal);
        parts.scales_sq.push(y);
    }
    Ok(parts)
}

/// Expectation of [`moment_matrix`] for residual labels `alpha - <a, x>`.
pub fn population_moment_mix(model: &MixtureModel, a: &DVector<f64>, spec: &PolynomialSpec) -> Result<DMatrix<f64>> {
    Ok(population_moment_parts(model, a, spec)?.total())
}

/// Eigenvectors of the `k` largest-magnitude eigenvalues of symmetric `m`.
/// Each column is signed so its largest-magnitude entry is positive.
pub fn top_k_subspace(m: &DMatrix<f64>, k: usize) -> Result<SubspaceEstimate> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(MlrError::shape("moment matrix must be square"));
    }
    if k == 0 || k > d {
        return Err(MlrError::param(format!("cannot take {k} directions in dimension {d}")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()).then(i.cmp(&j)));
    let mut basis = DMatrix::zeros(d, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let lead = v.iter().enumerate().fold(0, |best, (r, x)| if x.abs() > v[best].abs() { r } else { best });
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(col, &v);
        eigenvalues.push(eig.eigenvalues[i]);
    }
    Ok(SubspaceEstimate {
        basis,
        abs_eigenvalues: eigenvalues.iter().map(|e| e.abs()).collect(),
        eigenvalues,
    })
}

impl MomentMatrix {
    pub fn top_k(&self, k: usize) -> Result<SubspaceEstimate> {
        top_k_subspace(&self.mat, k)
    }
}

impl SubspaceEstimate {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `|U^T u| / |u|`: how much of `u` lies in the span.
    pub fn captured_fraction(&self, u: &DVector<f64>) -> f64 {
        (self.basis.transpose() * u).norm() / u.norm()
    }
}

#[derive(Debug, Clone)]
pub struct PowerwOutput {
    pub subspace: SubspaceEstimate,
    pub spec: PolynomialSpec,
    pub estimate: OneDEstimate,
    pub clipped_rows: usize,
}

/// Subspace estimate from residualized data, reusing an existing variance
/// estimate of the same labels.
pub fn powerw_with_estimate(
    data: &Dataset,
    k: usize,
    estimate: &OneDEstimate,
    tol: &PowerwTolerances,
) -> Result<PowerwOutput> {
    let mut r: Vec<f64> = estimate
        .variances
        .iter()
        .zip(&estimate.mix_weights)
        .filter(|(_, &w)| w >= tol.weight_cutoff)
        .map(|(&v, _)| v)
        .collect();
    if r.is_empty() {
        r = estimate.variances.clone();
    }
    let rho = choose_rho(&r, tol.rho_margin);
    let spec = PolynomialSpec::from_values(&r, tol.cluster_eps, rho)?;
    let moments = moment_matrix(data, &spec)?;
    let subspace = moments.top_k(k.min(data.dim()))?;
    Ok(PowerwOutput {
        subspace,
        spec,
        estimate: estimate.clone(),
        clipped_rows: moments.clipped_rows,
    })
}

/// Variance estimation, polynomial design, moment matrix and top-`k` subspace.
pub fn powerw<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    tol: &PowerwTolerances,
    onedvar: &OneDConfig,
    rng: &mut R,
) -> Result<PowerwOutput> {
    let cfg = OneDConfig {
        tol: tol.variance_eps,
        ..*onedvar
    };
    let estimate = estimate_variances(data.labels(), k, &cfg, rng)?;
    powerw_with_estimate(data, k, &estimate, tol)
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != nc) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_row_iterator(nr, nc, rows.into_iter().flatten()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_dataset, ModelBounds};
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn spectral_norm(m: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new((m + m.transpose()) * 0.5)
            .eigenvalues
            .iter()
            .fold(0.0, |a: f64, e| a.max(e.abs()))
    }

    fn random_unit(d: usize, rng: &mut impl Rng) -> DVector<f64> {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        v.normalize()
    }

    #[test]
    fn double_factorial_values() {
        assert_eq!(double_factorial(0).unwrap(), 1.0);
        assert_eq!(double_factorial(1).unwrap(), 1.0);
        assert_eq!(double_factorial(2).unwrap(), 3.0);
        assert_eq!(double_factorial(3).unwrap(), 15.0);
        assert!(double_factorial(16).is_err());
    }

    #[test]
    fn zero_labels_leave_only_constant_term() {
        let spec = PolynomialSpec::from_centers(vec![0.7], 0.1, 2.0, false);
        let x = vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
        let data = Dataset::new(2, x.clone(), vec![0.0; 3], None).unwrap();
        let m = moment_matrix(&data, &spec).unwrap();
        let mut second = DMatrix::zeros(2, 2);
        for row in x.chunks(2) {
            let v = DVector::from_column_slice(row);
            second += &v * v.transpose();
        }
        second /= 3.0;
        assert!((m.mat - second * -0.7).amax() < 1e-14);
    }

    #[test]
    fn single_row_cancels() {
        let spec = PolynomialSpec::from_centers(vec![1.0], 0.1, 2.0, false);
        let data = Dataset::new(3, vec![1.0, 0.0, 0.0], vec![1.0], None).unwrap();
        let m = moment_matrix(&data, &spec).unwrap();
        assert_eq!(m.mat.amax(), 0.0);
        assert_eq!(m.sample_count, 1);
    }

    #[test]
    fn huge_labels_are_clipped() {
        let spec = PolynomialSpec::from_centers(vec![1.0, 2.0, 3.0], 0.1, 4.0, false);
        let data = Dataset::new(1, vec![1.0, 1.0], vec![1e120, 0.5], None).unwrap();
        let m = moment_matrix(&data, &spec).unwrap();
        assert_eq!(m.clipped_rows, 1);
        assert!(m.mat[(0, 0)].is_finite());
    }

    #[test]
    fn population_moment_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let m = population_moment(&id, &e1, 1).unwrap();
        let mut expected = DMatrix::identity(3, 3);
        expected[(0, 0)] = 3.0;
        assert!((m - expected).amax() < 1e-14);

        let s = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.1]);
        let v = DVector::from_vec(vec![0.3, -0.4]);
        assert!((population_moment(&s, &v, 0).unwrap() - &s * &s).amax() < 1e-14);

        let two_e1 = &e1 * 2.0;
        let m = population_moment(&id, &two_e1, 1).unwrap();
        let mut expected = DMatrix::identity(3, 3) * 4.0;
        expected[(0, 0)] = 12.0;
        assert!((m - expected).amax() < 1e-13);

        assert_eq!(population_moment(&id, &DVector::zeros(3), 2).unwrap().amax(), 0.0);
    }

    #[test]
    fn isotropic_moments_match_the_closed_form() {
        // E[<w,g>^(2p) g g^T] = (2p+1)!! w w^T + (2p-1)!! (I - w w^T) for unit w
        let mut rng = seeded(8);
        let id = DMatrix::<f64>::identity(4, 4);
        for p in 0..4 {
            let w = random_unit(4, &mut rng);
            let ww = &w * w.transpose();
            let expected = &ww * double_factorial(p + 1).unwrap() + (&id - &ww) * double_factorial(p).unwrap();
            assert!((population_moment(&id, &w, p).unwrap() - expected).amax() < 1e-12);
        }
    }

    #[test]
    fn mix_with_a_equal_to_w_is_scaled_covariance() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.5, 2.0]));
        let w = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let model = MixtureModel::new(vec![1.0], vec![w.clone()], vec![s.clone()], ModelBounds::default()).unwrap();
        let spec = PolynomialSpec::from_centers(vec![0.5, 2.0], 0.1, 4.0, false);
        let m = population_moment_mix(&model, &w, &spec).unwrap();
        assert!((m - &s * &s * (0.5 * 2.0)).amax() < 1e-14);
    }

    #[test]
    fn exact_centers_cancel_noise() {
        let mut rng = seeded(21);
        let d = 4;
        let weights: Vec<DVector<f64>> = (0..3).map(|_| random_unit(d, &mut rng) * 0.8).collect();
        let covs: Vec<DMatrix<f64>> = (0..3)
            .map(|_| DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(1.0..2.0))))
            .collect();
        let model = MixtureModel::new(vec![0.3, 0.3, 0.4], weights, covs, ModelBounds::default()).unwrap();
        let a = DVector::zeros(d);
        let r = model.residual_scales(&a).iter().map(|s| s * s).collect::<Vec<_>>();
        let spec = PolynomialSpec::from_centers(r, 0.05, 10.0, false);
        let parts = population_moment_parts(&model, &a, &spec).unwrap();
        for y in &parts.noise {
            assert!(y.amax() < 1e-12);
        }
    }

    #[test]
    fn mix_agrees_with_sample_moment() {
        let mut rng = seeded(5);
        let d = 3;
        let s2 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.2, 1.6, 1.0]));
        let model = MixtureModel::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![0.6, 0.0, 0.2]), DVector::from_vec(vec![-0.3, 0.5, 0.0])],
            vec![DMatrix::identity(d, d), s2],
            ModelBounds::default(),
        )
        .unwrap();
        let a = DVector::from_vec(vec![0.1, 0.1, 0.0]);
        let r: Vec<f64> = model.residual_scales(&a).iter().map(|s| s * s).collect();
        let spec = PolynomialSpec::from_centers(vec![r[0].min(r[1])], 0.05, 10.0, false);
        let data = sample_dataset(&model, 500_000, &mut rng).unwrap().residualize(a.as_slice()).unwrap();
        let emp = moment_matrix(&data, &spec).unwrap().mat;
        let pop = population_moment_mix(&model, &a, &spec).unwrap();
        let err = spectral_norm(&(&emp - &pop));
        assert!(err <= 0.02 * spectral_norm(&pop), "err {err} vs {}", spectral_norm(&pop));
    }

    #[test]
    fn moment_matrix_is_row_order_invariant() {
        let model = MixtureModel::isotropic(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![0.5, 0.5]), DVector::from_vec(vec![-0.5, 0.2])],
            ModelBounds::default(),
        )
        .unwrap();
        let data = sample_dataset(&model, 5000, &mut seeded(1)).unwrap();
        let spec = PolynomialSpec::from_centers(vec![0.3, 0.5], 0.05, 4.0, false);
        let mut idx: Vec<usize> = (0..data.len()).rev().collect();
        idx.swap(0, 2500);
        let a = moment_matrix(&data, &spec).unwrap().mat;
        let b = moment_matrix(&data.select(&idx), &spec).unwrap().mat;
        assert!((&a - &b).amax() <= 1e-9 * a.amax());
        assert!((&a - a.transpose()).amax() <= 1e-12 * a.amax());
    }

    #[test]
    fn top_k_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 3.0, 1.0, 0.0]));
        let u = top_k_subspace(&m, 2).unwrap();
        assert!((u.basis.column(0)[0] - 1.0).abs() < 1e-12);
        assert!((u.basis.column(1)[1] - 1.0).abs() < 1e-12);
        assert_eq!(u.abs_eigenvalues, vec![5.0, 3.0]);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-4.0, 1.0, 0.0]));
        let u = top_k_subspace(&m, 1).unwrap();
        assert!((u.basis[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(u.eigenvalues, vec![-4.0]);

        assert!(matches!(top_k_subspace(&m, 4), Err(MlrError::Parameter(_))));
    }

    #[test]
    fn top_k_is_orthonormal_and_optimal() {
        let mut rng = seeded(31);
        for _ in 0..50 {
            let d = rng.random_range(3..9);
            let k = rng.random_range(1..d);
            let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = (&a + a.transpose()) * 0.5;
            let u = top_k_subspace(&m, k).unwrap();
            let gram = u.basis.transpose() * &u.basis;
            assert!((gram - DMatrix::identity(k, k)).amax() <= 1e-9);
            let proj = &u.basis * (u.basis.transpose() * &m * &u.basis) * u.basis.transpose();
            let mut abs: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|e| e.abs()).collect();
            abs.sort_by(|x, y| y.total_cmp(x));
            assert!((spectral_norm(&(&m - proj)) - abs[k]).abs() <= 1e-8);
            for col in u.basis.column_iter() {
                let lead = col.iter().fold(0.0f64, |b, x| if x.abs() > b.abs() { *x } else { b });
                assert!(lead > 0.0);
            }
        }
    }

    #[test]
    fn powerw_recovers_single_direction() {
        let w = DVector::from_vec(vec![0.6, -0.8, 0.0, 0.0, 0.0]);
        let model = MixtureModel::isotropic(vec![1.0], vec![w.clone()], ModelBounds::default()).unwrap();
        let data = sample_dataset(&model, 200_000, &mut seeded(2)).unwrap();
        let out = powerw(&data, 1, &PowerwTolerances::default(), &OneDConfig::default(), &mut seeded(3)).unwrap();
        let col = out.subspace.basis.column(0).into_owned();
        assert!(col.dot(&w).abs() >= 0.95);
    }

    #[test]
    fn powerw_recovers_two_orthogonal_directions() {
        let w1 = DVector::from_vec(vec![0.9, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w2 = DVector::from_vec(vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let model = MixtureModel::isotropic(vec![0.5, 0.5], vec![w1.clone(), w2.clone()], ModelBounds::default())
            .unwrap();
        let data = sample_dataset(&model, 500_000, &mut seeded(4)).unwrap();
        let out = powerw(&data, 2, &PowerwTolerances::default(), &OneDConfig::default(), &mut seeded(5)).unwrap();
        assert!(out.subspace.captured_fraction(&w1) >= 0.9, "{:?}", out.subspace);
        assert!(out.subspace.captured_fraction(&w2) >= 0.9, "{:?}", out.subspace);
    }

    #[test]
    fn faithful_tolerances_shrink_with_k() {
        let t = PowerwTolerances::faithful(0.1, 2.0, 4);
        assert!(t.variance_eps < 1e-20);
        assert_eq!(t.cluster_eps, 0.1);
    }
}
