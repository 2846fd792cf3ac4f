//! Multivariate normal input model estimated from a small sample.
//!
//! The observed inputs are modeled as draws of a d-variate normal
//! distribution. Mean and covariance are the maximum-likelihood estimates
//! (covariance normalized by `1/n`, not `1/(n-1)`), and synthetic inputs are
//! generated through the Cholesky factor of the estimated covariance:
//! `x = L z + mean` with `z` standard normal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An i.i.d. sample of d-dimensional input vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSample {
    rows: Vec<DVector<f64>>,
    dim: usize,
}

impl InputSample {
    /// Validates that the sample is nonempty, rectangular and finite.
    pub fn new(rows: Vec<DVector<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::InvalidSample("rows have dimension 0".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteData(format!("row {i} has non-finite entry")));
            }
        }
        Ok(Self { rows, dim })
    }

    pub fn from_vecs(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(DVector::from_vec).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }
}

/// Estimated mean, covariance and Cholesky factor of the input distribution.
#[derive(Debug, Clone)]
pub struct GaussianInputModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    dim: usize,
}

/// Serialized form: covariance only, the Cholesky factor is recomputed on
/// load.
#[derive(Serialize, Deserialize)]
struct GaussianInputModelRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    dim: usize,
}

impl GaussianInputModel {
    /// Builds the model from explicit parameters; `covariance` must be
    /// symmetric and positive semidefinite up to the jitter policy of
    /// [`cholesky`].
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: covariance.nrows(),
            });
        }
        let chol = cholesky(&covariance)?;
        Ok(Self {
            mean,
            covariance,
            chol,
            dim,
        })
    }

    /// Maximum-likelihood fit to a sample.
    pub fn fit(sample: &InputSample) -> Result<Self> {
        let mean = estimate_mean(sample)?;
        let covariance = estimate_covariance(sample)?;
        Self::new(mean, covariance)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn to_json(&self) -> String {
        let repr = GaussianInputModelRepr {
            mean: self.mean.iter().copied().collect(),
            covariance: (0..self.dim)
                .map(|i| (0..self.dim).map(|j| self.covariance[(i, j)]).collect())
                .collect(),
            dim: self.dim,
        };
        serde_json::to_string_pretty(&repr).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: GaussianInputModelRepr =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if repr.mean.len() != repr.dim || repr.covariance.len() != repr.dim {
            return Err(Error::Parse("dim field disagrees with vector sizes".into()));
        }
        let mut cov = DMatrix::zeros(repr.dim, repr.dim);
        for (i, row) in repr.covariance.iter().enumerate() {
            if row.len() != repr.dim {
                return Err(Error::Parse("ragged covariance rows".into()));
            }
            for (j, v) in row.iter().enumerate() {
                cov[(i, j)] = *v;
            }
        }
        Self::new(DVector::from_vec(repr.mean), cov)
    }
}

/// Sample mean, component j equal to `(1/n) sum_k X_k^(j)`.
pub fn estimate_mean(sample: &InputSample) -> Result<DVector<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = sample.len() as f64;
    let mut mean = DVector::zeros(sample.dim());
    for row in sample.rows() {
        mean += row;
    }
    Ok(mean / n)
}

/// Maximum-likelihood covariance with `1/n` normalization.
pub fn estimate_covariance(sample: &InputSample) -> Result<DMatrix<f64>> {
    let mean = estimate_mean(sample)?;
    let n = sample.len() as f64;
    let d = sample.dim();
    let mut cov = DMatrix::zeros(d, d);
    for row in sample.rows() {
        let centered = row - &mean;
        // Accumulate the lower triangle, mirror afterwards.
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[(i, j)] /= n;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok(cov)
}

const SYMMETRY_RTOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor with `L L^T = sigma`.
///
/// Positive-semidefinite but singular inputs are handled in two stages:
/// pivots within a small relative band around zero produce a zero column
/// (exact for rank-deficient matrices such as the all-zero covariance of a
/// constant sample), and if a pivot is genuinely negative the factorization
/// restarts with jitter `1e-10 * trace/d` on the diagonal, escalating by
/// factors of 10 up to `1e-6 * trace/d` before giving up.
pub fn cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    if sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma.ncols(),
        });
    }
    let scale = sigma.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_RTOL * scale.max(1e-300) {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let trace: f64 = (0..d).map(|i| sigma[(i, i)]).sum();
    let base_jitter = trace / d as f64;
    // No jitter when the plain factorization succeeds, so well-conditioned
    // inputs reconstruct exactly.
    if let Some(l) = psd_factor(sigma, 0.0) {
        return Ok(l);
    }
    if base_jitter > 0.0 {
        for scale in [1e-10, 1e-9, 1e-8, 1e-7, 1e-6] {
            if let Some(l) = psd_factor(sigma, scale * base_jitter) {
                return Ok(l);
            }
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// One factorization attempt. Pivots in `[-tol, tol]` are treated as exact
/// zeros (zero column); pivots below `-tol` abort the attempt.
fn psd_factor(sigma: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let d = sigma.nrows();
    let trace: f64 = (0..d).map(|i| sigma[(i, i)]).sum();
    let tol = 1e-12 * (trace / d as f64).max(f64::MIN_POSITIVE);
    let mut l = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut pivot = sigma[(j, j)] + jitter;
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot < -tol {
            return None;
        }
        if pivot <= tol {
            // Null direction: the whole column is zero.
            continue;
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..d {
            let mut v = sigma[(i, j)] + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / diag;
        }
    }
    Some(l)
}

/// Draws `count` synthetic inputs `L z + mean` with independent standard
/// normal `z`. Deterministic given the generator state.
pub fn sample_gaussian<R: Rng>(
    model: &GaussianInputModel,
    count: usize,
    rng: &mut R,
) -> Result<InputSample> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let d = model.dim();
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        rows.push(model.chol() * z + model.mean());
    }
    InputSample::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn sample(rows: &[&[f64]]) -> InputSample {
        InputSample::from_vecs(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// First data row of the measurement table, scaled by 1e2.
    const K_ROT_Y: [f64; 10] = [
        131.0, 134.0, 131.0, 123.0, 114.0, 129.0, 135.0, 128.0, 104.0, 120.0,
    ];
    const K_ROT_Z: [f64; 10] = [
        131.0, 128.0, 143.0, 125.0, 130.0, 134.0, 122.0, 116.0, 118.0, 111.0,
    ];

    #[test]
    fn mean_of_constant_sample() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0; 5]).collect();
        let s = InputSample::from_vecs(rows).unwrap();
        let mean = estimate_mean(&s).unwrap();
        assert_eq!(mean.as_slice(), &[1.0; 5]);
    }

    #[test]
    fn mean_symmetry() {
        let s = sample(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let mean = estimate_mean(&s).unwrap();
        assert_eq!(mean.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn mean_measurement_first_component() {
        let rows: Vec<Vec<f64>> = K_ROT_Y.iter().map(|&v| vec![v]).collect();
        let s = InputSample::from_vecs(rows).unwrap();
        let mean = estimate_mean(&s).unwrap();
        // Published value 124.9572 was computed on unrounded measurements.
        assert!((mean[0] - 124.9572).abs() <= 0.5, "mean = {}", mean[0]);
    }

    #[test]
    fn empty_sample_errors() {
        assert!(matches!(
            InputSample::from_vecs(vec![]),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn covariance_of_constant_sample_is_zero() {
        let s = sample(&[&[3.0, -1.0], &[3.0, -1.0], &[3.0, -1.0]]);
        let cov = estimate_covariance(&s).unwrap();
        assert!(cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_uses_one_over_n() {
        let s = sample(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let cov = estimate_covariance(&s).unwrap();
        assert_eq!(cov[(0, 0)], 1.0);
        assert_eq!(cov[(0, 1)], 0.0);
        assert_eq!(cov[(1, 1)], 0.0);
    }

    #[test]
    fn covariance_measurement_second_row() {
        let rows: Vec<Vec<f64>> = K_ROT_Y
            .iter()
            .zip(K_ROT_Z.iter())
            .map(|(&a, &b)| vec![a, b])
            .collect();
        let s = InputSample::from_vecs(rows).unwrap();
        let cov = estimate_covariance(&s).unwrap();
        // Published 79.76893 from unrounded measurements; the table is
        // rounded to three significant digits.
        assert!((cov[(1, 1)] - 79.77).abs() <= 2.0, "cov22 = {}", cov[(1, 1)]);
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
        let l = cholesky(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(1, 1)], 3.0);
        assert_eq!(l[(1, 0)], 0.0);
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = RngStream::new(11).rng();
        for _ in 0..10 {
            let b = DMatrix::from_fn(5, 5, |_, _| {
                rand_distr::Distribution::sample(&StandardNormal, &mut rng)
            });
            let a = b.transpose() * &b + DMatrix::identity(5, 5);
            let l = cholesky(&a).unwrap();
            let err = (&l * l.transpose() - &a).norm() / a.norm();
            assert!(err <= 1e-10, "reconstruction error {err}");
        }
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(matches!(cholesky(&m), Err(Error::NotSymmetric)));
    }

    #[test]
    fn cholesky_rejects_negative_definite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(cholesky(&m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn cholesky_handles_singular_rank_deficient() {
        // Covariance of two points in R^3 has rank 1.
        let s = sample(&[&[0.0, 0.0, 0.0], &[2.0, 2.0, 2.0]]);
        let cov = estimate_covariance(&s).unwrap();
        let l = cholesky(&cov).unwrap();
        let err = (&l * l.transpose() - &cov).norm() / cov.norm();
        assert!(err <= 1e-8, "reconstruction error {err}");
        assert!((0..3).all(|i| l[(i, i)] >= 0.0));
    }

    #[test]
    fn sampling_degenerate_covariance_returns_mean() {
        let model =
            GaussianInputModel::new(DVector::from_vec(vec![1.5, -2.0]), DMatrix::zeros(2, 2))
                .unwrap();
        let mut rng = RngStream::new(3).rng();
        let s = sample_gaussian(&model, 3, &mut rng).unwrap();
        for row in s.rows() {
            assert_eq!(row.as_slice(), &[1.5, -2.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = GaussianInputModel::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let a = sample_gaussian(&model, 50, &mut RngStream::new(9).rng()).unwrap();
        let b = sample_gaussian(&model, 50, &mut RngStream::new(9).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_moments_converge() {
        let model = GaussianInputModel::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let n = 100_000;
        let s = sample_gaussian(&model, n, &mut RngStream::new(17).rng()).unwrap();
        let mean = estimate_mean(&s).unwrap();
        let cov = estimate_covariance(&s).unwrap();
        for j in 0..2 {
            assert!(mean[j].abs() < 0.02, "mean[{j}] = {}", mean[j]);
        }
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[(i, j)] - target).abs() < 0.03,
                    "cov[{i},{j}] = {}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn json_round_trip_recomputes_cholesky() {
        let s = sample(&[&[1.0, 2.0], &[3.0, 1.0], &[-1.0, 0.5], &[0.0, 4.0]]);
        let model = GaussianInputModel::fit(&s).unwrap();
        let text = model.to_json();
        let loaded = GaussianInputModel::from_json(&text).unwrap();
        assert_eq!(loaded.mean(), model.mean());
        assert_eq!(loaded.covariance(), model.covariance());
        assert_eq!(loaded.chol(), model.chol());
        assert!(text.contains("\"mean\""));
        assert!(!text.contains("chol"));
    }
}
