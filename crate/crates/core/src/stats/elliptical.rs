//! Elliptical reward references, Gaussian sampling and moment estimation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative eigenvalue floor for covariance repair.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-8;

/// Density generator of an elliptical family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// `k = 1/sqrt(2 pi)`, `g(x) = exp(-x)`.
    #[default]
    Gaussian,
}

/// Reference reward distribution with mean `mu`, shape `sigma` and a cached
/// spectral decomposition `sigma = V diag(lambda) V^T`.
#[derive(Debug, Clone)]
pub struct EllipticalRef {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    generator: Generator,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

fn check_shapes(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    let n = mean.len();
    if n == 0 {
        return Err(Error::invalid("reward dimension must be positive"));
    }
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::invalid(format!(
            "covariance is {}x{}, mean has length {n}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("reward moments contain non-finite entries"));
    }
    let scale = cov.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::invalid(format!("covariance not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

impl EllipticalRef {
    /// Gaussian reference; `cov` must be symmetric positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_shapes(&mean, &cov)?;
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(&cov)?;
        if eigenvalues[0] <= 0.0 {
            return Err(Error::invalid(format!(
                "covariance is not positive definite (smallest eigenvalue {:e})",
                eigenvalues[0]
            )));
        }
        Ok(Self {
            mean,
            cov,
            generator: Generator::Gaussian,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Gaussian reference whose covariance eigenvalues are raised to at least
    /// `rel_floor * lambda_max`.
    ///
    /// A zero matrix is floored at `rel_floor` in absolute terms. Fails when
    /// the result would still not be positive definite (`rel_floor == 0` and a
    /// singular input).
    pub fn with_floor(mean: DVector<f64>, cov: DMatrix<f64>, rel_floor: f64) -> Result<Self> {
        check_shapes(&mean, &cov)?;
        if !(rel_floor >= 0.0) {
            return Err(Error::invalid(format!("eigenvalue floor must be >= 0, got {rel_floor}")));
        }
        let (mut eigenvalues, eigenvectors) = linalg::symmetric_eigen(&cov)?;
        let top = eigenvalues[eigenvalues.len() - 1];
        let floor = if top > 0.0 { rel_floor * top } else { rel_floor };
        if floor <= 0.0 && eigenvalues[0] <= 0.0 {
            return Err(Error::invalid(
                "covariance is singular and no eigenvalue floor was requested",
            ));
        }
        let mut clamped = false;
        for w in eigenvalues.iter_mut() {
            if *w < floor {
                *w = floor;
                clamped = true;
            }
        }
        let cov = if clamped {
            linalg::recompose(&eigenvalues, &eigenvectors)
        } else {
            cov
        };
        Ok(Self {
            mean,
            cov,
            generator: Generator::Gaussian,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    /// Eigenvalues of the shape matrix, ascending and positive.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Coordinates of `x` in the eigenbasis, `V^T x`.
    pub fn to_eigenbasis(&self, x: &DVector<f64>) -> DVector<f64> {
        linalg::tr_mul_vec(&self.eigenvectors, x)
    }

    /// Inverse of [`to_eigenbasis`](Self::to_eigenbasis), `V b`.
    pub fn from_eigenbasis(&self, b: &DVector<f64>) -> DVector<f64> {
        linalg::mul_vec(&self.eigenvectors, b)
    }

    /// `sigma x`.
    pub fn cov_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.cov * x
    }

    /// `||sigma^{1/2} x||_2 = sqrt(x^T sigma x)`.
    pub fn sigma_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.cov_apply(x)).max(0.0).sqrt()
    }

    /// Symmetric square root factor `V diag(sqrt(lambda)) V^T`.
    pub fn sqrt_factor(&self) -> DMatrix<f64> {
        linalg::recompose(&self.eigenvalues.map(f64::sqrt), &self.eigenvectors)
    }

    /// Reconstruction error `||V diag(lambda) V^T - sigma||_F / ||sigma||_F`.
    pub fn reconstruction_error(&self) -> f64 {
        let back = linalg::recompose(&self.eigenvalues, &self.eigenvectors);
        (back - &self.cov).norm() / self.cov.norm()
    }
}

/// Reward samples, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix(DMatrix<f64>);

impl SampleMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::invalid("sample matrix must be non-empty"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples contain non-finite entries"));
        }
        Ok(Self(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("sample rows have unequal lengths"));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    /// Samples stored column-wise (one column per draw).
    pub fn from_columns(cols: DMatrix<f64>) -> Result<Self> {
        Self::new(cols.transpose())
    }

    pub fn num_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Per-sample returns `r_i^T x`.
    pub fn returns(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    pub fn mean(&self) -> DVector<f64> {
        self.0.row_mean().transpose()
    }

    /// Rows `[0, k)` and `[k, n)`.
    pub fn split_at(&self, k: usize) -> Result<(SampleMatrix, SampleMatrix)> {
        let n = self.num_samples();
        if k == 0 || k >= n {
            return Err(Error::invalid(format!("cannot split {n} samples at {k}")));
        }
        Ok((
            SampleMatrix(self.0.rows(0, k).into_owned()),
            SampleMatrix(self.0.rows(k, n - k).into_owned()),
        ))
    }
}

/// `n` Gaussian draws `mu + sigma^{1/2} z` from a ChaCha8 stream seeded with `seed`.
pub fn sample_mvn(reference: &EllipticalRef, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let d = reference.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    // sqrt factor is symmetric, so rows of z * S are S z_i
    let mut rows = z * reference.sqrt_factor();
    for mut row in rows.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(reference.mean().iter()) {
            *v += m;
        }
    }
    SampleMatrix::new(rows)
}

/// Sample mean and unbiased covariance, repaired with a relative eigenvalue floor.
pub fn estimate_moments(samples: &SampleMatrix, eig_floor: f64) -> Result<EllipticalRef> {
    let n = samples.num_samples();
    if n < 2 {
        return Err(Error::invalid("moment estimation needs at least two samples"));
    }
    let mean = samples.mean();
    let mut centered = samples.matrix().clone();
    for mut row in centered.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(mean.iter()) {
            *v -= m;
        }
    }
    let cov = linalg::gram(&centered) / (n as f64 - 1.0);
    EllipticalRef::with_floor(mean, cov, eig_floor)
}

/// Empirical lower-tail VaR and CVaR at level `eps`.
///
/// VaR is the `ceil(eps n)`-th smallest value. CVaR is the exact maximum of
/// `y - (1/(eps n)) sum (y - v_i)^+`, attained at `y = VaR`.
pub fn empirical_var_cvar(values: &[f64], eps: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("VaR of an empty sample"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("risk level must lie in (0, 1), got {eps}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((eps * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let var = sorted[k - 1];
    let shortfall: f64 = sorted[..k].iter().map(|v| var - v).sum();
    Ok((var, var - shortfall / (eps * n as f64)))
}
