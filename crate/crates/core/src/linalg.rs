//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Eigenvalue tolerance used for every PSD check in the crate.
pub const PSD_TOL: f64 = 1e-8;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Column means and the unbiased (n - 1) sample covariance.
pub fn mean_and_covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.tr_mul(&centered) / denom;
    (mean, symmetrize(cov))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Split a covariance into its correlation matrix and standard deviations.
/// Zero-variance coordinates keep a unit diagonal and zero off-diagonals.
pub fn correlation(sigma: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let p = sigma.nrows();
    let sd = DVector::from_iterator(p, (0..p).map(|i| sigma[(i, i)].max(0.0).sqrt()));
    let corr = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            sigma[(i, j)] / (sd[i] * sd[j])
        } else {
            0.0
        }
    });
    (corr, sd)
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// A square-root factor `L` with `L Lᵀ = sym`. Uses Cholesky when it
/// succeeds and a clipped eigendecomposition for singular PSD input.
pub fn psd_factor(sym: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let scale = sym.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL * scale {
        return Err(Error::Matrix(format!(
            "matrix is not positive semidefinite (minimum eigenvalue {min:.3e})"
        )));
    }
    let mut factor = eig.eigenvectors;
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    Ok(factor)
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Row-major draw order so that the i-th row depends only on the first i rows of draws.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Rows drawn i.i.d. from N(0, sigma).
pub fn sample_mvn_rows<R: Rng + ?Sized>(
    n: usize,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let factor = psd_factor(sigma)?;
    let z = standard_normal_matrix(n, sigma.nrows(), rng);
    Ok(z * factor.transpose())
}

/// Sample quantile, linear interpolation between order statistics
/// (the usual "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Solve a symmetric positive (semi)definite system with a small ridge
/// fallback when the plain Cholesky fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let p = a.nrows();
    let scale = (a.trace() / p.max(1) as f64).abs().max(1e-12);
    let mut ridge = 1e-10 * scale;
    for _ in 0..12 {
        let shifted = a + DMatrix::identity(p, p) * ridge;
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(b));
        }
        ridge *= 10.0;
    }
    None
}
