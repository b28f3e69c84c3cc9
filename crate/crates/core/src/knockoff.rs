//! Second-order Gaussian model-X knockoffs.
//!
//! For a completed matrix `W` with fitted mean `mu` and covariance `Sigma`,
//! knockoff rows are drawn from the Gaussian conditional
//!
//! ```text
//! W~_i ~ N( W_i - (W_i - mu) Sigma^-1 D,  2D - D Sigma^-1 D ),   D = diag(s)
//! ```
//!
//! which gives `Cov([W, W~]) = [[Sigma, Sigma - D], [Sigma - D, Sigma]]`.
//! `s` comes from the equicorrelated construction or its block-diagonal
//! refinement; both are feasible for the Schur-complement condition.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::impute::CompletedSet;
use crate::linalg::{correlation, mean_and_covariance, min_eigenvalue, psd_factor, standard_normal_matrix, PSD_TOL};
use crate::rng::{Role, Streams};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Lower Cholesky factor of `sigma`.
    pub chol: DMatrix<f64>,
    /// Shrinkage weight actually applied.
    pub shrink: f64,
}

impl GaussianModel {
    pub fn from_parts(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Matrix("covariance is not positive definite".into()))?
            .l();
        Ok(Self { mu, sigma, chol, shrink: 0.0 })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
}

/// Shrinkage intensity toward the diagonal of the sample covariance
/// (Ledoit-Wolf type estimate of the optimal weight).
pub fn diagonal_shrinkage_weight(x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    if n < 3 || p < 2 {
        return 1.0;
    }
    let (mean, cov) = mean_and_covariance(x);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let nf = n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..p {
        for j in (i + 1)..p {
            let ci = centered.column(i);
            let cj = centered.column(j);
            let wbar = ci.dot(&cj) / nf;
            let var: f64 = ci.iter().zip(cj.iter()).map(|(a, b)| (a * b - wbar).powi(2)).sum::<f64>();
            num += nf / (nf - 1.0).powi(3) * var;
            den += cov[(i, j)].powi(2);
        }
    }
    if den <= 0.0 {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Default shrinkage policy: 0.01 when n > 4p, otherwise the analytic weight.
pub fn default_shrink(x: &DMatrix<f64>) -> f64 {
    if x.nrows() > 4 * x.ncols() {
        0.01
    } else {
        diagonal_shrinkage_weight(x).max(0.01)
    }
}

fn shrunk(cov: &DMatrix<f64>, shrink: f64) -> DMatrix<f64> {
    let mut s = cov * (1.0 - shrink);
    for j in 0..cov.nrows() {
        s[(j, j)] = cov[(j, j)];
    }
    s
}

fn fit_from_moments(mu: DVector<f64>, mut cov: DMatrix<f64>, shrink: f64) -> Result<GaussianModel> {
    if !(0.0..=1.0).contains(&shrink) {
        return param(format!("shrinkage weight must lie in [0, 1], got {shrink}"));
    }
    let p = cov.nrows();
    let mean_var = cov.trace() / p as f64;
    let floor = if mean_var > 0.0 { 1e-6 * mean_var } else { 1e-6 };
    let mut constant = Vec::new();
    for j in 0..p {
        if cov[(j, j)] <= floor {
            constant.push(j);
            cov[(j, j)] = floor;
        }
    }
    let mut weight = shrink;
    if !constant.is_empty() {
        warn!("{} constant column(s) {:?}: covariance is rank deficient, raising shrinkage", constant.len(), constant);
        weight = weight.max(0.05);
    }
    loop {
        let sigma = shrunk(&cov, weight);
        if let Some(ch) = sigma.clone().cholesky() {
            return Ok(GaussianModel { mu, sigma, chol: ch.l(), shrink: weight });
        }
        if weight >= 1.0 {
            return Err(Error::Matrix("covariance is not positive definite even after full shrinkage".into()));
        }
        warn!("covariance not positive definite at shrinkage {weight}; raising it");
        weight = (weight * 2.0).clamp(0.01, 1.0);
    }
}

/// Column means and shrunk sample covariance of a completed matrix.
/// `shrink = None` applies [`default_shrink`].
pub fn fit_gaussian(w: &DMatrix<f64>, shrink: Option<f64>) -> Result<GaussianModel> {
    if w.nrows() < 2 {
        return param("need at least two rows to fit a Gaussian model");
    }
    let (mu, cov) = mean_and_covariance(w);
    fit_from_moments(mu, cov, shrink.unwrap_or_else(|| default_shrink(w)))
}

/// One model for all K completed matrices: pooled means and covariances.
pub fn fit_gaussian_pooled(copies: &[DMatrix<f64>], shrink: Option<f64>) -> Result<GaussianModel> {
    if copies.is_empty() {
        return param("no completed matrices to pool");
    }
    let k = copies.len() as f64;
    let mut mu = DVector::zeros(copies[0].ncols());
    let mut cov = DMatrix::zeros(copies[0].ncols(), copies[0].ncols());
    for c in copies {
        let (m, s) = mean_and_covariance(c);
        mu += m / k;
        cov += s / k;
    }
    fit_from_moments(mu, cov, shrink.unwrap_or_else(|| default_shrink(&copies[0])))
}

/// Equicorrelated `s`: on the correlation scale every coordinate gets
/// `min(2 lambda_min, 1)`, mapped back by the variances.
pub fn solve_s_equi(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (corr, sd) = correlation(sigma);
    let lambda_min = min_eigenvalue(&corr);
    if lambda_min <= 0.0 {
        return Err(Error::Matrix(format!(
            "covariance is not positive definite (minimum correlation eigenvalue {lambda_min:.3e})"
        )));
    }
    let s_corr = (2.0 * lambda_min).min(1.0);
    Ok(sd.map(|v| s_corr * v * v))
}

/// `2 diag(s) - diag(s) Sigma^-1 diag(s)`.
pub fn schur_matrix(sigma: &DMatrix<f64>, s: &DVector<f64>) -> Result<DMatrix<f64>> {
    let inv = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Matrix("covariance is not positive definite".into()))?
        .inverse();
    Ok(schur_from_inverse(&inv, s))
}

fn schur_from_inverse(inv: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let p = s.len();
    DMatrix::from_fn(p, p, |i, j| {
        let diag = if i == j { 2.0 * s[i] } else { 0.0 };
        diag - s[i] * inv[(i, j)] * s[j]
    })
}

/// Block-equicorrelated `s`: equicorrelated within contiguous blocks of the
/// correlation matrix, then scaled by the largest `gamma` in (0, 1] keeping
/// the full Schur matrix PSD (30 bisection steps).
pub fn solve_s_block(sigma: &DMatrix<f64>, block_size: usize) -> Result<(DVector<f64>, f64)> {
    if block_size == 0 {
        return param("block size must be positive");
    }
    let p = sigma.nrows();
    let (corr, sd) = correlation(sigma);
    let mut s_corr = DVector::zeros(p);
    let mut start = 0;
    while start < p {
        let len = block_size.min(p - start);
        let block = corr.view((start, start), (len, len)).into_owned();
        let lambda_min = min_eigenvalue(&block);
        if lambda_min <= 0.0 {
            return Err(Error::Matrix("covariance block is not positive definite".into()));
        }
        s_corr.rows_mut(start, len).fill((2.0 * lambda_min).min(1.0));
        start += len;
    }
    let inv = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Matrix("covariance is not positive definite".into()))?
        .inverse();
    let feasible = |g: f64| min_eigenvalue(&schur_from_inverse(&inv, &(&s_corr * g))) >= -PSD_TOL;
    let gamma = if feasible(1.0) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let s = DVector::from_fn(p, |j, _| gamma * s_corr[j] * sd[j] * sd[j]);
    Ok((s, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SMethod {
    #[default]
    Equi,
    Block { size: usize },
}

/// Everything needed to sample knockoffs for one completed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffPlan {
    pub model: GaussianModel,
    pub s: DVector<f64>,
    /// `Sigma^-1 diag(s)`.
    pub cond_mean_map: DMatrix<f64>,
    /// `L` with `L Lᵀ = 2 diag(s) - diag(s) Sigma^-1 diag(s)`.
    pub cond_cov_factor: DMatrix<f64>,
}

impl KnockoffPlan {
    pub fn new(model: GaussianModel, s: DVector<f64>) -> Result<Self> {
        if s.len() != model.p() {
            return param("s has the wrong length");
        }
        if s.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return param("s must be finite and nonnegative");
        }
        let inv = model.chol.clone().cholesky_inverse();
        let cond_mean_map = DMatrix::from_fn(model.p(), model.p(), |i, j| inv[(i, j)] * s[j]);
        let schur = schur_from_inverse(&inv, &s);
        let cond_cov_factor = psd_factor(&schur)
            .map_err(|e| Error::Matrix(format!("knockoff conditional covariance: {e}")))?;
        Ok(Self { model, s, cond_mean_map, cond_cov_factor })
    }

    pub fn build(model: GaussianModel, method: SMethod) -> Result<Self> {
        let s = match method {
            SMethod::Equi => solve_s_equi(&model.sigma)?,
            SMethod::Block { size } => solve_s_block(&model.sigma, size)?.0,
        };
        Self::new(model, s)
    }
}

trait CholeskyInverse {
    fn cholesky_inverse(self) -> DMatrix<f64>;
}

impl CholeskyInverse for DMatrix<f64> {
    /// Inverse of `L Lᵀ` given the lower factor `L`.
    fn cholesky_inverse(self) -> DMatrix<f64> {
        let p = self.nrows();
        let linv = self
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("Cholesky factor has a zero on its diagonal");
        linv.tr_mul(&linv)
    }
}

pub fn sample_knockoffs<R: Rng + ?Sized>(w: &DMatrix<f64>, plan: &KnockoffPlan, rng: &mut R) -> Result<DMatrix<f64>> {
    let (n, p) = w.shape();
    if p != plan.model.p() {
        return param(format!("plan is for {} columns, matrix has {p}", plan.model.p()));
    }
    let mut centered = w.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-plan.model.mu[j]);
    }
    let z = standard_normal_matrix(n, p, rng);
    Ok(w - centered * &plan.cond_mean_map + z * plan.cond_cov_factor.transpose())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnockoffConfig {
    /// `None` applies the default shrinkage policy.
    pub shrink: Option<f64>,
    pub s_method: SMethod,
    /// Fit one Gaussian model across all completed matrices.
    pub pool: bool,
}

impl Default for KnockoffConfig {
    fn default() -> Self {
        Self { shrink: None, s_method: SMethod::Equi, pool: false }
    }
}

/// Knockoff copies for every completed matrix; copy `k` draws from the
/// `k` child of `streams`.
pub fn knockoff_copies(set: &CompletedSet, cfg: &KnockoffConfig, streams: &Streams) -> Result<Vec<DMatrix<f64>>> {
    let pooled = if cfg.pool {
        Some(KnockoffPlan::build(fit_gaussian_pooled(&set.copies, cfg.shrink)?, cfg.s_method)?)
    } else {
        None
    };
    set.copies
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let plan = match &pooled {
                Some(p) => p.clone(),
                None => KnockoffPlan::build(fit_gaussian(w, cfg.shrink)?, cfg.s_method)?,
            };
            sample_knockoffs(w, &plan, &mut streams.child(k as u64).rng(Role::Knockoff))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{ar_cov, ArSpec};
    use crate::linalg::sample_mvn_rows;
    use crate::rng::Rng64;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng64 {
        Rng64::seed_from_u64(seed)
    }

    fn corr2(rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
    }

    #[test]
    fn fit_gaussian_recovers_identity() {
        let x = standard_normal_matrix(100_000, 5, &mut rng(1));
        let m = fit_gaussian(&x, Some(0.0)).unwrap();
        assert!((&m.sigma - DMatrix::identity(5, 5)).abs().max() < 0.03);
    }

    #[test]
    fn fit_gaussian_recovers_ar_correlation() {
        let sigma = ar_cov(ArSpec { sigma2: 1.0, rho: 0.5, p: 60 }).unwrap();
        let x = sample_mvn_rows(10_000, &sigma, &mut rng(2)).unwrap();
        let m = fit_gaussian(&x, None).unwrap();
        assert_eq!(m.shrink, 0.01);
        assert!((m.sigma[(0, 1)] - 0.5).abs() < 0.05);
    }

    #[test]
    fn full_shrinkage_is_diagonal() {
        let x = standard_normal_matrix(50, 4, &mut rng(3));
        let m = fit_gaussian(&x, Some(1.0)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(m.sigma[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_column_raises_shrinkage() {
        let mut x = standard_normal_matrix(40, 3, &mut rng(4));
        x.column_mut(1).fill(2.0);
        let m = fit_gaussian(&x, Some(0.0)).unwrap();
        assert!(m.shrink >= 0.05);
        assert!(fit_gaussian(&DMatrix::zeros(1, 3), None).is_err());
    }

    #[test]
    fn small_samples_use_analytic_weight() {
        let x = standard_normal_matrix(30, 20, &mut rng(5));
        let w = diagonal_shrinkage_weight(&x);
        assert!(w > 0.1 && w <= 1.0, "{w}");
        assert!(fit_gaussian(&x, None).unwrap().shrink >= 0.1);
    }

    #[test]
    fn equi_examples() {
        let s = solve_s_equi(&DMatrix::identity(4, 4)).unwrap();
        assert!(s.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        let s = solve_s_equi(&corr2(0.5)).unwrap();
        assert!(s.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        let s = solve_s_equi(&corr2(0.9)).unwrap();
        assert!(s.iter().all(|v| (*v - 0.2).abs() < 1e-12));
        // Scale back by variances.
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 0.9 * 2.0 * 3.0, 0.9 * 2.0 * 3.0, 9.0]);
        let s = solve_s_equi(&cov).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-12 && (s[1] - 1.8).abs() < 1e-12);
        assert!(solve_s_equi(&corr2(1.0)).is_err());
    }

    #[test]
    fn equi_satisfies_schur_condition() {
        let sigma = ar_cov(ArSpec { sigma2: 1.6, rho: 0.5, p: 30 }).unwrap();
        let s = solve_s_equi(&sigma).unwrap();
        assert!(min_eigenvalue(&schur_matrix(&sigma, &s).unwrap()) >= -PSD_TOL);
        for j in 0..30 {
            assert!(s[j] >= 0.0 && s[j] <= 2.0 * sigma[(j, j)]);
        }
    }

    #[test]
    fn block_matches_per_block_for_independent_blocks() {
        let mut sigma = DMatrix::zeros(4, 4);
        sigma.view_mut((0, 0), (2, 2)).copy_from(&corr2(0.9));
        sigma.view_mut((2, 2), (2, 2)).copy_from(&corr2(0.5));
        let (s, gamma) = solve_s_block(&sigma, 2).unwrap();
        assert_eq!(gamma, 1.0);
        assert!((s[0] - 0.2).abs() < 1e-12 && (s[1] - 0.2).abs() < 1e-12);
        assert!((s[2] - 1.0).abs() < 1e-12 && (s[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_dominates_equi_on_ar() {
        let sigma = ar_cov(ArSpec { sigma2: 1.0, rho: 0.5, p: 60 }).unwrap();
        let equi = solve_s_equi(&sigma).unwrap();
        let (block, _) = solve_s_block(&sigma, 10).unwrap();
        for j in 0..60 {
            assert!(block[j] >= equi[j] - 1e-6, "{} < {}", block[j], equi[j]);
        }
        let min = min_eigenvalue(&schur_matrix(&sigma, &block).unwrap());
        assert!((-1e-8..=1e-3).contains(&min), "{min}");
    }

    #[test]
    fn zero_s_copies_the_data() {
        let x = standard_normal_matrix(20, 3, &mut rng(6));
        let model = fit_gaussian(&x, None).unwrap();
        let plan = KnockoffPlan::new(model, DVector::zeros(3)).unwrap();
        let k = sample_knockoffs(&x, &plan, &mut rng(7)).unwrap();
        assert!((k - &x).abs().max() < 1e-12);
    }

    #[test]
    fn joint_covariance_has_knockoff_structure() {
        let p = 10;
        let sigma = ar_cov(ArSpec { sigma2: 1.0, rho: 0.5, p }).unwrap();
        let x = sample_mvn_rows(100_000, &sigma, &mut rng(8)).unwrap();
        let model = GaussianModel::from_parts(DVector::zeros(p), sigma.clone()).unwrap();
        let plan = KnockoffPlan::build(model, SMethod::Equi).unwrap();
        let k = sample_knockoffs(&x, &plan, &mut rng(9)).unwrap();
        let mut joint = DMatrix::zeros(x.nrows(), 2 * p);
        joint.columns_mut(0, p).copy_from(&x);
        joint.columns_mut(p, p).copy_from(&k);
        let (_, emp) = mean_and_covariance(&joint);
        let mut target = DMatrix::zeros(2 * p, 2 * p);
        let off = &sigma - DMatrix::from_diagonal(&plan.s);
        target.view_mut((0, 0), (p, p)).copy_from(&sigma);
        target.view_mut((p, p), (p, p)).copy_from(&sigma);
        target.view_mut((0, p), (p, p)).copy_from(&off);
        target.view_mut((p, 0), (p, p)).copy_from(&off);
        assert!((&emp - &target).abs().max() < 0.03);

        // Swapping column j with its knockoff leaves the joint covariance invariant.
        for j in [0, 4, 9] {
            let mut perm: Vec<usize> = (0..2 * p).collect();
            perm.swap(j, p + j);
            let swapped = DMatrix::from_fn(2 * p, 2 * p, |a, b| emp[(perm[a], perm[b])]);
            assert!((&swapped - &emp).norm() < 0.05);
        }
    }

    #[test]
    fn mean_shift_is_equivariant() {
        let p = 4;
        let sigma = ar_cov(ArSpec { sigma2: 1.0, rho: 0.3, p }).unwrap();
        let x = sample_mvn_rows(200, &sigma, &mut rng(10)).unwrap();
        let base = KnockoffPlan::build(GaussianModel::from_parts(DVector::zeros(p), sigma.clone()).unwrap(), SMethod::Equi)
            .unwrap();
        let shifted = KnockoffPlan::build(
            GaussianModel::from_parts(DVector::from_element(p, 5.0), sigma).unwrap(),
            SMethod::Equi,
        )
        .unwrap();
        let k0 = sample_knockoffs(&x, &base, &mut rng(11)).unwrap();
        let k5 = sample_knockoffs(&x.add_scalar(5.0), &shifted, &mut rng(11)).unwrap();
        assert!((k5 - k0.add_scalar(5.0)).abs().max() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = standard_normal_matrix(10, 3, &mut rng(12));
        let plan = KnockoffPlan::build(fit_gaussian(&x, None).unwrap(), SMethod::Equi).unwrap();
        assert!(sample_knockoffs(&DMatrix::zeros(10, 4), &plan, &mut rng(1)).is_err());
    }
}
