//! Penalized GLM lasso by cyclic coordinate descent.
//!
//! Columns are standardized internally (mean 0, `(1/n) Σ x² = 1`) and
//! coefficients are reported on the original scale. The objectives are
//!
//! ```text
//! Gaussian:  (1/2n) Σ (y_i - b0 - x_i β)²      + λ ||β||₁
//! Binomial:  -(1/n) Σ loglik(y_i; b0 + x_i β)  + λ ||β||₁
//! ```
//!
//! The binomial family runs an IRLS outer loop around the weighted
//! least-squares inner problem. Paths are warm started and use sequential
//! strong-rule screening with a KKT check on the discarded columns.
//!
//! A coordinate pass has converged when the largest weighted squared
//! coefficient change `v_j Δβ_j²` (with `v_j` the weighted column second
//! moment) falls below `CD_TOL` times the mean null deviance, the same
//! scale-free rule glmnet uses. IRLS stops on the same measure.

use nalgebra::{DMatrix, DVector};

use super::Family;
use crate::error::{param, Error, Result};
use crate::linalg::logistic;

/// Convergence threshold, relative to the mean null deviance.
pub const CD_TOL: f64 = 1e-7;
/// Cap on coordinate-descent passes per penalty value.
pub const MAX_PASSES: usize = 10_000;
const MAX_IRLS: usize = 100;
const MU_EPS: f64 = 1e-5;

/// A lasso solution on the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    pub beta: DVector<f64>,
    pub lambda: f64,
}

impl LassoFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.beta).add_scalar(self.intercept)
    }
}

/// Standardized copy of a design.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub x: DMatrix<f64>,
    pub center: DVector<f64>,
    /// Zero for constant columns, which are excluded from fitting.
    pub scale: DVector<f64>,
    /// Representative of each group of identical standardized columns.
    /// Only representatives are fitted; the coefficient is split evenly.
    pub alias: Vec<usize>,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut xs = x.clone();
        let mut center = DVector::zeros(x.ncols());
        let mut scale = DVector::zeros(x.ncols());
        for (j, mut col) in xs.column_iter_mut().enumerate() {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
            let sd = (col.norm_squared() / n).sqrt();
            center[j] = m;
            if sd > 1e-12 {
                col /= sd;
                scale[j] = sd;
            } else {
                col.fill(0.0);
            }
        }
        let alias = duplicate_groups(&xs, &scale);
        Self { x: xs, center, scale, alias }
    }

    fn fitted(&self, j: usize) -> bool {
        self.scale[j] > 0.0 && self.alias[j] == j
    }

    fn to_original(&self, b0: f64, beta_std: &[f64], lambda: f64) -> LassoFit {
        let mut size = vec![0usize; beta_std.len()];
        for &a in &self.alias {
            size[a] += 1;
        }
        let beta = DVector::from_fn(beta_std.len(), |j, _| {
            let r = self.alias[j];
            if self.scale[j] > 0.0 {
                beta_std[r] / size[r] as f64 / self.scale[j]
            } else {
                0.0
            }
        });
        let intercept = b0 - beta.dot(&self.center);
        LassoFit { intercept, beta, lambda }
    }
}

fn duplicate_groups(xs: &DMatrix<f64>, scale: &DVector<f64>) -> Vec<usize> {
    let p = xs.ncols();
    let mut alias: Vec<usize> = (0..p).collect();
    let key = |j: usize| -> f64 { xs.column(j).iter().enumerate().map(|(i, v)| v * (1.0 + (i % 17) as f64)).sum() };
    let mut order: Vec<(f64, usize)> = (0..p).filter(|&j| scale[j] > 0.0).map(|j| (key(j), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for a in 0..order.len() {
        let ja = order[a].1;
        if alias[ja] != ja {
            continue;
        }
        for &(kb, jb) in &order[a + 1..] {
            if (kb - order[a].0).abs() > 1e-9 * (1.0 + kb.abs()) {
                break;
            }
            if alias[jb] == jb && (xs.column(ja) - xs.column(jb)).amax() < 1e-12 {
                alias[jb] = ja.min(alias[jb]);
            }
        }
    }
    alias
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest penalty at which every coefficient is zero:
/// `max_j |x_jᵀ (y - ȳ)| / n` on the standardized scale.
pub fn lambda_max(std: &Standardized, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let ybar = y.mean();
    let r = y.add_scalar(-ybar);
    std.x.column_iter().map(|c| (c.dot(&r) / n).abs()).fold(0.0, f64::max)
}

/// `len` log-spaced values from `lmax` down to `ratio * lmax`.
pub fn lambda_grid(lmax: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lmax];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| lmax * (step * k as f64).exp()).collect()
}

pub fn deviance(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    match family {
        Family::Gaussian => y.iter().zip(eta.iter()).map(|(a, b)| (a - b).powi(2)).sum(),
        Family::Binomial => y
            .iter()
            .zip(eta.iter())
            .map(|(&yi, &e)| {
                let mu = logistic(e).clamp(1e-15, 1.0 - 1e-15);
                -2.0 * (yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln())
            })
            .sum(),
    }
}

struct Solver<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    family: Family,
    n: f64,
    beta: Vec<f64>,
    b0: f64,
    usable: Vec<bool>,
    tol: f64,
}

impl<'a> Solver<'a> {
    fn new(std: &'a Standardized, y: &'a DVector<f64>, family: Family) -> Self {
        let b0 = match family {
            Family::Gaussian => y.mean(),
            Family::Binomial => {
                let m = y.mean().clamp(1e-6, 1.0 - 1e-6);
                (m / (1.0 - m)).ln()
            }
        };
        let null_eta = DVector::from_element(y.len(), b0);
        let tol = CD_TOL * (deviance(family, y, &null_eta) / y.len() as f64).max(f64::MIN_POSITIVE);
        Self {
            x: &std.x,
            y,
            family,
            n: y.len() as f64,
            beta: vec![0.0; std.x.ncols()],
            b0,
            usable: (0..std.x.ncols()).map(|j| std.fitted(j)).collect(),
            tol,
        }
    }

    fn eta(&self) -> DVector<f64> {
        let mut eta = DVector::from_element(self.y.len(), self.b0);
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                eta.axpy(b, &self.x.column(j), 1.0);
            }
        }
        eta
    }

    /// Weighted CD over the candidate set. `r` must hold `z - b0 - Xβ` on
    /// entry for working response `z`. Returns the passes used and the
    /// weighted second moments `v` of the candidates.
    fn cd(&mut self, w: &DVector<f64>, r: DVector<f64>, lambda: f64, cand: &[usize], budget: usize) -> Result<(usize, Vec<f64>)> {
        let n = self.n;
        let wsum = w.sum();
        let unit = self.family == Family::Gaussian;
        // Weighted residual and weighted candidate columns; the plain residual
        // is never needed.
        let mut rw = if unit { r } else { r.component_mul(w) };
        let wx: Vec<DVector<f64>> = if unit {
            Vec::new()
        } else {
            cand.iter().map(|&j| self.x.column(j).component_mul(w)).collect()
        };
        let v: Vec<f64> = cand
            .iter()
            .enumerate()
            .map(|(k, &j)| if unit { 1.0 } else { self.x.column(j).dot(&wx[k]) / n })
            .collect();
        let mut passes = 0;
        let mut active_only = false;
        loop {
            let mut max_change: f64 = 0.0;
            for (k, &j) in cand.iter().enumerate() {
                if active_only && self.beta[j] == 0.0 {
                    continue;
                }
                let col = self.x.column(j);
                let grad = col.dot(&rw) / n;
                let old = self.beta[j];
                let new = soft_threshold(grad + v[k] * old, lambda * (1.0 + 1e-12)) / v[k];
                if new != old {
                    let delta = new - old;
                    if unit {
                        rw.axpy(-delta, &col, 1.0);
                    } else {
                        rw.axpy(-delta, &wx[k], 1.0);
                    }
                    self.beta[j] = new;
                    max_change = max_change.max(v[k] * delta * delta);
                }
            }
            let shift = rw.sum() / wsum;
            if shift != 0.0 {
                self.b0 += shift;
                rw.axpy(-shift, w, 1.0);
                max_change = max_change.max(wsum / n * shift * shift);
            }
            passes += 1;
            if passes >= budget {
                return Err(Error::NonConvergence {
                    solver: "lasso coordinate descent",
                    iterations: passes,
                    last_iterate: self.beta.clone(),
                });
            }
            if max_change < self.tol {
                if active_only {
                    active_only = false;
                } else {
                    return Ok((passes, v));
                }
            } else if !active_only {
                active_only = true;
            }
        }
    }

    fn solve_restricted(&mut self, lambda: f64, cand: &[usize]) -> Result<()> {
        let mut budget = MAX_PASSES;
        match self.family {
            Family::Gaussian => {
                let w = DVector::from_element(self.y.len(), 1.0);
                self.cd(&w, self.y - self.eta(), lambda, cand, budget)?;
            }
            Family::Binomial => {
                for _ in 0..MAX_IRLS {
                    let eta = self.eta();
                    let mu = eta.map(|e| logistic(e).clamp(MU_EPS, 1.0 - MU_EPS));
                    let w = mu.map(|m| m * (1.0 - m));
                    let r = DVector::from_fn(self.y.len(), |i, _| (self.y[i] - mu[i]) / w[i]);
                    let before = self.beta.clone();
                    let b0_before = self.b0;
                    let (used, v) = self.cd(&w, r, lambda, cand, budget)?;
                    budget = budget.saturating_sub(used).max(1);
                    let wmean = w.sum() / self.n;
                    let change = cand.iter().zip(&v).fold(wmean * (b0_before - self.b0).powi(2), |acc, (&j, &vj)| {
                        acc.max(vj * (self.beta[j] - before[j]).powi(2))
                    });
                    if change < self.tol {
                        return Ok(());
                    }
                }
                return Err(Error::NonConvergence {
                    solver: "lasso IRLS",
                    iterations: MAX_IRLS,
                    last_iterate: self.beta.clone(),
                });
            }
        }
        Ok(())
    }

    /// `x_jᵀ (y - μ) / n` for every column.
    fn gradient(&self) -> DVector<f64> {
        let eta = self.eta();
        let resid = match self.family {
            Family::Gaussian => self.y - eta,
            Family::Binomial => DVector::from_fn(self.y.len(), |i, _| self.y[i] - logistic(eta[i])),
        };
        self.x.tr_mul(&resid) / self.n
    }

    /// Solve at `lambda` with screening against `prev_lambda`. `grad` is the
    /// gradient at the current coefficients, if known; the gradient at the
    /// solution is returned for the next warm start.
    fn solve(&mut self, lambda: f64, prev_lambda: f64, grad: Option<DVector<f64>>) -> Result<DVector<f64>> {
        let grad = grad.unwrap_or_else(|| self.gradient());
        let cutoff = 2.0 * lambda - prev_lambda;
        let mut in_set = vec![false; self.beta.len()];
        for j in 0..self.beta.len() {
            in_set[j] = self.usable[j] && (self.beta[j] != 0.0 || grad[j].abs() >= cutoff);
        }
        loop {
            let cand: Vec<usize> = (0..in_set.len()).filter(|&j| in_set[j]).collect();
            self.solve_restricted(lambda, &cand)?;
            let grad = self.gradient();
            let mut violated = false;
            for j in 0..in_set.len() {
                if self.usable[j] && !in_set[j] && grad[j].abs() > lambda * (1.0 + 1e-9) {
                    in_set[j] = true;
                    violated = true;
                }
            }
            if !violated {
                return Ok(grad);
            }
        }
    }
}

/// Fit at a single penalty on the standardized scale.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, family: Family, lambda: f64) -> Result<LassoFit> {
    if lambda < 0.0 || !lambda.is_finite() {
        return param(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    check_dims(x, y, family)?;
    let std = Standardized::new(x);
    let mut s = Solver::new(&std, y, family);
    let lmax = lambda_max(&std, y);
    s.solve(lambda, lmax.max(lambda), None)?;
    Ok(std.to_original(s.b0, &s.beta, lambda))
}

fn check_dims(x: &DMatrix<f64>, y: &DVector<f64>, family: Family) -> Result<()> {
    if x.nrows() != y.len() {
        return param("design and outcome lengths differ");
    }
    if family == Family::Binomial && y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return param("binomial outcome must be 0/1");
    }
    Ok(())
}

/// Solutions along a decreasing penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<LassoFit>,
    /// Grid points actually solved; later entries repeat the last solution.
    pub solved: usize,
}

/// Warm-started path. Stops early (repeating the last solution) once the
/// fraction of null deviance explained exceeds 0.999, improves by less than
/// 1e-5 between steps, or the active set saturates.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, family: Family, lambdas: &[f64]) -> Result<LassoPath> {
    check_dims(x, y, family)?;
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return param("lambda grid must be decreasing");
    }
    let std = Standardized::new(x);
    path_standardized(&std, y, family, lambdas)
}

fn path_standardized(std: &Standardized, y: &DVector<f64>, family: Family, lambdas: &[f64]) -> Result<LassoPath> {
    let mut s = Solver::new(std, y, family);
    let null_dev = deviance(family, y, &s.eta()).max(1e-300);
    let max_active = (y.len().saturating_sub(1)).min(std.x.ncols());
    let mut fits = Vec::with_capacity(lambdas.len());
    let mut prev = lambdas.first().copied().unwrap_or(0.0).max(lambda_max(std, y));
    let mut prev_dev = null_dev;
    let mut solved = 0;
    let mut grad = None;
    for (k, &lambda) in lambdas.iter().enumerate() {
        grad = Some(s.solve(lambda, prev, grad)?);
        prev = lambda;
        fits.push(std.to_original(s.b0, &s.beta, lambda));
        solved += 1;
        let dev = deviance(family, y, &s.eta());
        let active = s.beta.iter().filter(|b| **b != 0.0).count();
        let explained = 1.0 - dev / null_dev;
        let stalled = k >= 5 && (prev_dev - dev) / null_dev < 1e-5;
        prev_dev = dev;
        if explained > 0.999 || stalled || active >= max_active {
            break;
        }
    }
    let last = fits.last().cloned();
    if let Some(last) = last {
        for &lambda in &lambdas[fits.len()..] {
            fits.push(LassoFit { lambda, ..last.clone() });
        }
    }
    Ok(LassoPath { lambdas: lambdas.to_vec(), fits, solved })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPolicy {
    pub len: usize,
    pub min_ratio: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { len: 100, min_ratio: 1e-3 }
    }
}

/// Cross-validated lasso: full-data path, per-fold paths on the same grid,
/// mean held-out deviance and the minimizing grid index.
#[derive(Debug, Clone)]
pub struct LassoCv {
    pub lambdas: Vec<f64>,
    pub cv_deviance: Vec<f64>,
    pub best: usize,
    pub full: LassoPath,
    pub folds: Vec<LassoPath>,
}

impl LassoCv {
    pub fn best_fit(&self) -> &LassoFit {
        &self.full.fits[self.best]
    }

    pub fn lambda(&self) -> f64 {
        self.lambdas[self.best]
    }
}

/// `fold_of[i]` is the fold of row `i` in `0..nfolds`.
pub fn lasso_cv(x: &DMatrix<f64>, y: &DVector<f64>, family: Family, fold_of: &[usize], nfolds: usize, grid: GridPolicy) -> Result<LassoCv> {
    check_dims(x, y, family)?;
    if fold_of.len() != y.len() || nfolds < 2 {
        return param("cross-validation needs a fold label per row and at least two folds");
    }
    let std = Standardized::new(x);
    let lambdas = lambda_grid(lambda_max(&std, y).max(1e-12), grid.len, grid.min_ratio);
    let full = path_standardized(&std, y, family, &lambdas)?;
    let mut folds = Vec::with_capacity(nfolds);
    let mut total = vec![0.0; lambdas.len()];
    for f in 0..nfolds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let xt = x.select_rows(&train);
        let yt = y.select_rows(&train);
        let path = path_standardized(&Standardized::new(&xt), &yt, family, &lambdas)?;
        let xv = x.select_rows(&test);
        let yv = y.select_rows(&test);
        for (k, fit) in path.fits.iter().enumerate() {
            total[k] += deviance(family, &yv, &fit.linear_predictor(&xv));
        }
        folds.push(path);
    }
    let cv_deviance: Vec<f64> = total.iter().map(|t| t / y.len() as f64).collect();
    let best = argmin_first(&cv_deviance);
    Ok(LassoCv { lambdas, cv_deviance, best, full, folds })
}

pub(crate) fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &d) in v.iter().enumerate() {
        if d < v[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_normal_matrix;
    use crate::rng::Rng64;
    use rand::SeedableRng;

    /// Centered design with `XᵀX / n = I`.
    fn orthonormal(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = Rng64::seed_from_u64(seed);
        let mut z = standard_normal_matrix(n, p, &mut rng);
        for mut c in z.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let q = z.qr().q();
        q * (n as f64).sqrt()
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        let n = 200;
        let x = orthonormal(n, 6, 1);
        let mut rng = Rng64::seed_from_u64(2);
        let y = &x * DVector::from_vec(vec![1.0, -0.5, 0.2, 0.0, 0.05, -1.5]) + standard_normal_matrix(n, 1, &mut rng).column(0) * 0.3;
        for lambda in [0.0, 0.1, 0.3, 0.7] {
            let fit = lasso_fit(&x, &y, Family::Gaussian, lambda).unwrap();
            for j in 0..6 {
                let oracle = soft_threshold(x.column(j).dot(&y) / n as f64, lambda);
                assert!((fit.beta[j] - oracle).abs() < 1e-6, "lambda {lambda} j {j}: {} vs {oracle}", fit.beta[j]);
            }
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let mut rng = Rng64::seed_from_u64(3);
        let x = standard_normal_matrix(80, 5, &mut rng);
        let y = DVector::from_fn(80, |i, _| x[(i, 0)] + 0.1 * i as f64);
        let std = Standardized::new(&x);
        let lmax = lambda_max(&std, &y);
        let fit = lasso_fit(&x, &y, Family::Gaussian, lmax).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        let yb = y.map(|v| if v > 3.0 { 1.0 } else { 0.0 });
        let lmaxb = lambda_max(&std, &yb);
        let fit = lasso_fit(&x, &yb, Family::Binomial, lmaxb).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!((logistic(fit.intercept) - yb.mean()).abs() < 1e-6);
    }

    #[test]
    fn zero_penalty_matches_least_squares() {
        let n = 100;
        let mut rng = Rng64::seed_from_u64(4);
        let x = standard_normal_matrix(n, 8, &mut rng);
        let y = DVector::from_fn(n, |i, _| 2.0 + x[(i, 0)] - 3.0 * x[(i, 5)]) + standard_normal_matrix(n, 1, &mut rng).column(0);
        let fit = lasso_fit(&x, &y, Family::Gaussian, 0.0).unwrap();
        let mut d = DMatrix::from_element(n, 9, 1.0);
        d.columns_mut(1, 8).copy_from(&x);
        let ols = (d.transpose() * &d).cholesky().unwrap().solve(&(d.transpose() * &y));
        assert!((fit.intercept - ols[0]).abs() < 1e-5);
        for j in 0..8 {
            assert!((fit.beta[j] - ols[j + 1]).abs() < 1e-5);
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let n = 150;
        let mut rng = Rng64::seed_from_u64(5);
        let x = standard_normal_matrix(n, 20, &mut rng);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] - x[(i, 3)] + 0.5 * x[(i, 7)]) + standard_normal_matrix(n, 1, &mut rng).column(0);
        let lambda = 0.1;
        let fit = lasso_fit(&x, &y, Family::Gaussian, lambda).unwrap();
        let std = Standardized::new(&x);
        let r = &y - fit.linear_predictor(&x);
        for j in 0..20 {
            let g = std.x.column(j).dot(&r) / n as f64;
            let b_std = fit.beta[j] * std.scale[j];
            if b_std == 0.0 {
                assert!(g.abs() <= lambda + 1e-5);
            } else {
                assert!((g - lambda * b_std.signum()).abs() <= 1e-5, "j {j}: {g}");
            }
        }
    }

    #[test]
    fn duplicated_columns_get_equal_weight() {
        let n = 120;
        let mut rng = Rng64::seed_from_u64(6);
        let base = standard_normal_matrix(n, 3, &mut rng);
        let mut x = DMatrix::zeros(n, 4);
        x.columns_mut(0, 3).copy_from(&base);
        x.column_mut(3).copy_from(&base.column(0));
        let y = DVector::from_fn(n, |i, _| 2.0 * base[(i, 0)] + base[(i, 1)]);
        let lambda = 0.5 * lambda_max(&Standardized::new(&x), &y);
        let fit = lasso_fit(&x, &y, Family::Gaussian, lambda).unwrap();
        assert!(fit.beta[0] > 0.0);
        assert!((fit.beta[0] - fit.beta[3]).abs() < 1e-6);
        let single = lasso_fit(&base, &y, Family::Gaussian, lambda).unwrap();
        assert!((fit.beta[0] + fit.beta[3] - single.beta[0]).abs() < 1e-6);
    }

    #[test]
    fn path_is_monotone_in_support_size_at_start() {
        let n = 200;
        let mut rng = Rng64::seed_from_u64(7);
        let x = standard_normal_matrix(n, 10, &mut rng);
        let eta = DVector::from_fn(n, |i, _| -0.5 + 1.5 * x[(i, 0)] - x[(i, 1)]);
        let y = eta.map(|e| if logistic(e) > 0.5 { 1.0 } else { 0.0 });
        let y = DVector::from_fn(n, |i, _| if i % 7 == 0 { 1.0 - y[i] } else { y[i] });
        let std = Standardized::new(&x);
        let grid = lambda_grid(lambda_max(&std, &y), 30, 0.01);
        let path = lasso_path(&x, &y, Family::Binomial, &grid).unwrap();
        assert!(path.fits[0].beta.iter().all(|b| *b == 0.0));
        let last = &path.fits[29];
        assert!(last.beta[0] > 0.0 && last.beta[1] < 0.0);
    }

    #[test]
    fn cv_picks_a_sensible_penalty() {
        let n = 300;
        let mut rng = Rng64::seed_from_u64(8);
        let x = standard_normal_matrix(n, 15, &mut rng);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0) + standard_normal_matrix(n, 1, &mut rng).column(0);
        let folds: Vec<usize> = (0..n).map(|i| i % 5).collect();
        let cv = lasso_cv(&x, &y, Family::Gaussian, &folds, 5, GridPolicy::default()).unwrap();
        assert!(cv.best > 0 && cv.best < 99);
        let fit = cv.best_fit();
        assert!((fit.beta[0] - 2.0).abs() < 0.3);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let x = DMatrix::zeros(3, 2);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        assert!(lasso_fit(&x, &y, Family::Gaussian, -1.0).is_err());
        assert!(lasso_fit(&x, &y, Family::Binomial, 0.1).is_err());
        assert!(lasso_path(&x, &y, Family::Gaussian, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(2.0, 100, 1e-3);
        assert_eq!(g.len(), 100);
        assert!((g[0] - 2.0).abs() < 1e-15);
        assert!((g[99] - 2e-3).abs() < 1e-12);
    }
}
