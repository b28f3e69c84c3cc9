//! Feature statistics on the augmented design `[W, W~]`.
//!
//! Every statistic produces a [`StatPair`]: a nonnegative score `Z_j` for each
//! original column and `Z~_j` for its knockoff. Solvers see the `2p` columns
//! in a seeded random order so that nothing depends on originals coming
//! first; the permutation is undone before reporting.
//!
//! | statistic | score |
//! |---|---|
//! | `LassoCoef` | `|β_j|` at the cross-validated penalty |
//! | `LassoOrder` | largest penalty at which column `j` is active |
//! | `RandomForest` | mean decrease in impurity |
//! | `Gds` | `|β_j|` of the (linearized) Dantzig selector |
//! | `Gmus` | `|β_j|` of the matrix-uncertainty selector |
//! | `CorrectedLasso` | `|β_j|` of the error-corrected ℓ1-constrained fit |
//!
//! The last three work on centered but unscaled columns so that the error
//! covariance stays in the units of the data. For a binary outcome they use
//! one working-response linearization around the cross-validated lasso fit,
//! and the measurement-error terms are scaled by the mean working weight.
//! By default the corrected-lasso radius is cross-validated under squared
//! error even for a binary outcome (see [`RadiusTuning`]).

pub mod corrected;
pub mod dantzig;
pub mod forest;
pub mod lasso;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{logistic, min_eigenvalue, PSD_TOL};
use crate::rng::{Role, Streams};

use corrected::{minimize_l1_ball, Quadratic};
use dantzig::{mu_selector, DantzigPath};
use lasso::{argmin_first, deviance, lambda_grid, lasso_cv, GridPolicy, LassoCv, LassoFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    LassoCoef,
    LassoOrder,
    #[serde(rename = "rf")]
    RandomForest,
    Gds,
    Gmus,
    CorrectedLasso,
}

impl StatKind {
    pub const ALL: [StatKind; 6] = [
        StatKind::LassoCoef,
        StatKind::LassoOrder,
        StatKind::RandomForest,
        StatKind::Gds,
        StatKind::Gmus,
        StatKind::CorrectedLasso,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::LassoCoef => "lasso_coef",
            StatKind::LassoOrder => "lasso_order",
            StatKind::RandomForest => "rf",
            StatKind::Gds => "gds",
            StatKind::Gmus => "gmus",
            StatKind::CorrectedLasso => "corrected_lasso",
        }
    }

    /// Whether the statistic needs a measurement-error covariance.
    pub fn needs_error_cov(self) -> bool {
        matches!(self, StatKind::Gmus | StatKind::CorrectedLasso)
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "lasso" | "lasso_coef" => StatKind::LassoCoef,
            "lasso_order" | "order" => StatKind::LassoOrder,
            "rf" | "random_forest" | "forest" => StatKind::RandomForest,
            "gds" | "dantzig" => StatKind::Gds,
            "gmus" => StatKind::Gmus,
            "corrected_lasso" | "cl" | "corrected" => StatKind::CorrectedLasso,
            _ => return param(format!("unknown statistic '{s}'")),
        })
    }
}

/// Tuning values actually used, kept with each statistic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point_iterations: Option<usize>,
    pub interleave_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatPair {
    pub z: DVector<f64>,
    pub z_tilde: DVector<f64>,
    pub statistic: StatKind,
    pub tuning: Tuning,
}

impl StatPair {
    pub fn p(&self) -> usize {
        self.z.len()
    }

    /// Entries are finite and nonnegative.
    pub fn is_valid(&self) -> bool {
        self.z.iter().chain(self.z_tilde.iter()).all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Measurement-error covariance of the original features.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCov {
    sigma: DMatrix<f64>,
}

impl ErrorCov {
    /// Accepts a symmetric positive semidefinite matrix.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return param("error covariance must be square");
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return param("error covariance has non-finite entries");
        }
        let scale = sigma.amax().max(1.0);
        if (&sigma - sigma.transpose()).amax() > 1e-9 * scale {
            return param("error covariance is not symmetric");
        }
        if sigma.nrows() > 0 && min_eigenvalue(&sigma) < -PSD_TOL * scale {
            return param("error covariance is not positive semidefinite; repair it first");
        }
        Ok(Self { sigma })
    }

    pub fn zeros(p: usize) -> Self {
        Self { sigma: DMatrix::zeros(p, p) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    /// `max_j sqrt(Σ_jj) · sqrt(2 log(2p) / n)`.
    pub fn default_delta(&self, n: usize) -> f64 {
        let p = self.p().max(1) as f64;
        let sd = self.sigma.diagonal().iter().map(|v| v.max(0.0).sqrt()).fold(0.0, f64::max);
        sd * (2.0 * (2.0 * p).ln() / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusGrid {
    pub len: usize,
    /// Grid ends as multiples of the lasso solution's ℓ1 norm.
    pub low: f64,
    pub high: f64,
}

impl Default for RadiusGrid {
    fn default() -> Self {
        Self { len: 20, low: 0.05, high: 2.0 }
    }
}

/// How a tuning parameter is picked from cross-validation curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// Smallest mean held-out deviance.
    #[default]
    Min,
    /// Most regularized value within one standard error of the minimum.
    OneSe,
}

/// Family under which corrected-lasso radii are cross-validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusTuning {
    /// Squared-error loss on the raw outcome, as for a linear-probability
    /// model; the chosen radius is then used in the model's own family.
    #[default]
    Gaussian,
    /// The model's own family and deviance.
    Native,
}

/// Statistic tuning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatOptions {
    pub cv_folds: usize,
    pub lambda_count: usize,
    pub lambda_min_ratio: f64,
    pub trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(2p))`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// GMUS slack on the unweighted scale; `None` uses
    /// [`ErrorCov::default_delta`]. Each linearized problem uses
    /// `delta * wbar`, matching the weighted Gram matrix.
    pub delta: Option<f64>,
    pub radius_grid: RadiusGrid,
    /// Explicit corrected-lasso radii, overriding `radius_grid`.
    pub radii: Option<Vec<f64>>,
    pub radius_rule: CvRule,
    pub radius_tuning: RadiusTuning,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
}

impl Default for StatOptions {
    fn default() -> Self {
        Self {
            cv_folds: 10,
            lambda_count: 100,
            lambda_min_ratio: 1e-3,
            trees: 500,
            mtry: None,
            min_leaf: 5,
            delta: None,
            radius_grid: RadiusGrid::default(),
            radii: None,
            radius_rule: CvRule::Min,
            radius_tuning: RadiusTuning::Gaussian,
            fixed_point_tol: 1e-6,
            fixed_point_max_iter: 50,
        }
    }
}

impl StatOptions {
    pub fn grid(&self) -> GridPolicy {
        GridPolicy { len: self.lambda_count, min_ratio: self.lambda_min_ratio }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return param("cv_folds must be at least 2");
        }
        if self.lambda_count < 2 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return param("lambda grid needs at least two points and a ratio in (0, 1)");
        }
        if self.trees == 0 || self.min_leaf == 0 {
            return param("forest needs at least one tree and min_leaf >= 1");
        }
        if self.delta.is_some_and(|d| !(d >= 0.0)) {
            return param("delta must be nonnegative");
        }
        if self.radius_grid.len == 0 || !(self.radius_grid.low > 0.0 && self.radius_grid.high >= self.radius_grid.low) {
            return param("radius grid must be nonempty with 0 < low <= high");
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r.iter().any(|d| !(*d > 0.0)) {
                return param("radii must be positive");
            }
        }
        Ok(())
    }
}

/// Quadratic summary of the (working) response around a preliminary fit:
/// weighted-centered Gram matrix and score, with the centering kept so the
/// intercept can be recovered.
#[derive(Debug, Clone)]
pub struct Linearized {
    pub gram: DMatrix<f64>,
    pub c: DVector<f64>,
    pub xbar: DVector<f64>,
    pub zbar: f64,
    /// Mean working weight (1 for the Gaussian family).
    pub wbar: f64,
}

impl Linearized {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, family: Family, prelim: Option<&LassoFit>) -> Self {
        let n = y.len();
        let (w, z) = match family {
            Family::Gaussian => (DVector::from_element(n, 1.0), y.clone()),
            Family::Binomial => {
                let eta = match prelim {
                    Some(fit) => fit.linear_predictor(x),
                    None => {
                        let m = y.mean().clamp(1e-6, 1.0 - 1e-6);
                        DVector::from_element(n, (m / (1.0 - m)).ln())
                    }
                };
                let mu = eta.map(|e| logistic(e).clamp(1e-5, 1.0 - 1e-5));
                let w = mu.map(|m| m * (1.0 - m));
                let z = DVector::from_fn(n, |i, _| eta[i] + (y[i] - mu[i]) / w[i]);
                (w, z)
            }
        };
        let wsum = w.sum();
        let xbar = x.tr_mul(&w) / wsum;
        let zbar = w.dot(&z) / wsum;
        let mut xw = x.clone();
        for (j, mut col) in xw.column_iter_mut().enumerate() {
            col.add_scalar_mut(-xbar[j]);
        }
        let centered = xw.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let nf = n as f64;
        let gram = crate::linalg::symmetrize(centered.tr_mul(&xw) / nf);
        let c = xw.tr_mul(&z.add_scalar(-zbar)) / nf;
        Self { gram, c, xbar, zbar, wbar: wsum / nf }
    }

    pub fn intercept(&self, beta: &DVector<f64>) -> f64 {
        self.zbar - self.xbar.dot(beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CvKey {
    folds: usize,
    grid: GridPolicy,
}

struct DantzigFold {
    test: Vec<usize>,
    lin: Linearized,
    path: DantzigPath,
}

struct DantzigCv {
    lambdas: Vec<f64>,
    full: (Linearized, DantzigPath),
    folds: Vec<DantzigFold>,
}

/// `[W, W~]` in solver order, with the outcome and cached fits.
pub struct AugmentedDesign {
    columns: DMatrix<f64>,
    y: DVector<f64>,
    family: Family,
    p: usize,
    /// `perm[c]` is the augmented index (`j` or `p + j`) of solver column `c`.
    perm: Vec<usize>,
    interleave_seed: u64,
    streams: Streams,
    lasso: OnceLock<(CvKey, Arc<LassoCv>)>,
    dantzig: OnceLock<(CvKey, Arc<DantzigCv>)>,
}

impl fmt::Debug for AugmentedDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AugmentedDesign")
            .field("n", &self.n())
            .field("p", &self.p)
            .field("family", &self.family)
            .field("interleave_seed", &self.interleave_seed)
            .finish()
    }
}

impl AugmentedDesign {
    /// Interleaving and fold assignment draw from `streams`.
    pub fn new(w: &DMatrix<f64>, w_tilde: &DMatrix<f64>, y: &DVector<f64>, family: Family, streams: &Streams) -> Result<Self> {
        let (n, p) = w.shape();
        if w_tilde.shape() != (n, p) {
            return param("knockoff matrix must match the feature matrix shape");
        }
        if y.len() != n {
            return param("outcome length must match the number of rows");
        }
        if w.iter().chain(w_tilde.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return param("augmented design must be finite (impute first)");
        }
        if family == Family::Binomial && y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return param("binomial outcome must be coded 0/1");
        }
        let mut perm: Vec<usize> = (0..2 * p).collect();
        let interleave = streams.role(Role::Interleave);
        perm.shuffle(&mut interleave.generator());
        let mut columns = DMatrix::zeros(n, 2 * p);
        for (c, &a) in perm.iter().enumerate() {
            if a < p {
                columns.set_column(c, &w.column(a));
            } else {
                columns.set_column(c, &w_tilde.column(a - p));
            }
        }
        Ok(Self {
            columns,
            y: y.clone(),
            family,
            p,
            perm,
            interleave_seed: interleave.derived_seed(),
            streams: streams.clone(),
            lasso: OnceLock::new(),
            dantzig: OnceLock::new(),
        })
    }

    /// Same columns, permutation and folds, analysed under another family.
    pub fn with_family(&self, family: Family) -> Self {
        Self {
            columns: self.columns.clone(),
            y: self.y.clone(),
            family,
            p: self.p,
            perm: self.perm.clone(),
            interleave_seed: self.interleave_seed,
            streams: self.streams.clone(),
            lasso: OnceLock::new(),
            dantzig: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Columns in solver order.
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave_seed(&self) -> u64 {
        self.interleave_seed
    }

    /// Split a solver-order score vector into `(Z, Z~)`.
    pub fn unpermute(&self, scores: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let mut z = DVector::zeros(self.p);
        let mut zt = DVector::zeros(self.p);
        for (c, &a) in self.perm.iter().enumerate() {
            if a < self.p {
                z[a] = scores[c];
            } else {
                zt[a - self.p] = scores[c];
            }
        }
        (z, zt)
    }

    fn pair(&self, scores: &[f64], statistic: StatKind, tuning: Tuning) -> StatPair {
        let (z, z_tilde) = self.unpermute(scores);
        StatPair { z, z_tilde, statistic, tuning: Tuning { interleave_seed: self.interleave_seed, ..tuning } }
    }

    /// Balanced random fold labels.
    pub fn folds(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n();
        if k < 2 || k > n {
            return param(format!("cannot split {n} rows into {k} folds"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.streams.rng(Role::Folds));
        let mut fold = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold[i] = pos % k;
        }
        Ok(fold)
    }

    /// Error covariance laid out for the solver columns; knockoffs carry none.
    pub fn augmented_error_cov(&self, sigma: &ErrorCov) -> Result<DMatrix<f64>> {
        if sigma.p() != self.p {
            return param(format!("error covariance is {}x{}, expected p = {}", sigma.p(), sigma.p(), self.p));
        }
        let m = 2 * self.p;
        Ok(DMatrix::from_fn(m, m, |a, b| {
            let (ia, ib) = (self.perm[a], self.perm[b]);
            if ia < self.p && ib < self.p {
                sigma.matrix()[(ia, ib)]
            } else {
                0.0
            }
        }))
    }

    /// Cross-validated lasso on the solver columns, cached per policy.
    pub fn lasso_cv(&self, opts: &StatOptions) -> Result<Arc<LassoCv>> {
        let key = CvKey { folds: opts.cv_folds, grid: opts.grid() };
        if let Some((k, cv)) = self.lasso.get() {
            if *k == key {
                return Ok(cv.clone());
            }
        }
        let folds = self.folds(opts.cv_folds)?;
        let cv = Arc::new(lasso_cv(&self.columns, &self.y, self.family, &folds, opts.cv_folds, opts.grid())?);
        let _ = self.lasso.set((key, cv.clone()));
        Ok(cv)
    }

    fn fold_rows(&self, k: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let fold = self.folds(k)?;
        Ok((0..k)
            .map(|f| {
                let train = (0..self.n()).filter(|&i| fold[i] != f).collect();
                let test = (0..self.n()).filter(|&i| fold[i] == f).collect();
                (train, test)
            })
            .collect())
    }

    fn dantzig_cv(&self, opts: &StatOptions) -> Result<Arc<DantzigCv>> {
        let key = CvKey { folds: opts.cv_folds, grid: opts.grid() };
        if let Some((k, cv)) = self.dantzig.get() {
            if *k == key {
                return Ok(cv.clone());
            }
        }
        let lcv = self.lasso_cv(opts)?;
        let best = lcv.best;
        let full_lin = Linearized::new(&self.columns, &self.y, self.family, Some(lcv.best_fit()));
        let lambdas = lambda_grid(full_lin.c.amax().max(1e-12), opts.lambda_count, opts.lambda_min_ratio);
        let floor = *lambdas.last().unwrap_or(&0.0);
        let full_path = DantzigPath::solve(&full_lin.gram, &full_lin.c, floor)?;
        let mut folds = Vec::with_capacity(opts.cv_folds);
        for (f, (train, test)) in self.fold_rows(opts.cv_folds)?.into_iter().enumerate() {
            let x = self.columns.select_rows(&train);
            let y = self.y.select_rows(&train);
            let lin = Linearized::new(&x, &y, self.family, Some(&lcv.folds[f].fits[best]));
            let path = DantzigPath::solve(&lin.gram, &lin.c, floor)?;
            folds.push(DantzigFold { test, lin, path });
        }
        let cv = Arc::new(DantzigCv { lambdas, full: (full_lin, full_path), folds });
        let _ = self.dantzig.set((key, cv.clone()));
        Ok(cv)
    }

    fn heldout_deviance(&self, test: &[usize], beta: &DVector<f64>, intercept: f64) -> f64 {
        let x = self.columns.select_rows(test);
        let y = self.y.select_rows(test);
        deviance(self.family, &y, &(x * beta).add_scalar(intercept))
    }
}

/// `|β_j|` at the cross-validated lasso penalty.
pub fn stat_lasso_coef(design: &AugmentedDesign, opts: &StatOptions) -> Result<StatPair> {
    let cv = design.lasso_cv(opts)?;
    let fit = cv.best_fit();
    let scores: Vec<f64> = fit.beta.iter().map(|b| b.abs()).collect();
    Ok(design.pair(&scores, StatKind::LassoCoef, Tuning { lambda: Some(cv.lambda()), ..Tuning::default() }))
}

/// Largest grid penalty at which each column is active on the full-data path.
pub fn stat_lasso_order(design: &AugmentedDesign, opts: &StatOptions) -> Result<StatPair> {
    let cv = design.lasso_cv(opts)?;
    let mut scores = vec![0.0; 2 * design.p];
    for (c, s) in scores.iter_mut().enumerate() {
        if let Some(k) = cv.full.fits.iter().position(|f| f.beta[c].abs() > 1e-9) {
            *s = cv.lambdas[k];
        }
    }
    Ok(design.pair(&scores, StatKind::LassoOrder, Tuning::default()))
}

/// Generalized Dantzig selector with cross-validated penalty.
pub fn stat_gds(design: &AugmentedDesign, opts: &StatOptions) -> Result<StatPair> {
    let cv = design.dantzig_cv(opts)?;
    let mut dev = vec![0.0; cv.lambdas.len()];
    for fold in &cv.folds {
        for (k, &lambda) in cv.lambdas.iter().enumerate() {
            let beta = fold.path.at(lambda)?;
            dev[k] += design.heldout_deviance(&fold.test, &beta, fold.lin.intercept(&beta));
        }
    }
    let lambda = cv.lambdas[argmin_first(&dev)];
    let beta = cv.full.1.at(lambda)?;
    let scores: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
    Ok(design.pair(&scores, StatKind::Gds, Tuning { lambda: Some(lambda), ..Tuning::default() }))
}

/// Matrix-uncertainty selector with cross-validated penalty.
pub fn stat_gmus(design: &AugmentedDesign, sigma: &ErrorCov, opts: &StatOptions) -> Result<StatPair> {
    if sigma.p() != design.p {
        return param("error covariance dimension does not match the design");
    }
    let delta = opts.delta.unwrap_or_else(|| sigma.default_delta(design.n()));
    let cv = design.dantzig_cv(opts)?;
    let (tol, iters) = (opts.fixed_point_tol, opts.fixed_point_max_iter);
    let mut dev = vec![0.0; cv.lambdas.len()];
    for fold in &cv.folds {
        for (k, &lambda) in cv.lambdas.iter().enumerate() {
            let (beta, _) = mu_selector(&fold.path, lambda, delta * fold.lin.wbar, tol, iters)?;
            dev[k] += design.heldout_deviance(&fold.test, &beta, fold.lin.intercept(&beta));
        }
    }
    let lambda = cv.lambdas[argmin_first(&dev)];
    let (beta, trace) = mu_selector(&cv.full.1, lambda, delta * cv.full.0.wbar, tol, iters)?;
    let scores: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
    let tuning = Tuning {
        lambda: Some(lambda),
        delta: Some(delta),
        fixed_point_iterations: Some(trace.t.len() - 1),
        ..Tuning::default()
    };
    Ok(design.pair(&scores, StatKind::Gmus, tuning))
}

/// Default radii: log-spaced multiples of the CV lasso solution's ℓ1 norm.
pub fn default_radii(design: &AugmentedDesign, opts: &StatOptions) -> Result<Vec<f64>> {
    if let Some(r) = &opts.radii {
        let mut r = r.clone();
        r.sort_by(f64::total_cmp);
        return Ok(r);
    }
    let cv = design.lasso_cv(opts)?;
    let mut norm = cv.best_fit().beta.lp_norm(1);
    if norm <= 0.0 {
        // Empty lasso fit: scale from the first solution along the path.
        norm = cv.full.fits.iter().map(|f| f.beta.lp_norm(1)).find(|v| *v > 0.0).unwrap_or(1.0);
    }
    let g = opts.radius_grid;
    let mut radii = lambda_grid(norm * g.high, g.len, g.low / g.high);
    radii.reverse();
    Ok(radii)
}

/// Radius indices (ascending radii) in order of preference. Under
/// [`CvRule::OneSe`] the first choice is the smallest radius whose mean
/// deviance is within one standard error of the best.
fn radius_preference(dev: &[Vec<f64>], ok: &[bool], rule: CvRule) -> Vec<usize> {
    let folds = dev.len().max(1) as f64;
    let mean: Vec<f64> = (0..ok.len()).map(|k| dev.iter().map(|row| row[k]).sum::<f64>() / folds).collect();
    let mut order: Vec<usize> = (0..ok.len()).filter(|&k| ok[k]).collect();
    order.sort_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(a.cmp(&b)));
    if let (CvRule::OneSe, Some(&best)) = (rule, order.first()) {
        let var = dev.iter().map(|row| (row[best] - mean[best]).powi(2)).sum::<f64>() / (folds - 1.0).max(1.0);
        let cutoff = mean[best] + (var / folds).sqrt();
        if let Some(pick) = (0..ok.len()).find(|&k| ok[k] && mean[k] <= cutoff) {
            order.retain(|&k| k != pick);
            order.insert(0, pick);
        }
    }
    order
}

/// Candidate radii and their preference order from cross-validation.
fn cv_radii(design: &AugmentedDesign, sigma_aug: &DMatrix<f64>, opts: &StatOptions) -> Result<(Vec<f64>, Vec<usize>)> {
    let radii = default_radii(design, opts)?;
    let lcv = design.lasso_cv(opts)?;
    let best = lcv.best;
    // dev[f][k]: held-out deviance of fold f at radius k.
    let mut dev = Vec::with_capacity(opts.cv_folds);
    let mut ok = vec![true; radii.len()];
    for (f, (train, test)) in design.fold_rows(opts.cv_folds)?.into_iter().enumerate() {
        let x = design.columns.select_rows(&train);
        let y = design.y.select_rows(&train);
        let lin = Linearized::new(&x, &y, design.family, Some(&lcv.folds[f].fits[best]));
        let q = Quadratic { h: &lin.gram - sigma_aug * lin.wbar, c: lin.c.clone() };
        let mut warm: Option<DVector<f64>> = None;
        let mut row = vec![f64::NAN; radii.len()];
        for (k, &d) in radii.iter().enumerate() {
            let fit = minimize_l1_ball(&q, d, warm.as_ref());
            if !fit.converged || !fit.objective.is_finite() {
                ok[k] = false;
                continue;
            }
            row[k] = design.heldout_deviance(&test, &fit.beta, lin.intercept(&fit.beta)) / test.len().max(1) as f64;
            warm = Some(fit.beta);
        }
        dev.push(row);
    }
    let order = radius_preference(&dev, &ok, opts.radius_rule);
    Ok((radii, order))
}

/// Error-corrected ℓ1-constrained least squares with cross-validated radius.
pub fn stat_corrected_lasso(design: &AugmentedDesign, sigma: &ErrorCov, opts: &StatOptions) -> Result<StatPair> {
    let sigma_aug = design.augmented_error_cov(sigma)?;
    let (radii, order) = match (opts.radius_tuning, design.family) {
        (RadiusTuning::Gaussian, Family::Binomial) => cv_radii(&design.with_family(Family::Gaussian), &sigma_aug, opts)?,
        _ => cv_radii(design, &sigma_aug, opts)?,
    };
    let lcv = design.lasso_cv(opts)?;
    let lin = Linearized::new(&design.columns, &design.y, design.family, Some(lcv.best_fit()));
    let q = Quadratic { h: &lin.gram - &sigma_aug * lin.wbar, c: lin.c.clone() };
    for k in order {
        let fit = minimize_l1_ball(&q, radii[k], None);
        if fit.converged && fit.objective.is_finite() {
            let scores: Vec<f64> = fit.beta.iter().map(|b| b.abs()).collect();
            return Ok(design.pair(&scores, StatKind::CorrectedLasso, Tuning { radius: Some(radii[k]), ..Tuning::default() }));
        }
    }
    Err(Error::Solver("corrected lasso: every radius was rejected".into()))
}

/// Random-forest importance scores.
pub fn stat_rf(design: &AugmentedDesign, opts: &StatOptions) -> Result<StatPair> {
    let scores = forest::importance(design.columns(), design.y(), design.family, opts, &design.streams.role(Role::Statistics))?;
    Ok(design.pair(&scores, StatKind::RandomForest, Tuning::default()))
}

/// Dispatch by kind. Correction-aware statistics require `sigma`.
pub fn compute(kind: StatKind, design: &AugmentedDesign, sigma: Option<&ErrorCov>, opts: &StatOptions) -> Result<StatPair> {
    let need = || sigma.ok_or_else(|| Error::Config(format!("statistic {kind} needs a measurement-error covariance")));
    let pair = match kind {
        StatKind::LassoCoef => stat_lasso_coef(design, opts)?,
        StatKind::LassoOrder => stat_lasso_order(design, opts)?,
        StatKind::RandomForest => stat_rf(design, opts)?,
        StatKind::Gds => stat_gds(design, opts)?,
        StatKind::Gmus => stat_gmus(design, need()?, opts)?,
        StatKind::CorrectedLasso => stat_corrected_lasso(design, need()?, opts)?,
    };
    debug_assert!(pair.is_valid());
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_normal_matrix;
    use crate::rng::Rng64;
    use rand::SeedableRng;

    fn gaussian_design(n: usize, p: usize, seed: u64, interleave: u64) -> AugmentedDesign {
        let mut rng = Rng64::seed_from_u64(seed);
        let w = standard_normal_matrix(n, p, &mut rng);
        let wt = standard_normal_matrix(n, p, &mut rng);
        let y = DVector::from_fn(n, |i, _| 2.0 * w[(i, 0)] - 1.5 * w[(i, 1)]);
        AugmentedDesign::new(&w, &wt, &y, Family::Gaussian, &Streams::new(interleave)).unwrap()
    }

    #[test]
    fn permutation_is_a_bijection_and_inverts() {
        let d = gaussian_design(20, 7, 1, 3);
        let mut seen = d.permutation().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..14).collect::<Vec<_>>());
        let scores: Vec<f64> = d.permutation().iter().map(|&a| a as f64).collect();
        let (z, zt) = d.unpermute(&scores);
        for j in 0..7 {
            assert_eq!(z[j], j as f64);
            assert_eq!(zt[j], (7 + j) as f64);
        }
    }

    #[test]
    fn scores_do_not_depend_on_interleaving() {
        let opts = StatOptions { cv_folds: 5, ..StatOptions::default() };
        let a = gaussian_design(200, 6, 2, 10);
        let b = gaussian_design(200, 6, 2, 11);
        assert_ne!(a.permutation(), b.permutation());
        for kind in [StatKind::LassoOrder, StatKind::Gds] {
            let pa = compute(kind, &a, None, &opts).unwrap();
            let pb = compute(kind, &b, None, &opts).unwrap();
            assert!((pa.z - pb.z).amax() < 1e-4, "{kind}");
        }
    }

    #[test]
    fn correction_aware_statistics_need_a_covariance() {
        let d = gaussian_design(50, 3, 3, 1);
        let err = compute(StatKind::Gmus, &d, None, &StatOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn gmus_with_zero_delta_equals_gds() {
        let opts = StatOptions { cv_folds: 5, delta: Some(0.0), ..StatOptions::default() };
        let d = gaussian_design(150, 5, 4, 2);
        let gds = stat_gds(&d, &opts).unwrap();
        let gmus = stat_gmus(&d, &ErrorCov::zeros(5), &opts).unwrap();
        assert_eq!(gds.z, gmus.z);
        assert_eq!(gds.z_tilde, gmus.z_tilde);
    }

    #[test]
    fn orthonormal_gds_equals_lasso() {
        let n = 100;
        let mut rng = Rng64::seed_from_u64(5);
        let mut x = standard_normal_matrix(n, 4, &mut rng);
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let x = x.qr().q() * (n as f64).sqrt();
        let y = &x * DVector::from_vec(vec![1.0, -0.5, 0.1, 0.0]) + standard_normal_matrix(n, 1, &mut rng).column(0) * 0.2;
        let lin = Linearized::new(&x, &y, Family::Gaussian, None);
        let path = DantzigPath::solve(&lin.gram, &lin.c, 0.0).unwrap();
        for lambda in [0.05, 0.2, 0.6] {
            let ds = path.at(lambda).unwrap();
            let lasso = lasso::lasso_fit(&x, &y, Family::Gaussian, lambda).unwrap();
            assert!((ds - lasso.beta).amax() < 1e-6);
        }
    }

    #[test]
    fn corrected_lasso_without_error_is_constrained_lasso() {
        let n = 200;
        let mut rng = Rng64::seed_from_u64(6);
        let mut x = standard_normal_matrix(n, 6, &mut rng);
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
            let sd = (c.norm_squared() / n as f64).sqrt();
            c /= sd;
        }
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.5 * x[(i, 2)]) + standard_normal_matrix(n, 1, &mut rng).column(0);
        let lambda = 0.1;
        let lasso = lasso::lasso_fit(&x, &y, Family::Gaussian, lambda).unwrap();
        let d = lasso.beta.lp_norm(1);
        let lin = Linearized::new(&x, &y, Family::Gaussian, None);
        let q = Quadratic { h: lin.gram.clone(), c: lin.c.clone() };
        let fit = minimize_l1_ball(&q, d, None);
        assert!(fit.converged);
        assert!((fit.objective - q.value(&lasso.beta)).abs() < 1e-4);
    }

    #[test]
    fn binomial_statistics_are_valid() {
        let n = 200;
        let mut rng = Rng64::seed_from_u64(7);
        let w = standard_normal_matrix(n, 5, &mut rng);
        let wt = standard_normal_matrix(n, 5, &mut rng);
        let y = DVector::from_fn(n, |i, _| if w[(i, 0)] * 2.0 + 0.3 * (i % 5) as f64 - 0.6 > 0.0 { 1.0 } else { 0.0 });
        let d = AugmentedDesign::new(&w, &wt, &y, Family::Binomial, &Streams::new(1)).unwrap();
        let opts = StatOptions { cv_folds: 5, trees: 20, ..StatOptions::default() };
        let sigma = ErrorCov::new(DMatrix::identity(5, 5) * 0.1).unwrap();
        for kind in StatKind::ALL {
            let pair = compute(kind, &d, Some(&sigma), &opts).unwrap();
            assert!(pair.is_valid(), "{kind}");
            assert!(pair.z[0] > pair.z_tilde[0], "{kind}: {:?}", pair);
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in StatKind::ALL {
            assert_eq!(kind.name().parse::<StatKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
        }
    }
}
