//! Single and multiple imputation of an incomplete feature matrix.
//!
//! Chained-equation imputation starts from a marginal draw for every masked
//! cell and then sweeps over the missing-bearing columns (fewest missing
//! first), regressing each on the other columns (and optionally the outcome)
//! over its observed rows and redrawing its masked cells from the fitted
//! engine.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservedData;
use crate::error::{self, param, Result};
use crate::linalg::solve_spd;
use crate::rng::{Role, Rng64, Streams};
use crate::tree::{Impurity, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    HalfMin,
    Mean,
    /// Stochastic linear regression.
    ChainedDefault,
    /// Regression tree, draw from the leaf.
    ChainedCart,
    /// Predictive mean matching.
    ChainedPmm,
}

impl ImputeMethod {
    /// Chained engines produce K distinct completions; the simple fills one.
    pub fn is_multiple(self) -> bool {
        !matches!(self, Self::HalfMin | Self::Mean)
    }
}

impl std::str::FromStr for ImputeMethod {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_min" | "halfmin" => Ok(Self::HalfMin),
            "mean" => Ok(Self::Mean),
            "default" | "chained_default" => Ok(Self::ChainedDefault),
            "cart" | "chained_cart" => Ok(Self::ChainedCart),
            "pmm" | "chained_pmm" => Ok(Self::ChainedPmm),
            other => param(format!("unknown imputation method {other:?}")),
        }
    }
}

/// How masked cells are filled before the first sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Random draw from the column's observed values.
    #[default]
    MarginalDraw,
    /// Observed column mean.
    MeanFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    pub method: ImputeMethod,
    /// Number of completed datasets.
    pub k: usize,
    pub include_outcome: bool,
    pub sweeps: usize,
    pub init: InitMethod,
    /// Drop the stochastic part of every engine (testing aid).
    pub deterministic: bool,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            method: ImputeMethod::ChainedDefault,
            k: 5,
            include_outcome: true,
            sweeps: 10,
            init: InitMethod::MarginalDraw,
            deterministic: false,
        }
    }
}

impl ImputeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return param("K must be at least 1");
        }
        if self.sweeps == 0 {
            return param("sweeps must be at least 1");
        }
        Ok(())
    }
}

/// K completed matrices sharing the original observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedSet {
    pub copies: Vec<DMatrix<f64>>,
    pub observed: DMatrix<bool>,
}

impl CompletedSet {
    pub fn k(&self) -> usize {
        self.copies.len()
    }
}

/// Minimum observed rows for a column to get its own regression model.
pub const MIN_OBSERVED_FOR_MODEL: usize = 10;
pub const PMM_DONORS: usize = 5;
const CART_MAX_DEPTH: usize = 8;
const CART_MIN_LEAF: usize = 10;

fn check_columns(data: &ObservedData) -> Result<()> {
    for j in 0..data.p() {
        if data.missing_in_column(j) == data.n() {
            return error::data::<()>(format!("column {} ({}) has no observed values", j, data.names[j]));
        }
    }
    Ok(())
}

fn column_mean(data: &ObservedData, j: usize) -> f64 {
    let v = data.observed_values(j);
    v.iter().sum::<f64>() / v.len() as f64
}

fn fill_with(data: &ObservedData, value: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut out = data.features.clone();
    for j in 0..data.p() {
        if data.missing_in_column(j) == 0 {
            continue;
        }
        let v = value(j);
        for i in 0..data.n() {
            if !data.observed[(i, j)] {
                out[(i, j)] = v;
            }
        }
    }
    out
}

/// Half-minimum or mean imputation (K = 1).
pub fn impute_simple(data: &ObservedData, method: ImputeMethod) -> Result<CompletedSet> {
    check_columns(data)?;
    let filled = match method {
        ImputeMethod::HalfMin => fill_with(data, |j| {
            0.5 * data.observed_values(j).into_iter().fold(f64::INFINITY, f64::min)
        }),
        ImputeMethod::Mean => fill_with(data, |j| column_mean(data, j)),
        _ => return param("impute_simple supports only half-min and mean"),
    };
    Ok(CompletedSet { copies: vec![filled], observed: data.observed.clone() })
}

/// A fitted per-column imputation model.
#[derive(Debug, Clone)]
pub enum ColumnModel {
    Linear { coef: DVector<f64>, resid_sd: f64 },
    Pmm { coef: DVector<f64>, donors: Vec<(f64, f64)> },
    Cart { tree: Tree },
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    d.columns_mut(1, x.ncols()).copy_from(x);
    d
}

fn linear_fit(x: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, f64) {
    let d = with_intercept(x);
    let yv = DVector::from_column_slice(y);
    let gram = d.tr_mul(&d);
    let rhs = d.tr_mul(&yv);
    let coef = solve_spd(&gram, &rhs).unwrap_or_else(|| {
        let mut c = DVector::zeros(d.ncols());
        c[0] = yv.mean();
        c
    });
    let resid = &yv - &d * &coef;
    let dof = (y.len() as f64 - d.ncols() as f64).max(1.0);
    (coef, (resid.norm_squared() / dof).sqrt())
}

fn linear_predict(coef: &DVector<f64>, row: &[f64]) -> f64 {
    coef[0] + row.iter().zip(coef.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>()
}

/// Fit the engine for one column on its observed rows.
pub fn fit_engine<R: Rng + ?Sized>(method: ImputeMethod, x: &DMatrix<f64>, y: &[f64], rng: &mut R) -> Result<ColumnModel> {
    match method {
        ImputeMethod::ChainedDefault => {
            let (coef, resid_sd) = linear_fit(x, y);
            if resid_sd <= 1e-12 {
                warn!("imputation model has zero residual variance; using deterministic predictions");
            }
            Ok(ColumnModel::Linear { coef, resid_sd })
        }
        ImputeMethod::ChainedPmm => {
            let (coef, _) = linear_fit(x, y);
            let mut donors: Vec<(f64, f64)> = (0..x.nrows())
                .map(|i| {
                    let row: Vec<f64> = x.row(i).iter().copied().collect();
                    (linear_predict(&coef, &row), y[i])
                })
                .collect();
            donors.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(ColumnModel::Pmm { coef, donors })
        }
        ImputeMethod::ChainedCart => {
            let params = TreeParams {
                impurity: Impurity::Variance,
                max_depth: Some(CART_MAX_DEPTH),
                min_leaf: CART_MIN_LEAF,
                mtry: None,
            };
            let (tree, _) = Tree::fit(x, y, (0..x.nrows()).collect(), params, rng);
            Ok(ColumnModel::Cart { tree })
        }
        _ => param("not a chained-equation engine"),
    }
}

/// The donor indices nearest to `target` in predicted mean.
fn nearest_donors(donors: &[(f64, f64)], target: f64, k: usize) -> (usize, usize) {
    let k = k.min(donors.len());
    let pos = donors.partition_point(|d| d.0 < target);
    let (mut lo, mut hi) = (pos, pos);
    while hi - lo < k {
        let take_left = if lo == 0 {
            false
        } else if hi == donors.len() {
            true
        } else {
            target - donors[lo - 1].0 <= donors[hi].0 - target
        };
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    (lo, hi)
}

/// Draw an imputed value for one row. With `deterministic` set, returns the
/// engine's point prediction (leaf mean for trees, nearest donor for PMM).
pub fn engine_predict<R: Rng + ?Sized>(model: &ColumnModel, row: &[f64], deterministic: bool, rng: &mut R) -> f64 {
    match model {
        ColumnModel::Linear { coef, resid_sd } => {
            let mean = linear_predict(coef, row);
            if deterministic || *resid_sd <= 1e-12 {
                mean
            } else {
                mean + resid_sd * rng.sample::<f64, _>(StandardNormal)
            }
        }
        ColumnModel::Pmm { coef, donors } => {
            let target = linear_predict(coef, row);
            let (lo, hi) = nearest_donors(donors, target, PMM_DONORS);
            if deterministic {
                let best = (lo..hi)
                    .min_by(|&a, &b| (donors[a].0 - target).abs().total_cmp(&(donors[b].0 - target).abs()))
                    .unwrap();
                donors[best].1
            } else {
                donors[rng.random_range(lo..hi)].1
            }
        }
        ColumnModel::Cart { tree } => {
            if deterministic {
                tree.predict(row)
            } else {
                let values = tree.leaf_values(row);
                values[rng.random_range(0..values.len())]
            }
        }
    }
}

fn chained_once(data: &ObservedData, cfg: &ImputeConfig, rng: &mut Rng64) -> Result<DMatrix<f64>> {
    let (n, p) = (data.n(), data.p());
    let mut w = data.features.clone();
    let mut modeled: Vec<(usize, usize)> = Vec::new();
    for j in 0..p {
        let miss = data.missing_in_column(j);
        if miss == 0 {
            continue;
        }
        let obs = data.observed_values(j);
        let thin = obs.len() < MIN_OBSERVED_FOR_MODEL;
        if thin {
            warn!(
                "column {} has only {} observed values; falling back to mean imputation",
                data.names[j],
                obs.len()
            );
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        for i in 0..n {
            if !data.observed[(i, j)] {
                w[(i, j)] = if thin || cfg.init == InitMethod::MeanFill {
                    mean
                } else {
                    obs[rng.random_range(0..obs.len())]
                };
            }
        }
        if !thin {
            modeled.push((miss, j));
        }
    }
    modeled.sort_unstable();
    let extra = usize::from(cfg.include_outcome);
    let mut predictors = DMatrix::zeros(n, p - 1 + extra);
    for _ in 0..cfg.sweeps {
        for &(_, j) in &modeled {
            for (c, k) in (0..p).filter(|&k| k != j).enumerate() {
                predictors.column_mut(c).copy_from(&w.column(k));
            }
            if cfg.include_outcome {
                predictors.column_mut(p - 1).copy_from(&data.outcome);
            }
            let obs_rows: Vec<usize> = (0..n).filter(|&i| data.observed[(i, j)]).collect();
            let x_obs = predictors.select_rows(&obs_rows);
            let y_obs: Vec<f64> = obs_rows.iter().map(|&i| data.features[(i, j)]).collect();
            let model = fit_engine(cfg.method, &x_obs, &y_obs, rng)?;
            let mut row = vec![0.0; predictors.ncols()];
            for i in (0..n).filter(|&i| !data.observed[(i, j)]) {
                for (c, r) in row.iter_mut().enumerate() {
                    *r = predictors[(i, c)];
                }
                w[(i, j)] = engine_predict(&model, &row, cfg.deterministic, rng);
            }
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return error::data("imputation produced non-finite values");
    }
    Ok(w)
}

/// Chained-equation multiple imputation: K independent runs, the k-th
/// drawing from the `k` child of `streams`.
pub fn impute_chained(data: &ObservedData, cfg: &ImputeConfig, streams: &Streams) -> Result<CompletedSet> {
    cfg.validate()?;
    check_columns(data)?;
    if !matches!(
        cfg.method,
        ImputeMethod::ChainedDefault | ImputeMethod::ChainedCart | ImputeMethod::ChainedPmm
    ) {
        return param("impute_chained needs a chained-equation engine");
    }
    let copies = (0..cfg.k)
        .into_par_iter()
        .map(|k| {
            let mut rng = streams.child(k as u64).rng(Role::Impute);
            chained_once(data, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompletedSet { copies, observed: data.observed.clone() })
}

/// Dispatch on the configured method. Simple methods always give K = 1.
pub fn impute(data: &ObservedData, cfg: &ImputeConfig, streams: &Streams) -> Result<CompletedSet> {
    match cfg.method {
        ImputeMethod::HalfMin | ImputeMethod::Mean => impute_simple(data, cfg.method),
        _ => impute_chained(data, cfg, streams),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_scenario, ScenarioSpec, Setting};
    use rand::SeedableRng;

    fn small_column() -> ObservedData {
        let x = DMatrix::from_column_slice(3, 1, &[2.0, f64::NAN, 4.0]);
        let mask = DMatrix::from_column_slice(3, 1, &[true, false, true]);
        ObservedData::new(DVector::zeros(3), x, mask).unwrap()
    }

    #[test]
    fn half_min_and_mean() {
        let d = small_column();
        let h = impute_simple(&d, ImputeMethod::HalfMin).unwrap();
        assert_eq!(h.copies[0].as_slice(), &[2.0, 1.0, 4.0]);
        let m = impute_simple(&d, ImputeMethod::Mean).unwrap();
        assert_eq!(m.copies[0].as_slice(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn fully_observed_is_untouched() {
        let x = DMatrix::from_fn(20, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let d = ObservedData::complete(DVector::zeros(20), x.clone()).unwrap();
        assert_eq!(impute_simple(&d, ImputeMethod::HalfMin).unwrap().copies[0], x);
        for method in [ImputeMethod::ChainedDefault, ImputeMethod::ChainedCart, ImputeMethod::ChainedPmm] {
            let cfg = ImputeConfig { method, k: 3, ..Default::default() };
            let set = impute_chained(&d, &cfg, &Streams::new(1)).unwrap();
            assert_eq!(set.k(), 3);
            assert!(set.copies.iter().all(|c| *c == x));
        }
    }

    #[test]
    fn fully_missing_column_is_a_data_error() {
        let x = DMatrix::from_element(3, 2, 1.0);
        let mut mask = DMatrix::from_element(3, 2, true);
        mask.column_mut(1).fill(false);
        let d = ObservedData::new(DVector::zeros(3), x, mask).unwrap();
        assert!(matches!(impute_simple(&d, ImputeMethod::Mean), Err(crate::Error::Data(_))));
        assert!(impute_chained(&d, &ImputeConfig::default(), &Streams::new(1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ImputeConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(ImputeConfig { sweeps: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn single_masked_cell_gets_ols_prediction() {
        let mut rng = Rng64::seed_from_u64(4);
        let n = 50;
        let x = crate::linalg::standard_normal_matrix(n, 3, &mut rng);
        let mut mask = DMatrix::from_element(n, 3, true);
        mask[(7, 0)] = false;
        let y = DVector::from_fn(n, |i, _| x[(i, 1)] + 0.5 * x[(i, 2)]);
        let d = ObservedData::new(y.clone(), x.clone(), mask).unwrap();
        let cfg = ImputeConfig { k: 1, deterministic: true, ..Default::default() };
        let set = impute_chained(&d, &cfg, &Streams::new(2)).unwrap();

        // Independent OLS of column 0 on (1, x1, x2, y) over the other rows.
        let rows: Vec<usize> = (0..n).filter(|&i| i != 7).collect();
        let design = DMatrix::from_fn(rows.len(), 4, |r, c| match c {
            0 => 1.0,
            1 => x[(rows[r], 1)],
            2 => x[(rows[r], 2)],
            _ => y[rows[r]],
        });
        let target = DVector::from_fn(rows.len(), |r, _| x[(rows[r], 0)]);
        let coef = design.clone().svd(true, true).solve(&target, 1e-12).unwrap();
        let expected = coef[0] + coef[1] * x[(7, 1)] + coef[2] * x[(7, 2)] + coef[3] * y[7];
        assert!((set.copies[0][(7, 0)] - expected).abs() < 1e-8);
    }

    #[test]
    fn pmm_returns_observed_donor_values() {
        let sc = generate_scenario(&ScenarioSpec { n: 200, ..ScenarioSpec::preset(Setting::MissingOnly) }, &Streams::new(3))
            .unwrap();
        let d = sc.datasets[0].to_observed().unwrap();
        let cfg = ImputeConfig { method: ImputeMethod::ChainedPmm, k: 2, sweeps: 3, ..Default::default() };
        let set = impute_chained(&d, &cfg, &Streams::new(4)).unwrap();
        for j in 0..d.p() {
            let obs = d.observed_values(j);
            for c in &set.copies {
                for i in 0..d.n() {
                    if !d.observed[(i, j)] {
                        assert!(obs.contains(&c[(i, j)]));
                    }
                }
            }
        }
    }

    #[test]
    fn zero_residual_sd_is_exact() {
        let model = ColumnModel::Linear { coef: DVector::from_vec(vec![1.0, 2.0]), resid_sd: 0.0 };
        let mut rng = Rng64::seed_from_u64(1);
        assert_eq!(engine_predict(&model, &[3.0], false, &mut rng), 7.0);
    }

    #[test]
    fn single_leaf_cart_draws_from_column() {
        let x = DMatrix::from_element(30, 1, 1.0);
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut rng = Rng64::seed_from_u64(5);
        let model = fit_engine(ImputeMethod::ChainedCart, &x, &y, &mut rng).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..500 {
            let v = engine_predict(&model, &[1.0], false, &mut rng);
            assert!(y.contains(&v));
            seen.insert(v as i64);
        }
        assert!(seen.len() > 20);
    }

    #[test]
    fn nearest_donor_window() {
        let donors: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        assert_eq!(nearest_donors(&donors, 4.2, 5), (2, 7));
        assert_eq!(nearest_donors(&donors, -3.0, 5), (0, 5));
        assert_eq!(nearest_donors(&donors, 30.0, 5), (5, 10));
        assert_eq!(nearest_donors(&donors[..3], 1.0, 5), (0, 3));
    }

    #[test]
    fn observed_values_preserved_and_copies_differ() {
        let sc = generate_scenario(&ScenarioSpec { n: 300, ..ScenarioSpec::preset(Setting::Both) }, &Streams::new(8))
            .unwrap();
        let d = sc.datasets[0].to_observed().unwrap();
        for method in [ImputeMethod::ChainedDefault, ImputeMethod::ChainedCart, ImputeMethod::ChainedPmm] {
            let cfg = ImputeConfig { method, k: 3, sweeps: 2, ..Default::default() };
            let set = impute_chained(&d, &cfg, &Streams::new(9)).unwrap();
            for c in &set.copies {
                for j in 0..d.p() {
                    for i in 0..d.n() {
                        if d.observed[(i, j)] {
                            assert_eq!(c[(i, j)], d.features[(i, j)]);
                        }
                    }
                }
            }
            assert_ne!(set.copies[0], set.copies[1], "{method:?}");
        }
    }
}
