//! Synthetic data generation: AR(1)-correlated Gaussian features, sparse
//! logistic outcomes, additive Gaussian measurement error and calibrated
//! missing-at-random masks.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::ObservedData;
use crate::error::{param, Result};
use crate::linalg::{logistic, sample_mvn_rows};
use crate::rng::{Role, Streams};

/// Parameters of an AR(1) covariance: entry `(i, j)` is `sigma2 * rho^|i-j|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArSpec {
    pub sigma2: f64,
    pub rho: f64,
    pub p: usize,
}

pub fn ar_cov(spec: ArSpec) -> Result<DMatrix<f64>> {
    if !(spec.sigma2 > 0.0) {
        return param(format!("AR variance must be positive, got {}", spec.sigma2));
    }
    if !(0.0..1.0).contains(&spec.rho) {
        return param(format!("AR correlation must lie in [0, 1), got {}", spec.rho));
    }
    Ok(DMatrix::from_fn(spec.p, spec.p, |i, j| {
        spec.sigma2 * spec.rho.powi(i.abs_diff(j) as i32)
    }))
}

/// Like [`ar_cov`] but a zero variance gives the zero matrix.
pub fn ar_cov_or_zero(sigma2: f64, rho: f64, p: usize) -> Result<DMatrix<f64>> {
    if sigma2 == 0.0 {
        Ok(DMatrix::zeros(p, p))
    } else {
        ar_cov(ArSpec { sigma2, rho, p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSpec {
    pub p: usize,
    /// Number of nonzero coefficients; a multiple of 3.
    pub sparsity: usize,
    pub amplitude: f64,
}

const TILE: [f64; 7] = [3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0];

/// The unsigned tiled coefficient pattern: `sparsity / 3` copies of
/// `(3, 1.5, 0, 0, 2, 0, 0)` scaled by the amplitude, then zeros.
pub fn beta_pattern(spec: BetaSpec) -> Result<DVector<f64>> {
    if spec.sparsity % 3 != 0 {
        return param(format!("sparsity must be divisible by 3, got {}", spec.sparsity));
    }
    let len = 7 * spec.sparsity / 3;
    if len > spec.p {
        return param(format!("pattern needs {len} coordinates but p = {}", spec.p));
    }
    Ok(DVector::from_fn(spec.p, |j, _| {
        if j < len {
            TILE[j % 7] * spec.amplitude
        } else {
            0.0
        }
    }))
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Tiled pattern with i.i.d. Rademacher signs.
pub fn make_beta<R: Rng + ?Sized>(spec: BetaSpec, rng: &mut R) -> Result<DVector<f64>> {
    let mut beta = beta_pattern(spec)?;
    for b in beta.iter_mut() {
        *b *= rademacher(rng);
    }
    Ok(beta)
}

pub fn support(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

/// Binary outcomes with `P(Y_i = 1) = logistic(beta0 + X_i beta)`.
pub fn sample_logistic_outcome<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    beta0: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if x.ncols() != beta.len() {
        return param("design and coefficient dimensions disagree");
    }
    let eta = x * beta;
    Ok(eta.map(|e| if rng.random::<f64>() < logistic(beta0 + e) { 1.0 } else { 0.0 }))
}

/// `W = X + E` with rows of `E` i.i.d. `N(0, sigma_eps)`.
pub fn add_measurement_error<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    sigma_eps: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if sigma_eps.shape() != (x.ncols(), x.ncols()) {
        return param("error covariance must be p x p");
    }
    if sigma_eps.iter().all(|v| *v == 0.0) {
        return Ok(x.clone());
    }
    let e = sample_mvn_rows(x.nrows(), sigma_eps, rng)?;
    Ok(x + e)
}

/// Which matrix drives the missingness model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MissingBasis {
    /// Missingness depends on the other error-prone columns of W.
    #[default]
    #[serde(rename = "W")]
    ErrorProne,
    /// Missingness depends on the other error-free columns of X.
    #[serde(rename = "X")]
    ErrorFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingSpec {
    /// Fraction of variables that carry missing values.
    pub pi_mis: f64,
    /// Average missing rate within each such variable.
    pub p_mis: f64,
    pub depends_on: MissingBasis,
    /// Slopes are drawn from `Uniform[-eta_range, eta_range]`.
    pub eta_range: f64,
    /// Use these columns instead of drawing them.
    pub columns: Option<Vec<usize>>,
}

impl Default for MissingSpec {
    fn default() -> Self {
        Self {
            pi_mis: 2.0 / 15.0,
            p_mis: 0.15,
            depends_on: MissingBasis::ErrorProne,
            eta_range: 2.0,
            columns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarMask {
    /// `true` where the cell is observed.
    pub observed: DMatrix<bool>,
    /// Columns carrying missingness, ascending.
    pub columns: Vec<usize>,
    /// Calibrated intercept for each entry of `columns`.
    pub intercepts: Vec<f64>,
}

/// Intercept `eta0` such that the mean of `1 - logistic(eta0 + l_i)` over the
/// sample equals `p_mis`, found by bisection.
pub fn calibrate_intercept(linear: &[f64], p_mis: f64) -> f64 {
    let target_observed = 1.0 - p_mis;
    let span = linear.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let (mut lo, mut hi) = (-span - 60.0, span + 60.0);
    let mean_obs = |eta0: f64| linear.iter().map(|&l| logistic(eta0 + l)).sum::<f64>() / linear.len() as f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_obs(mid) < target_observed {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn missing_column_counts(p: usize, n_truth: usize, pi_mis: f64) -> (usize, usize) {
    let null = (pi_mis * (p - n_truth) as f64).round() as usize;
    let signal = (pi_mis * n_truth as f64).round() as usize;
    (null, signal)
}

/// Draw the set of missing-bearing columns: `round(pi (p - s))` nulls and
/// `round(pi s)` signals.
pub fn draw_missing_columns<R: Rng + ?Sized>(p: usize, truth: &[usize], pi_mis: f64, rng: &mut R) -> Vec<usize> {
    let nulls: Vec<usize> = (0..p).filter(|j| !truth.contains(j)).collect();
    let (k0, k1) = missing_column_counts(p, truth.len(), pi_mis);
    let mut cols: Vec<usize> = sample_indices(rng, nulls.len(), k0.min(nulls.len()))
        .into_iter()
        .map(|i| nulls[i])
        .collect();
    cols.extend(sample_indices(rng, truth.len(), k1.min(truth.len())).into_iter().map(|i| truth[i]));
    cols.sort_unstable();
    cols
}

pub fn sample_mar_mask<R: Rng + ?Sized>(
    basis: &DMatrix<f64>,
    spec: &MissingSpec,
    truth: &[usize],
    rng: &mut R,
) -> Result<MarMask> {
    if !(0.0..=1.0).contains(&spec.pi_mis) {
        return param(format!("pi_mis must lie in [0, 1], got {}", spec.pi_mis));
    }
    if !(spec.p_mis > 0.0 && spec.p_mis < 1.0) {
        return param(format!("p_mis must lie in (0, 1), got {}", spec.p_mis));
    }
    let (n, p) = basis.shape();
    let columns = match &spec.columns {
        Some(c) => {
            if c.iter().any(|&j| j >= p) {
                return param("missing column index out of range");
            }
            c.clone()
        }
        None => draw_missing_columns(p, truth, spec.pi_mis, rng),
    };
    let mut observed = DMatrix::from_element(n, p, true);
    let mut intercepts = Vec::with_capacity(columns.len());
    for &j in &columns {
        let mut eta = DVector::zeros(p);
        for k in (0..p).filter(|&k| k != j) {
            eta[k] = rng.random_range(-spec.eta_range..=spec.eta_range);
        }
        let linear: Vec<f64> = (basis * &eta).iter().copied().collect();
        let eta0 = calibrate_intercept(&linear, spec.p_mis);
        for i in 0..n {
            observed[(i, j)] = rng.random::<f64>() < logistic(eta0 + linear[i]);
        }
        intercepts.push(eta0);
    }
    Ok(MarMask { observed, columns, intercepts })
}

/// Simulation settings: 1 = missing data only, 2 = measurement error only,
/// 3 = both, `Simultaneous` = two datasets sharing a signal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    MissingOnly,
    ErrorOnly,
    Both,
    Simultaneous,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::MissingOnly => "1",
            Setting::ErrorOnly => "2",
            Setting::Both => "3",
            Setting::Simultaneous => "simul",
        })
    }
}

impl std::str::FromStr for Setting {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Setting::MissingOnly),
            "2" => Ok(Setting::ErrorOnly),
            "3" => Ok(Setting::Both),
            "simul" | "simultaneous" => Ok(Setting::Simultaneous),
            other => param(format!("unknown setting {other:?}; expected 1, 2, 3 or simul")),
        }
    }
}

impl Serialize for Setting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Setting::MissingOnly => s.serialize_u64(1),
            Setting::ErrorOnly => s.serialize_u64(2),
            Setting::Both => s.serialize_u64(3),
            Setting::Simultaneous => s.serialize_str("simul"),
        }
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let text = match &v {
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::String(s) => s.clone(),
            _ => return Err(serde::de::Error::custom("setting must be 1, 2, 3 or \"simul\"")),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Data-generation part of a simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    pub sigma2_x: f64,
    pub rho_x: f64,
    pub a_beta: f64,
    pub beta0: f64,
    pub sigma2_eps: f64,
    pub rho_eps: f64,
    pub pi_mis: f64,
    pub p_mis: f64,
    pub mis_basis: MissingBasis,
    /// Draw the missing-bearing columns once per run instead of per replicate.
    #[serde(default)]
    pub fix_mis_columns: bool,
}

impl ScenarioSpec {
    /// Defaults for each setting: n = 1000, p = 60, AR(1, 0.5) features,
    /// beta0 = -1, error correlation 0.3, 2/15 of the variables missing at
    /// an average rate of 0.15.
    pub fn preset(setting: Setting) -> Self {
        let (a_beta, sigma2_eps, pi_mis) = match setting {
            Setting::MissingOnly => (1.0, 0.0, 2.0 / 15.0),
            Setting::ErrorOnly => (0.5, 0.6, 0.0),
            Setting::Both => (1.0, 0.1, 2.0 / 15.0),
            Setting::Simultaneous => (1.0, 0.6, 2.0 / 15.0),
        };
        Self {
            setting,
            n: 1000,
            p: 60,
            sigma2_x: 1.0,
            rho_x: 0.5,
            a_beta,
            beta0: -1.0,
            sigma2_eps,
            rho_eps: 0.3,
            pi_mis,
            p_mis: 0.15,
            mis_basis: MissingBasis::ErrorProne,
            fix_mis_columns: false,
        }
    }

    pub fn sparsity(&self) -> usize {
        self.p / 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 2 {
            return param("n and p must both be at least 2");
        }
        let s = self.sparsity();
        if s % 3 != 0 {
            return param(format!("sparsity p/4 = {s} must be divisible by 3"));
        }
        let needed = 7 * s / 3 + if self.setting == Setting::Simultaneous { 4 } else { 0 };
        if needed > self.p {
            return param(format!("p = {} is too small for the signal pattern ({needed})", self.p));
        }
        if self.sigma2_eps < 0.0 {
            return param("sigma2_eps must be nonnegative");
        }
        match self.setting {
            Setting::MissingOnly if self.sigma2_eps != 0.0 => {
                param("setting 1 has no measurement error (sigma2_eps must be 0)")
            }
            Setting::ErrorOnly if self.pi_mis != 0.0 => param("setting 2 has no missing data (pi_mis must be 0)"),
            _ => {
                if self.pi_mis > 0.0 && !(self.p_mis > 0.0 && self.p_mis < 1.0) {
                    return param("p_mis must lie in (0, 1)");
                }
                Ok(())
            }
        }
    }

    pub fn missing_spec(&self) -> MissingSpec {
        MissingSpec {
            pi_mis: self.pi_mis,
            p_mis: self.p_mis,
            depends_on: self.mis_basis,
            eta_range: 2.0,
            columns: None,
        }
    }

    pub fn error_cov(&self) -> Result<DMatrix<f64>> {
        ar_cov_or_zero(self.sigma2_eps, self.rho_eps, self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// `true` where observed.
    pub observed: DMatrix<bool>,
    pub y: DVector<f64>,
    pub beta: DVector<f64>,
    /// Indices with nonzero coefficient.
    pub truth: Vec<usize>,
    pub sigma_eps: DMatrix<f64>,
    pub missing_columns: Vec<usize>,
}

impl SimulatedDataset {
    /// What an analyst would see: outcome, masked W and the error covariance.
    pub fn to_observed(&self) -> Result<ObservedData> {
        ObservedData::new(self.y.clone(), self.w.clone(), self.observed.clone())?
            .with_error_cov(self.sigma_eps.clone())
    }
}

/// One or two datasets plus the selection target (the shared signal set in
/// the simultaneous setting).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub datasets: Vec<SimulatedDataset>,
    pub truth: Vec<usize>,
}

fn generate_dataset(
    spec: &ScenarioSpec,
    beta: DVector<f64>,
    streams: &Streams,
    fixed_columns: Option<Vec<usize>>,
) -> Result<SimulatedDataset> {
    let sigma_x = ar_cov(ArSpec { sigma2: spec.sigma2_x, rho: spec.rho_x, p: spec.p })?;
    let x = sample_mvn_rows(spec.n, &sigma_x, &mut streams.rng(Role::Features))?;
    let scaled = &beta * spec.a_beta;
    let y = sample_logistic_outcome(&x, &scaled, spec.beta0, &mut streams.rng(Role::Outcome))?;
    let sigma_eps = spec.error_cov()?;
    let w = add_measurement_error(&x, &sigma_eps, &mut streams.rng(Role::Errors))?;
    let truth = support(&beta);
    let (observed, missing_columns) = if spec.pi_mis > 0.0 {
        let mut mspec = spec.missing_spec();
        mspec.columns = fixed_columns;
        let basis = match spec.mis_basis {
            MissingBasis::ErrorProne => &w,
            MissingBasis::ErrorFree => &x,
        };
        let m = sample_mar_mask(basis, &mspec, &truth, &mut streams.rng(Role::Mask))?;
        (m.observed, m.columns)
    } else {
        (DMatrix::from_element(spec.n, spec.p, true), Vec::new())
    };
    Ok(SimulatedDataset { x, w, observed, y, beta, truth, sigma_eps, missing_columns })
}

/// Generate the dataset(s) of one replicate. `streams` should already be
/// namespaced to the replicate; `run_streams` (the un-namespaced root) is
/// used only when missing columns are fixed across replicates.
pub fn generate_scenario(spec: &ScenarioSpec, streams: &Streams) -> Result<Scenario> {
    generate_scenario_with_root(spec, streams, None)
}

pub fn generate_scenario_with_root(
    spec: &ScenarioSpec,
    streams: &Streams,
    run_streams: Option<&Streams>,
) -> Result<Scenario> {
    spec.validate()?;
    let s = spec.sparsity();
    let pattern = beta_pattern(BetaSpec { p: spec.p, sparsity: s, amplitude: 1.0 })?;
    let mut sign_rng = streams.rng(Role::Signs);
    let shared: DVector<f64> = pattern.map(|b| b * rademacher(&mut sign_rng));
    let fixed = |truth: &[usize], tag: u64| -> Option<Vec<usize>> {
        if spec.fix_mis_columns && spec.pi_mis > 0.0 {
            let root = run_streams.unwrap_or(streams);
            Some(draw_missing_columns(spec.p, truth, spec.pi_mis, &mut root.child(tag).rng(Role::Mask)))
        } else {
            None
        }
    };
    match spec.setting {
        Setting::Simultaneous => {
            let base = 7 * s / 3;
            let mut datasets = Vec::with_capacity(2);
            for m in 0..2usize {
                let mut beta = shared.clone();
                beta[base + 2 * m] = 0.5 * rademacher(&mut sign_rng);
                beta[base + 2 * m + 1] = rademacher(&mut sign_rng);
                let cols = fixed(&support(&beta), m as u64);
                datasets.push(generate_dataset(spec, beta, &streams.child(m as u64), cols)?);
            }
            Ok(Scenario { datasets, truth: support(&shared) })
        }
        _ => {
            let truth = support(&shared);
            let cols = fixed(&truth, 0);
            let ds = generate_dataset(spec, shared, &streams.child(0), cols)?;
            Ok(Scenario { datasets: vec![ds], truth })
        }
    }
}
