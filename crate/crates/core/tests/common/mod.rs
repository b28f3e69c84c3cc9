//! Oracles and fixtures shared by the integration test targets. Each oracle
//! is written from the textbook definition, not from the library code.
#![allow(dead_code)]

use knockoff_mem::data::ObservedData;
use knockoff_mem::datagen::{generate_scenario, ScenarioSpec, Setting};
use knockoff_mem::rng::Streams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute force: try every prefix length and keep the largest whose
/// estimated FDP `(c + #{p > 1/2}) / max(1, #{p <= 1/2})` is at most `q`.
pub fn seqstep_bruteforce(p: &[f64], q: f64, c: u32) -> usize {
    let mut best = 0;
    for k in 1..=p.len() {
        let prefix = &p[..k];
        let above = prefix.iter().filter(|&&v| v > 0.5).count();
        let below = prefix.len() - above;
        if (c as f64 + above as f64) / below.max(1) as f64 <= q {
            best = k;
        }
    }
    best
}

/// The knockoff+ filter on signed statistics: threshold
/// `T = min{t > 0 : (offset + #{W <= -t}) / max(1, #{W >= t}) <= q}` over
/// `t` in `{|W_j|}`, selecting `{j : W_j >= T}`.
pub fn knockoff_filter(w: &[f64], q: f64, offset: u32) -> Vec<usize> {
    let mut ts: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&t| t > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    for &t in &ts {
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let pos = w.iter().filter(|&&v| v >= t).count();
        if (offset as f64 + neg as f64) / pos.max(1) as f64 <= q {
            return (0..w.len()).filter(|&j| w[j] >= t).collect();
        }
    }
    Vec::new()
}

/// Signed-max statistic `max(z, z~) * sign(z - z~)`.
pub fn signed_max(z: &[f64], zt: &[f64]) -> Vec<f64> {
    z.iter().zip(zt).map(|(&a, &b)| a.max(b) * (a - b).signum()).collect()
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

/// Columns orthogonal to the intercept and to each other, scaled so that
/// `(1/n) Σ x² = 1`.
pub fn orthonormal_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let mut a = DMatrix::from_fn(n, p + 1, |_, _| r.random::<f64>() - 0.5);
    a.column_mut(0).fill(1.0);
    let q = a.qr().q();
    DMatrix::from_fn(n, p, |i, j| q[(i, j + 1)] * (n as f64).sqrt())
}

/// Unbiased sample covariance of the columns.
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let means = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &means;
    }
    c.tr_mul(&c) / (n - 1.0)
}

/// Central finite-difference gradient.
pub fn numeric_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let mut up = x.clone();
        let mut down = x.clone();
        up[j] += h;
        down[j] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// A small scenario dataset for fast pipeline tests.
pub fn small_dataset(setting: Setting, n: usize, p: usize, seed: u64) -> (Vec<ObservedData>, Vec<usize>) {
    let mut spec = ScenarioSpec::preset(setting);
    spec.n = n;
    spec.p = p;
    let scenario = generate_scenario(&spec, &Streams::new(seed)).expect("scenario");
    let data = scenario.datasets.iter().map(|d| d.to_observed().expect("observed")).collect();
    (data, scenario.truth)
}

/// Observed cells of `data` are reproduced exactly in `completed`.
pub fn preserves_observed(data: &ObservedData, completed: &DMatrix<f64>) -> bool {
    (0..data.n()).all(|i| (0..data.p()).all(|j| !data.observed[(i, j)] || completed[(i, j)] == data.features[(i, j)]))
}
