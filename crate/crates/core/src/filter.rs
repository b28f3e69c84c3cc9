//! Knockoff p-values, feature ordering and Selective SeqStep selection.
//!
//! With `K` imputations and `M` outcomes, feature `j` gets
//!
//! ```text
//! M = 1:  p_j = (1 + #{k : Z_j^k <= Z~_j^k}) / (1 + K)
//! M > 1:  p_j = (1 + #{k : prod_m (Z_j^km - Z~_j^km) <= 0}) / (1 + K)
//! ```
//!
//! Features are ordered by a magnitude key and Selective SeqStep picks the
//! largest prefix whose estimated FDP is at most `q`:
//!
//! ```
//! use knockoff_mem::filter::seqstep;
//!
//! let (k_hat, ratios) = seqstep(&[0.25, 0.25, 1.0, 0.25, 1.0], 0.5, 1).unwrap();
//! assert_eq!(k_hat, 2);
//! assert_eq!(ratios, vec![1.0, 0.5, 1.0, 2.0 / 3.0, 1.0]);
//! ```

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::stats::StatPair;

/// `Z` and `Z~` indexed by imputation `k`, outcome `m` and feature `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatTensor {
    k: usize,
    m: usize,
    p: usize,
    z: Vec<f64>,
    z_tilde: Vec<f64>,
}

impl StatTensor {
    /// Flat arrays in `k`-major, then `m`, then `j` order.
    pub fn new(k: usize, m: usize, p: usize, z: Vec<f64>, z_tilde: Vec<f64>) -> Result<Self> {
        if k == 0 || m == 0 {
            return param("statistic tensor needs K >= 1 and M >= 1");
        }
        if z.len() != k * m * p || z_tilde.len() != k * m * p {
            return param("statistic tensor has missing cells");
        }
        if z.iter().chain(&z_tilde).any(|v| !v.is_finite()) {
            return param("statistic tensor has non-finite entries");
        }
        Ok(Self { k, m, p, z, z_tilde })
    }

    /// `pairs[k][m]` is the statistic for imputation `k` and outcome `m`.
    pub fn from_pairs(pairs: &[Vec<StatPair>]) -> Result<Self> {
        let k = pairs.len();
        let m = pairs.first().map_or(0, |r| r.len());
        let p = pairs.first().and_then(|r| r.first()).map_or(0, |s| s.p());
        let mut z = Vec::with_capacity(k * m * p);
        let mut zt = Vec::with_capacity(k * m * p);
        for row in pairs {
            if row.len() != m {
                return param("every imputation needs one statistic per outcome");
            }
            for s in row {
                if s.p() != p {
                    return param("statistics disagree in feature count");
                }
                z.extend(s.z.iter());
                zt.extend(s.z_tilde.iter());
            }
        }
        Self::new(k, m, p, z, zt)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn idx(&self, k: usize, m: usize, j: usize) -> usize {
        (k * self.m + m) * self.p + j
    }

    pub fn z(&self, k: usize, m: usize, j: usize) -> f64 {
        self.z[self.idx(k, m, j)]
    }

    pub fn z_tilde(&self, k: usize, m: usize, j: usize) -> f64 {
        self.z_tilde[self.idx(k, m, j)]
    }

    fn diff_product(&self, k: usize, j: usize) -> f64 {
        (0..self.m).map(|m| self.z(k, m, j) - self.z_tilde(k, m, j)).product()
    }

    /// Multiply every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            z: self.z.iter().map(|v| v * factor).collect(),
            z_tilde: self.z_tilde.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

pub fn pvalues(t: &StatTensor) -> Vec<f64> {
    let denom = (1 + t.k) as f64;
    (0..t.p)
        .map(|j| {
            let count = (0..t.k)
                .filter(|&k| if t.m == 1 { t.z(k, 0, j) <= t.z_tilde(k, 0, j) } else { t.diff_product(k, j) <= 0.0 })
                .count();
            (1 + count) as f64 / denom
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    /// `max_k max(|Z|, |Z~|)`, single outcome.
    MaxMax,
    /// `max_k prod_m |Z - Z~|`, several outcomes.
    MaxProd,
    /// `sum_k prod_m |Z - Z~|`, several outcomes.
    SumProd,
}

impl OrderMode {
    /// The mode to use when none is given.
    pub fn default_for(outcomes: usize) -> Self {
        if outcomes == 1 {
            OrderMode::MaxMax
        } else {
            OrderMode::MaxProd
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMode::MaxMax => "max_max",
            OrderMode::MaxProd => "max_prod",
            OrderMode::SumProd => "sum_prod",
        })
    }
}

impl FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "max_max" | "maxmax" => Ok(OrderMode::MaxMax),
            "max_prod" | "maxprod" => Ok(OrderMode::MaxProd),
            "sum_prod" | "sumprod" => Ok(OrderMode::SumProd),
            _ => param(format!("unknown ordering mode '{s}'")),
        }
    }
}

pub fn order_keys(t: &StatTensor, mode: OrderMode) -> Result<Vec<f64>> {
    match (mode, t.m) {
        (OrderMode::MaxMax, 1) => Ok((0..t.p)
            .map(|j| (0..t.k).map(|k| t.z(k, 0, j).abs().max(t.z_tilde(k, 0, j).abs())).fold(0.0, f64::max))
            .collect()),
        (OrderMode::MaxProd, m) if m >= 2 => {
            Ok((0..t.p).map(|j| (0..t.k).map(|k| t.diff_product(k, j).abs()).fold(0.0, f64::max)).collect())
        }
        (OrderMode::SumProd, m) if m >= 2 => Ok((0..t.p).map(|j| (0..t.k).map(|k| t.diff_product(k, j).abs()).sum()).collect()),
        (mode, m) => param(format!("ordering mode {mode} does not apply to {m} outcome(s)")),
    }
}

/// Features by decreasing key; ties keep ascending index.
pub fn order_features(t: &StatTensor, mode: OrderMode) -> Result<Vec<usize>> {
    let keys = order_keys(t, mode)?;
    let mut order: Vec<usize> = (0..t.p).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    Ok(order)
}

/// Selective SeqStep(+): returns the cutoff `k_hat` (0 if nothing
/// qualifies) and the estimated FDP at every prefix length.
pub fn seqstep(p_ordered: &[f64], q: f64, c: u32) -> Result<(usize, Vec<f64>)> {
    if !(q > 0.0 && q < 1.0) {
        return param(format!("target FDR q must lie in (0, 1), got {q}"));
    }
    if p_ordered.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return param("p-values must lie in (0, 1]");
    }
    let mut above = 0usize;
    let mut below = 0usize;
    let mut k_hat = 0;
    let mut ratios = Vec::with_capacity(p_ordered.len());
    for (j, &p) in p_ordered.iter().enumerate() {
        if p > 0.5 {
            above += 1;
        } else {
            below += 1;
        }
        let ratio = (c as f64 + above as f64) / below.max(1) as f64;
        if ratio <= q {
            k_hat = j + 1;
        }
        ratios.push(ratio);
    }
    Ok((k_hat, ratios))
}

/// Outcome of the filter; `*_0` uses offset `c = 0`, `*_1` uses `c = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub q: f64,
    pub mode: OrderMode,
    pub p_values: Vec<f64>,
    pub order: Vec<usize>,
    pub order_keys: Vec<f64>,
    pub k_hat_0: usize,
    pub k_hat_1: usize,
    pub selected_0: Vec<usize>,
    pub selected_1: Vec<usize>,
    pub fdp_estimate_0: f64,
    pub fdp_estimate_1: f64,
}

impl SelectionReport {
    pub fn selected(&self, c: u32) -> &[usize] {
        if c == 0 {
            &self.selected_0
        } else {
            &self.selected_1
        }
    }
}

pub fn select(t: &StatTensor, q: f64, mode: Option<OrderMode>) -> Result<SelectionReport> {
    let mode = mode.unwrap_or(OrderMode::default_for(t.m));
    let p_values = pvalues(t);
    let keys = order_keys(t, mode)?;
    let order = order_features(t, mode)?;
    let ordered: Vec<f64> = order.iter().map(|&j| p_values[j]).collect();
    let cut = |c: u32| -> Result<(usize, Vec<usize>, f64)> {
        let (k_hat, ratios) = seqstep(&ordered, q, c)?;
        let mut sel: Vec<usize> = order[..k_hat].iter().copied().filter(|&j| p_values[j] <= 0.5).collect();
        sel.sort_unstable();
        let fdp = if k_hat == 0 { 0.0 } else { ratios[k_hat - 1] };
        Ok((k_hat, sel, fdp))
    };
    let (k_hat_0, selected_0, fdp_estimate_0) = cut(0)?;
    let (k_hat_1, selected_1, fdp_estimate_1) = cut(1)?;
    Ok(SelectionReport {
        q,
        mode,
        p_values,
        order,
        order_keys: keys,
        k_hat_0,
        k_hat_1,
        selected_0,
        selected_1,
        fdp_estimate_0,
        fdp_estimate_1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub repetitions: usize,
    pub frequency: Vec<f64>,
}

impl StabilityReport {
    /// Features selected in at least `threshold` of the repetitions.
    pub fn stable(&self, threshold: f64) -> Vec<usize> {
        (0..self.frequency.len()).filter(|&j| self.frequency[j] >= threshold).collect()
    }
}

/// Run `pipeline(r)` for `r = 0..repetitions` and count how often each of
/// the `p` features is selected. The pipeline must derive all randomness
/// from `r`.
pub fn stability_select<F>(p: usize, repetitions: usize, pipeline: F) -> Result<StabilityReport>
where
    F: Fn(usize) -> Result<Vec<usize>> + Sync,
{
    if repetitions < 1 {
        return param("stability selection needs at least one repetition");
    }
    let counts = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let mut c = vec![0usize; p];
            for j in pipeline(r)? {
                if j >= p {
                    return param(format!("pipeline selected feature {j} but p = {p}"));
                }
                c[j] += 1;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(vec![0usize; p], |mut acc, c| {
            acc.iter_mut().zip(c).for_each(|(a, b)| *a += b.min(1));
            acc
        });
    Ok(StabilityReport {
        repetitions,
        frequency: counts.iter().map(|&c| c as f64 / repetitions as f64).collect(),
    })
}

#[derive(Serialize)]
struct FeatureRow<'a> {
    index: usize,
    feature: &'a str,
    p_value: f64,
    order_rank: usize,
    selected_0: bool,
    selected_1: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    frequency: Option<f64>,
}

/// One CSV row per feature; `order_rank` is 1-based.
pub fn write_selection_csv<W: Write>(
    out: W,
    report: &SelectionReport,
    names: &[String],
    stability: Option<&StabilityReport>,
) -> Result<()> {
    let p = report.p_values.len();
    if names.len() != p {
        return param("feature names do not match the report");
    }
    let mut rank = vec![0; p];
    for (r, &j) in report.order.iter().enumerate() {
        rank[j] = r + 1;
    }
    let mut w = csv::Writer::from_writer(out);
    for j in 0..p {
        w.serialize(FeatureRow {
            index: j,
            feature: &names[j],
            p_value: report.p_values[j],
            order_rank: rank[j],
            selected_0: report.selected_0.binary_search(&j).is_ok(),
            selected_1: report.selected_1.binary_search(&j).is_ok(),
            frequency: stability.map(|s| s.frequency[j]),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(z: &[f64], zt: &[f64]) -> StatTensor {
        StatTensor::new(1, 1, z.len(), z.to_vec(), zt.to_vec()).unwrap()
    }

    #[test]
    fn pvalue_examples() {
        assert_eq!(pvalues(&single(&[2.0], &[1.0])), vec![0.5]);
        let z = vec![1.0, 0.0, 3.0, 0.0, 2.0];
        let zt = vec![0.0, 1.0, 0.0, 0.5, 1.0];
        let t = StatTensor::new(5, 1, 1, z, zt).unwrap();
        assert_eq!(pvalues(&t), vec![0.5]);
        let t = StatTensor::new(1, 2, 1, vec![2.0, 3.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(pvalues(&t), vec![0.5]);
        let t = StatTensor::new(1, 2, 1, vec![2.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(pvalues(&t), vec![1.0]);
    }

    #[test]
    fn ordering_examples() {
        let t = single(&[0.0; 5], &[0.0; 5]);
        assert_eq!(order_features(&t, OrderMode::MaxMax).unwrap(), vec![0, 1, 2, 3, 4]);
        let t = single(&[5.0, 1.0, 3.0], &[0.0, 0.0, 0.0]);
        assert_eq!(order_features(&t, OrderMode::MaxMax).unwrap(), vec![0, 2, 1]);
        let t = single(&[0.0, 2.0, 1.0, 2.0], &[0.0; 4]);
        assert_eq!(order_features(&t, OrderMode::MaxMax).unwrap(), vec![1, 3, 2, 0]);
        assert!(order_features(&t, OrderMode::MaxProd).is_err());
        let t2 = StatTensor::new(1, 2, 1, vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(order_features(&t2, OrderMode::MaxMax).is_err());
    }

    #[test]
    fn seqstep_examples() {
        let (k, _) = seqstep(&[1.0; 6], 0.2, 1).unwrap();
        assert_eq!(k, 0);
        let p = [0.25, 0.25, 1.0, 0.25, 1.0];
        let (k, r) = seqstep(&p, 0.5, 0).unwrap();
        assert_eq!(k, 4);
        assert_eq!(r, vec![0.0, 0.0, 0.5, 1.0 / 3.0, 2.0 / 3.0]);
        assert!(seqstep(&p, 1.0, 1).is_err());
        assert!(seqstep(&[0.0], 0.2, 1).is_err());
    }

    #[test]
    fn selection_requires_small_pvalue() {
        let t = single(&[5.0, 4.0, 3.0, 2.0, 0.0], &[0.0, 0.0, 0.0, 0.0, 1.0]);
        let r = select(&t, 0.3, None).unwrap();
        assert_eq!(r.selected_0, vec![0, 1, 2, 3]);
        assert!(r.selected_1.iter().all(|&j| r.p_values[j] <= 0.5));
        let empty = select(&single(&[0.0, 0.0], &[1.0, 1.0]), 0.2, None).unwrap();
        assert_eq!(empty.k_hat_1, 0);
        assert!(empty.selected_1.is_empty());
    }

    #[test]
    fn stability_counts() {
        let r = stability_select(4, 10, |_| Ok(vec![1, 2])).unwrap();
        assert_eq!(r.frequency, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(r.stable(0.5), vec![1, 2]);
        assert!(stability_select(4, 0, |_| Ok(vec![])).is_err());
        let r = stability_select(3, 7, |rep| Ok(if rep % 2 == 0 { vec![0] } else { vec![0, 2] })).unwrap();
        assert_eq!(r.frequency, vec![1.0, 0.0, 3.0 / 7.0]);
    }

    #[test]
    fn csv_has_one_row_per_feature() {
        let t = single(&[3.0, 0.0], &[0.0, 1.0]);
        let r = select(&t, 0.5, None).unwrap();
        let mut buf = Vec::new();
        write_selection_csv(&mut buf, &r, &["a".into(), "b".into()], None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("index,feature,p_value,order_rank,selected_0,selected_1"));
    }
}
