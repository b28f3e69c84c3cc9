//! One pass of the selection procedure on observed data.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::data::ObservedData;
use crate::error::{param, Error, Result};
use crate::filter::{select, OrderMode, SelectionReport, StatTensor};
use crate::impute::{impute, CompletedSet, ImputeConfig};
use crate::knockoff::{knockoff_copies, KnockoffConfig};
use crate::rng::Streams;
use crate::stats::{compute, AugmentedDesign, ErrorCov, Family, StatKind, StatOptions, StatPair};

/// Everything downstream of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub impute: ImputeConfig,
    pub knockoff: KnockoffConfig,
    pub stats: StatOptions,
    pub q: f64,
    /// `None` uses MaxMax for one outcome and MaxProd for several.
    pub mode: Option<OrderMode>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            impute: ImputeConfig::default(),
            knockoff: KnockoffConfig::default(),
            stats: StatOptions::default(),
            q: 0.2,
            mode: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.impute.validate()?;
        self.stats.validate()?;
        if !(self.q > 0.0 && self.q < 1.0) {
            return param(format!("q must lie in (0, 1), got {}", self.q));
        }
        Ok(())
    }
}

fn error_cov(data: &ObservedData, kind: StatKind) -> Result<Option<ErrorCov>> {
    match &data.error_cov {
        Some(m) => Ok(Some(ErrorCov::new(m.clone())?)),
        None if kind.needs_error_cov() => {
            Err(Error::Config(format!("statistic {kind} needs a measurement-error covariance (QC file)")))
        }
        None => Ok(None),
    }
}

/// Number of completed copies the pipeline works with: K when some dataset
/// needs multiple imputation, otherwise 1.
pub fn copies_needed(datasets: &[ObservedData], cfg: &ImputeConfig) -> usize {
    if cfg.method.is_multiple() && datasets.iter().any(|d| d.has_missing()) {
        cfg.k
    } else {
        1
    }
}

/// `copies` completed matrices for one outcome dataset; fully observed data
/// is repeated as is.
pub fn complete(data: &ObservedData, cfg: &ImputeConfig, copies: usize, streams: &Streams) -> Result<CompletedSet> {
    if data.has_missing() {
        impute(data, cfg, streams)
    } else {
        Ok(CompletedSet { copies: vec![data.features.clone(); copies], observed: data.observed.clone() })
    }
}

/// Statistic pairs `[k][m]` for each requested kind, with knockoffs and
/// designs shared across kinds. `datasets[m]` carries outcome `m`; all
/// must have the same features. A failing statistic only fails its own
/// entry; imputation and knockoff failures fail the whole call.
pub fn statistic_pairs(
    datasets: &[ObservedData],
    family: Family,
    kinds: &[StatKind],
    cfg: &PipelineConfig,
    streams: &Streams,
) -> Result<Vec<Result<Vec<Vec<StatPair>>>>> {
    cfg.validate()?;
    if datasets.is_empty() || kinds.is_empty() {
        return param("need at least one dataset and one statistic");
    }
    let p = datasets[0].p();
    if datasets.iter().any(|d| d.p() != p) {
        return param("all outcome datasets must share the same features");
    }
    let copies = copies_needed(datasets, &cfg.impute);
    let sigmas: Vec<Vec<Option<ErrorCov>>> = datasets
        .iter()
        .map(|d| kinds.iter().map(|&k| error_cov(d, k)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    // out[kind][k][m]
    let mut out: Vec<Result<Vec<Vec<StatPair>>>> = kinds.iter().map(|_| Ok(vec![Vec::new(); copies])).collect();
    for (m, data) in datasets.iter().enumerate() {
        let s = streams.child(m as u64);
        let completed = complete(data, &cfg.impute, copies, &s)?;
        let knockoffs = knockoff_copies(&completed, &cfg.knockoff, &s)?;
        for (k, (w, wt)) in completed.copies.iter().zip(&knockoffs).enumerate() {
            let design = AugmentedDesign::new(w, wt, &data.outcome, family, &s.child(k as u64))?;
            for (i, &kind) in kinds.iter().enumerate() {
                let Ok(slots) = &mut out[i] else { continue };
                match compute(kind, &design, sigmas[m][i].as_ref(), &cfg.stats) {
                    Ok(pair) => slots[k].push(pair),
                    Err(e) => {
                        debug!("outcome {m}, copy {k}: {kind} failed: {e}");
                        out[i] = Err(e);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Full procedure for several statistics on the same knockoffs; one result
/// per statistic.
pub fn analyze_many(
    datasets: &[ObservedData],
    family: Family,
    kinds: &[StatKind],
    cfg: &PipelineConfig,
    streams: &Streams,
) -> Result<Vec<Result<SelectionReport>>> {
    Ok(statistic_pairs(datasets, family, kinds, cfg, streams)?
        .into_iter()
        .map(|pairs| select(&StatTensor::from_pairs(&pairs?)?, cfg.q, cfg.mode))
        .collect())
}

pub fn analyze(datasets: &[ObservedData], family: Family, kind: StatKind, cfg: &PipelineConfig, streams: &Streams) -> Result<SelectionReport> {
    analyze_many(datasets, family, &[kind], cfg, streams)?.remove(0)
}
