//! Simulation replicates, summaries and file-based screening.
//!
//! A replicate generates data from the configured scenario, runs the
//! selection pipeline for every requested statistic on shared imputations
//! and knockoffs, and scores the selections against the true signal set.
//! Replicate `r` draws only from the `r`-th replicate stream, so results do
//! not depend on scheduling.

pub mod pipeline;
pub mod screen;

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::{generate_scenario_with_root, ScenarioSpec, Setting};
use crate::error::{param, Error, Result};
use crate::rng::Streams;
use crate::stats::{Family, StatKind};

pub use pipeline::{analyze, analyze_many, PipelineConfig};

/// Stream tag separating analysis draws from data generation.
const ANALYSIS: u64 = 0xA7A1_0000;

/// A full simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(flatten)]
    pub scenario: ScenarioSpec,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub statistics: Vec<StatKind>,
    /// SeqStep offset: 1 for SeqStep+ (knockoff+), 0 for the plain version.
    pub c: u32,
    pub replicates: usize,
    pub seed: u64,
}

/// Recursively overlay `over` onto `base`; objects merge key by key.
pub fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl SimConfig {
    /// Preset scenario with a Lasso statistic, q = 0.2, c = 1 and 50
    /// replicates.
    pub fn preset(setting: Setting, seed: u64) -> Self {
        Self {
            scenario: ScenarioSpec::preset(setting),
            pipeline: PipelineConfig::default(),
            statistics: vec![StatKind::LassoCoef],
            c: 1,
            replicates: 50,
            seed,
        }
    }

    /// Parse JSON where only `setting` is required; other fields override
    /// the preset for that setting.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let setting: Setting = match value.get("setting") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?,
            None => return Err(Error::Config("configuration needs a 'setting' field".into())),
        };
        let mut base = serde_json::to_value(Self::preset(setting, 0))?;
        merge_json(&mut base, value);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(as_config)?;
        self.pipeline.validate().map_err(as_config)?;
        if self.statistics.is_empty() {
            return Err(Error::Config("at least one statistic is required".into()));
        }
        if self.c > 1 {
            return Err(Error::Config(format!("c must be 0 or 1, got {}", self.c)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        Ok(())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Config(m),
        other => other,
    }
}

/// `(FDP, power)`; power is `None` when the truth is empty.
pub fn fdp_power(selected: &[usize], truth: &[usize], p: usize) -> Result<(f64, Option<f64>)> {
    if selected.iter().chain(truth).any(|&j| j >= p) {
        return param("index out of range");
    }
    let hits = selected.iter().filter(|j| truth.contains(j)).count();
    let fdp = (selected.len() - hits) as f64 / selected.len().max(1) as f64;
    let power = if truth.is_empty() { None } else { Some(hits as f64 / truth.len() as f64) };
    Ok((fdp, power))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub statistic: StatKind,
    pub fdp: Option<f64>,
    pub power: Option<f64>,
    pub selected: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub statistic: StatKind,
    pub completed: usize,
    pub aborted: usize,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: Option<f64>,
    pub se_power: Option<f64>,
    pub mean_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SimConfig,
    pub methods: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateRecord>,
    /// Not serialized, so repeated runs give identical reports.
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Run replicate `r` of `cfg`: one record per statistic.
pub fn run_replicate(cfg: &SimConfig, r: usize) -> Vec<ReplicateRecord> {
    let root = Streams::new(cfg.seed);
    let rep = root.replicate(r);
    let failed = |e: &Error| -> Vec<ReplicateRecord> {
        warn!("replicate {r} aborted: {e}");
        cfg.statistics
            .iter()
            .map(|&s| ReplicateRecord { replicate: r, statistic: s, fdp: None, power: None, selected: vec![], error: Some(e.to_string()) })
            .collect()
    };
    let scenario = match generate_scenario_with_root(&cfg.scenario, &rep, Some(&root)) {
        Ok(s) => s,
        Err(e) => return failed(&e),
    };
    let observed: Result<Vec<_>> = scenario.datasets.iter().map(|d| d.to_observed()).collect();
    let observed = match observed {
        Ok(o) => o,
        Err(e) => return failed(&e),
    };
    let reports = match analyze_many(&observed, Family::Binomial, &cfg.statistics, &cfg.pipeline, &rep.child(ANALYSIS)) {
        Ok(r) => r,
        Err(e) => return failed(&e),
    };
    cfg.statistics
        .iter()
        .zip(reports)
        .map(|(&statistic, report)| match report {
            Ok(report) => {
                let selected = report.selected(cfg.c).to_vec();
                let (fdp, power) = fdp_power(&selected, &scenario.truth, cfg.scenario.p).expect("selection within range");
                ReplicateRecord { replicate: r, statistic, fdp: Some(fdp), power, selected, error: None }
            }
            Err(e) => {
                warn!("replicate {r}, {statistic}: {e}");
                ReplicateRecord { replicate: r, statistic, fdp: None, power: None, selected: vec![], error: Some(e.to_string()) }
            }
        })
        .collect()
}

/// All replicates in parallel, summarized per statistic.
pub fn run_replicates(cfg: &SimConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let records: Vec<ReplicateRecord> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let recs = run_replicate(cfg, r);
            info!("replicate {r} done");
            recs
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let methods = cfg
        .statistics
        .iter()
        .map(|&statistic| {
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.statistic == statistic).collect();
            let fdps: Vec<f64> = mine.iter().filter_map(|r| r.fdp).collect();
            let powers: Vec<f64> = mine.iter().filter(|r| r.fdp.is_some()).filter_map(|r| r.power).collect();
            let sizes: Vec<f64> = mine.iter().filter(|r| r.fdp.is_some()).map(|r| r.selected.len() as f64).collect();
            let (mean_fdp, se_fdp) = mean_se(&fdps);
            let (mean_power, se_power) = if powers.is_empty() { (None, None) } else {
                let (m, s) = mean_se(&powers);
                (Some(m), Some(s))
            };
            MethodSummary {
                statistic,
                completed: fdps.len(),
                aborted: mine.len() - fdps.len(),
                mean_fdp,
                se_fdp,
                mean_power,
                se_power,
                mean_selected: mean_se(&sizes).0,
            }
        })
        .collect();
    Ok(RunSummary { config: cfg.clone(), methods, replicates: records, wall_seconds: start.elapsed().as_secs_f64() })
}

impl RunSummary {
    pub fn method(&self, statistic: StatKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.statistic == statistic)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One CSV row per statistic with the scenario columns repeated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "setting", "n", "p", "a_beta", "sigma2_eps", "pi_mis", "p_mis", "mis_basis", "impute", "k", "statistic", "q", "c",
            "fdp", "se_fdp", "power", "se_power", "completed", "aborted",
        ])?;
        let s = &self.config.scenario;
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        for m in &self.methods {
            w.write_record([
                s.setting.to_string(),
                s.n.to_string(),
                s.p.to_string(),
                s.a_beta.to_string(),
                s.sigma2_eps.to_string(),
                s.pi_mis.to_string(),
                s.p_mis.to_string(),
                serde_json::to_value(s.mis_basis)?.as_str().unwrap_or("").to_string(),
                serde_json::to_value(self.config.pipeline.impute.method)?.as_str().unwrap_or("").to_string(),
                self.config.pipeline.impute.k.to_string(),
                m.statistic.to_string(),
                self.config.pipeline.q.to_string(),
                self.config.c.to_string(),
                m.mean_fdp.to_string(),
                m.se_fdp.to_string(),
                opt(m.mean_power),
                opt(m.se_power),
                m.completed.to_string(),
                m.aborted.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text table in the layout of a results table: one row per
    /// statistic with FDP and power.
    pub fn table(&self) -> String {
        let s = &self.config.scenario;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "setting {} | n {} | p {} | A {} | sigma2_eps {} | pi_mis {:.3} | p_mis {} | q {} | c {} | {} replicates",
            s.setting, s.n, s.p, s.a_beta, s.sigma2_eps, s.pi_mis, s.p_mis, self.config.pipeline.q, self.config.c, self.config.replicates
        );
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8}", "statistic", "FDP", "(SE)", "Power", "(SE)", "aborted");
        for m in &self.methods {
            let power = m.mean_power.map_or("NA".into(), |v| format!("{v:.3}"));
            let se_power = m.se_power.map_or("NA".into(), |v| format!("{v:.3}"));
            let _ = writeln!(
                out,
                "{:<16} {:>8.3} {:>8.3} {:>8} {:>8} {:>8}",
                m.statistic.name(),
                m.mean_fdp,
                m.se_fdp,
                power,
                se_power,
                m.aborted
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fdp_power_examples() {
        assert_eq!(fdp_power(&[1, 2], &[1, 2], 5).unwrap(), (0.0, Some(1.0)));
        assert_eq!(fdp_power(&[], &[1, 2], 5).unwrap(), (0.0, Some(0.0)));
        assert_eq!(fdp_power(&[0, 1, 2], &[1, 2, 3, 4], 5).unwrap(), (1.0 / 3.0, Some(0.5)));
        assert_eq!(fdp_power(&[0], &[], 5).unwrap(), (1.0, None));
        assert!(fdp_power(&[7], &[], 5).is_err());
    }

    #[test]
    fn partial_json_overrides_the_preset() {
        let cfg = SimConfig::from_json(r#"{"setting": 2, "p": 120, "sigma2_eps": 1.0, "statistics": ["gmus"], "impute": {"k": 3}, "seed": 9}"#).unwrap();
        assert_eq!(cfg.scenario.p, 120);
        assert_eq!(cfg.scenario.a_beta, 0.5);
        assert_eq!(cfg.pipeline.impute.k, 3);
        assert_eq!(cfg.pipeline.impute.sweeps, 10);
        assert_eq!(cfg.statistics, vec![StatKind::Gmus]);
        assert_eq!(cfg.seed, 9);
        let back = SimConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn inconsistent_settings_are_config_errors() {
        let e = SimConfig::from_json(r#"{"setting": 1, "sigma2_eps": 0.5}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = SimConfig::from_json(r#"{"setting": 2, "pi_mis": 0.1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(SimConfig::from_json(r#"{"n": 10}"#).is_err());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((se - 0.5).abs() < 1e-12);
    }
}
