//! Screening of real-data style CSV files.
//!
//! Preprocessing, in order: drop features with more than 20% missing values,
//! optionally log-transform, then clamp each feature to
//! `[Q1 - 3 IQR, Q3 + 3 IQR]` of its observed values. A QC file, when given,
//! is restricted to the retained features, log-transformed the same way and
//! turned into the error covariance.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::pipeline::{analyze, PipelineConfig};
use crate::data::ObservedData;
use crate::error::{self, Error, Result};
use crate::errorcov::{qc_cov, qc_paired_cov, read_qc_csv, QcOptions};
use crate::impute::CompletedSet;
use crate::filter::{stability_select, SelectionReport, StabilityReport};
use crate::linalg::quantile_sorted;
use crate::rng::{Role, Streams};
use crate::stats::{Family, StatKind};

pub const MISSING_TOKEN: &str = "NA";

/// A parsed data file: outcomes may have missing entries, features carry a
/// mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub outcome_names: Vec<String>,
    pub outcomes: Vec<Vec<Option<f64>>>,
    pub names: Vec<String>,
    pub features: DMatrix<f64>,
    pub observed: DMatrix<bool>,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case(MISSING_TOKEN)
}

/// Read a CSV with a header row. `outcomes` name the outcome columns and
/// `ignore` names columns to skip (identifiers); everything else is a
/// feature.
pub fn read_data_csv<R: Read>(reader: R, outcomes: &[String], ignore: &[String]) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut outcome_cols = Vec::new();
    for name in outcomes {
        match headers.iter().position(|h| h == name) {
            Some(c) => outcome_cols.push(c),
            None => return error::data(format!("outcome column '{name}' not found")),
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|c| !outcome_cols.contains(c) && !ignore.iter().any(|i| i == &headers[*c]))
        .collect();
    if feature_cols.is_empty() {
        return error::data("data file has no feature columns");
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();
    let mut ys = vec![Vec::new(); outcome_cols.len()];
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != headers.len() {
            return error::data(format!("line {line} has {} fields, expected {}", rec.len(), headers.len()));
        }
        let parse = |c: usize| -> Result<f64> {
            rec[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("line {line}, column '{}': cannot parse '{}'", &headers[c], &rec[c])))
        };
        for (m, &c) in outcome_cols.iter().enumerate() {
            ys[m].push(if is_missing(&rec[c]) { None } else { Some(parse(c)?) });
        }
        for &c in &feature_cols {
            if is_missing(&rec[c]) {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                values.push(parse(c)?);
                mask.push(true);
            }
        }
    }
    let n = ys.first().map_or(values.len() / names.len(), |y| y.len());
    for (m, y) in ys.iter().enumerate() {
        if y.iter().all(|v| v.is_none()) {
            return error::data(format!("outcome '{}' is missing in every row", outcomes[m]));
        }
    }
    Ok(DataTable {
        outcome_names: outcomes.to_vec(),
        outcomes: ys,
        names: names.clone(),
        features: DMatrix::from_row_slice(n, names.len(), &values),
        observed: DMatrix::from_row_slice(n, names.len(), &mask),
    })
}

/// Write outcome and features, `NA` in unobserved cells. Numbers use the
/// shortest representation that parses back exactly.
pub fn write_data_csv<W: Write>(out: W, data: &ObservedData, outcome_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![outcome_name.to_string()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![data.outcome[i].to_string()];
        for j in 0..data.p() {
            rec.push(if data.observed[(i, j)] { data.features[(i, j)].to_string() } else { MISSING_TOKEN.to_string() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Stack completed copies into one CSV with a leading `imputation` column
/// (1-based copy number).
pub fn write_imputations_csv<W: Write>(out: W, data: &ObservedData, completed: &CompletedSet, outcome_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["imputation".to_string(), outcome_name.to_string()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header)?;
    for (k, copy) in completed.copies.iter().enumerate() {
        for i in 0..copy.nrows() {
            let mut rec = vec![(k + 1).to_string(), data.outcome[i].to_string()];
            rec.extend((0..copy.ncols()).map(|j| copy[(i, j)].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenOptions {
    pub statistic: StatKind,
    pub pipeline: PipelineConfig,
    /// `None` detects a 0/1 outcome as binomial and anything else as
    /// Gaussian.
    pub family: Option<Family>,
    pub log_transform: bool,
    pub truncate: bool,
    pub max_missing: f64,
    pub qc_paired: bool,
    pub qc_diagonal: bool,
    /// Stability-selection repetitions; `None` runs once.
    pub stability: Option<usize>,
    pub stability_threshold: f64,
    /// Which selection (offset 0 or 1) is reported as "selected".
    pub c: u32,
    pub seed: u64,
}

impl Default for ScreenOptions {
    fn default() -> Self {
        Self {
            statistic: StatKind::LassoCoef,
            pipeline: PipelineConfig { q: 0.1, ..PipelineConfig::default() },
            family: None,
            log_transform: false,
            truncate: true,
            max_missing: 0.2,
            qc_paired: false,
            qc_diagonal: false,
            stability: None,
            stability_threshold: 0.5,
            c: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub family: Family,
    pub names: Vec<String>,
    pub dropped: Vec<String>,
    pub selected_names: Vec<String>,
    pub report: SelectionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
}

impl ScreenResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Clamp to `[Q1 - 3 IQR, Q3 + 3 IQR]` of the observed values.
pub fn truncate_outliers(features: &mut DMatrix<f64>, observed: &DMatrix<bool>) {
    for j in 0..features.ncols() {
        let mut v: Vec<f64> = (0..features.nrows()).filter(|&i| observed[(i, j)]).map(|i| features[(i, j)]).collect();
        if v.len() < 4 {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let (lo, hi) = (q1 - 3.0 * (q3 - q1), q3 + 3.0 * (q3 - q1));
        for i in 0..features.nrows() {
            if observed[(i, j)] {
                features[(i, j)] = features[(i, j)].clamp(lo, hi);
            }
        }
    }
}

fn log_in_place(values: &mut DMatrix<f64>, observed: Option<&DMatrix<bool>>, names: &[String]) -> Result<()> {
    for j in 0..values.ncols() {
        for i in 0..values.nrows() {
            if observed.is_some_and(|m| !m[(i, j)]) {
                continue;
            }
            let v = values[(i, j)];
            if v <= 0.0 {
                return error::data(format!("cannot log-transform value {v} in row {} of '{}'", i + 1, names[j]));
            }
            values[(i, j)] = v.ln();
        }
    }
    Ok(())
}

/// Apply the feature filter and transforms; returns the retained table and
/// the dropped feature names.
pub fn preprocess(table: &DataTable, opts: &ScreenOptions) -> Result<(DataTable, Vec<String>)> {
    let n = table.features.nrows();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..table.names.len() {
        let missing = (0..n).filter(|&i| !table.observed[(i, j)]).count();
        if missing as f64 > opts.max_missing * n as f64 {
            warn!("dropping feature '{}': {:.1}% missing", table.names[j], 100.0 * missing as f64 / n as f64);
            dropped.push(table.names[j].clone());
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return error::data("every feature exceeds the missingness limit");
    }
    let names: Vec<String> = keep.iter().map(|&j| table.names[j].clone()).collect();
    let mut features = table.features.select_columns(&keep);
    let observed = table.observed.select_columns(&keep);
    if opts.log_transform {
        log_in_place(&mut features, Some(&observed), &names)?;
    }
    if opts.truncate {
        truncate_outliers(&mut features, &observed);
    }
    Ok((DataTable { names, features, observed, ..table.clone() }, dropped))
}

fn detect_family(y: &[f64]) -> Family {
    if y.iter().all(|v| *v == 0.0 || *v == 1.0) {
        Family::Binomial
    } else {
        Family::Gaussian
    }
}

/// One dataset per outcome, each restricted to the rows where that outcome
/// is present.
pub fn outcome_datasets(table: &DataTable, sigma: Option<&DMatrix<f64>>) -> Result<Vec<ObservedData>> {
    table
        .outcomes
        .iter()
        .enumerate()
        .map(|(m, y)| {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
            if rows.len() < y.len() {
                info!("outcome '{}': {} rows with missing outcome excluded", table.outcome_names[m], y.len() - rows.len());
            }
            let outcome = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i].unwrap_or(f64::NAN)));
            let data = ObservedData::new(outcome, table.features.select_rows(&rows), table.observed.select_rows(&rows))?
                .with_names(table.names.clone())?;
            match sigma {
                Some(s) => data.with_error_cov(s.clone()),
                None => Ok(data),
            }
        })
        .collect()
}

/// Run the pipeline (and optional stability selection) on prepared
/// datasets, one per outcome.
pub fn screen_observed(datasets: &[ObservedData], opts: &ScreenOptions) -> Result<ScreenResult> {
    if datasets.is_empty() {
        return error::data("no outcome data");
    }
    if opts.statistic.needs_error_cov() && datasets.iter().any(|d| d.error_cov.is_none()) {
        return Err(Error::Config(format!("statistic {} needs a QC file for the error covariance", opts.statistic)));
    }
    let family = opts.family.unwrap_or_else(|| {
        let all: Vec<f64> = datasets.iter().flat_map(|d| d.outcome.iter().copied()).collect();
        detect_family(&all)
    });
    let root = Streams::new(opts.seed);
    let report = analyze(datasets, family, opts.statistic, &opts.pipeline, &root)?;
    let stability = match opts.stability {
        None => None,
        Some(reps) => {
            let base = root.role(Role::Stability);
            Some(stability_select(datasets[0].p(), reps, |r| {
                Ok(analyze(datasets, family, opts.statistic, &opts.pipeline, &base.child(r as u64))?.selected(opts.c).to_vec())
            })?)
        }
    };
    let names = datasets[0].names.clone();
    let selected_names = match &stability {
        Some(s) => s.stable(opts.stability_threshold).into_iter().map(|j| names[j].clone()).collect(),
        None => report.selected(opts.c).iter().map(|&j| names[j].clone()).collect(),
    };
    Ok(ScreenResult { family, names, dropped: Vec::new(), selected_names, report, stability })
}

/// Read, preprocess and screen a data file, with an optional QC file.
pub fn screen_files(data_path: &Path, qc_path: Option<&Path>, outcomes: &[String], ignore: &[String], opts: &ScreenOptions) -> Result<ScreenResult> {
    if outcomes.is_empty() || outcomes.len() > 2 {
        return Err(Error::Config("give one outcome column, or two for simultaneous screening".into()));
    }
    if opts.statistic.needs_error_cov() && qc_path.is_none() {
        return Err(Error::Config(format!("statistic {} needs a QC file (--qc)", opts.statistic)));
    }
    let table = read_data_csv(File::open(data_path)?, outcomes, ignore)?;
    let (table, dropped) = preprocess(&table, opts)?;
    let sigma = match qc_path {
        Some(path) => {
            let mut qc = read_qc_csv(File::open(path)?)?.restrict_to(&table.names)?;
            if opts.log_transform {
                log_in_place(&mut qc.values, None, &qc.names)?;
            }
            let qopts = QcOptions { diagonal: opts.qc_diagonal, ..QcOptions::default() };
            let e = if opts.qc_paired { qc_paired_cov(&qc, qopts)? } else { qc_cov(&qc, qopts)? };
            Some(e.matrix().clone())
        }
        None => None,
    };
    let datasets = outcome_datasets(&table, sigma.as_ref())?;
    let mut result = screen_observed(&datasets, opts)?;
    result.dropped = dropped;
    Ok(result)
}
