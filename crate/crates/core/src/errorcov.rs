//! Measurement-error covariance from quality-control (QC) replicates.
//!
//! QC samples are repeated measurements of one pooled specimen, so their
//! spread is pure measurement error. With batches of two QC runs, the
//! within-batch difference cancels any additive batch effect and
//! `Cov(d) / 2` estimates the error covariance. Estimates are pushed to be
//! positive definite by [`psd_repair`].

use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::{info, warn};
use nalgebra::DMatrix;

use crate::error::{self, param, Result};
use crate::linalg::{mean_and_covariance, min_eigenvalue, symmetrize};
use crate::stats::ErrorCov;

pub const DEFAULT_FLOOR: f64 = 1e-4;

/// QC measurements, one row per QC run.
#[derive(Debug, Clone, PartialEq)]
pub struct QcSamples {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub batch: Option<Vec<String>>,
    pub pair: Option<Vec<String>>,
}

impl QcSamples {
    pub fn new(values: DMatrix<f64>) -> Self {
        let names = (0..values.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self { values, names, batch: None, pair: None }
    }

    pub fn with_batches(mut self, batch: Vec<String>) -> Result<Self> {
        if batch.len() != self.values.nrows() {
            return param("one batch label per QC row is required");
        }
        self.batch = Some(batch);
        Ok(self)
    }

    pub fn q(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Keep the named features, in the given order.
    pub fn restrict_to(&self, names: &[String]) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            match self.names.iter().position(|n| n == name) {
                Some(j) => cols.push(j),
                None => return error::data(format!("feature '{name}' is missing from the QC file")),
            }
        }
        Ok(Self {
            values: self.values.select_columns(&cols),
            names: names.to_vec(),
            batch: self.batch.clone(),
            pair: self.pair.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcOptions {
    pub floor: f64,
    /// Keep only the variances.
    pub diagonal: bool,
}

impl Default for QcOptions {
    fn default() -> Self {
        Self { floor: DEFAULT_FLOOR, diagonal: false }
    }
}

fn finish(cov: DMatrix<f64>, rows: usize, opts: QcOptions) -> Result<ErrorCov> {
    let p = cov.nrows();
    let cov = if opts.diagonal {
        DMatrix::from_diagonal(&cov.diagonal())
    } else {
        if rows <= p {
            warn!(
                "QC covariance from {rows} samples has rank at most {} < p = {p}; \
                 consider the diagonal fallback",
                rows - 1
            );
        }
        cov
    };
    ErrorCov::new(psd_repair(&cov, opts.floor)?)
}

/// Sample covariance of the QC rows, repaired.
pub fn qc_cov(qc: &QcSamples, opts: QcOptions) -> Result<ErrorCov> {
    if qc.q() < 2 {
        return error::data(format!("need at least 2 QC samples, got {}", qc.q()));
    }
    let (_, cov) = mean_and_covariance(&qc.values);
    finish(cov, qc.q(), opts)
}

/// Half the sample covariance of within-batch differences, repaired.
/// Every batch must hold exactly two rows; within a batch rows are ordered
/// by the `pair` label when present.
pub fn qc_paired_cov(qc: &QcSamples, opts: QcOptions) -> Result<ErrorCov> {
    let Some(batch) = &qc.batch else {
        return error::data("paired QC estimation needs batch labels");
    };
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, b) in batch.iter().enumerate() {
        groups.entry(b.as_str()).or_default().push(i);
    }
    if let Some((b, rows)) = groups.iter().find(|(_, rows)| rows.len() != 2) {
        return error::data(format!("batch '{b}' has {} QC samples; pairing needs exactly 2", rows.len()));
    }
    if groups.len() < 2 {
        return error::data("paired QC estimation needs at least two batches");
    }
    let p = qc.p();
    let mut diffs = DMatrix::zeros(groups.len(), p);
    for (g, rows) in groups.values().enumerate() {
        let (mut a, mut b) = (rows[0], rows[1]);
        if let Some(pair) = &qc.pair {
            if pair[b] < pair[a] {
                std::mem::swap(&mut a, &mut b);
            }
        }
        for j in 0..p {
            diffs[(g, j)] = qc.values[(a, j)] - qc.values[(b, j)];
        }
    }
    let (_, cov) = mean_and_covariance(&diffs);
    finish(cov * 0.5, groups.len(), opts)
}

/// Shift the correlation form of `m` so that its smallest eigenvalue is at
/// least `floor`, then restore the original variances. Coordinates with
/// zero variance are zeroed out.
pub fn psd_repair(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return param("matrix to repair must be square");
    }
    if !(0.0..1.0).contains(&floor) {
        return param("eigenvalue floor must lie in [0, 1)");
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return param("matrix to repair must be symmetric");
    }
    let p = m.nrows();
    let live: Vec<usize> = (0..p).filter(|&j| m[(j, j)] > 1e-14 * scale).collect();
    for j in (0..p).filter(|j| !live.contains(j)) {
        warn!("coordinate {j} has zero variance; its error variance is set to 0");
    }
    let mut out = DMatrix::zeros(p, p);
    if live.is_empty() {
        return Ok(out);
    }
    let sub = m.select_rows(&live).select_columns(&live);
    let sd: Vec<f64> = live.iter().map(|&j| m[(j, j)].sqrt()).collect();
    let mut corr = DMatrix::from_fn(live.len(), live.len(), |a, b| sub[(a, b)] / (sd[a] * sd[b]));
    corr.fill_diagonal(1.0);
    let lmin = min_eigenvalue(&corr);
    let repaired = if lmin < floor {
        let shift = (floor - lmin) / (1.0 - floor);
        info!("repairing covariance: minimum correlation eigenvalue {lmin:.3e}, diagonal shift {shift:.3e}");
        let mut c = corr;
        for d in 0..c.nrows() {
            c[(d, d)] += shift;
        }
        let c = c / (1.0 + shift);
        symmetrize(DMatrix::from_fn(live.len(), live.len(), |a, b| {
            if a == b {
                sd[a] * sd[a]
            } else {
                c[(a, b)] * sd[a] * sd[b]
            }
        }))
    } else {
        sub
    };
    for (a, &i) in live.iter().enumerate() {
        for (b, &j) in live.iter().enumerate() {
            out[(i, j)] = repaired[(a, b)];
        }
    }
    Ok(out)
}

/// Read a QC CSV: a header of feature names plus optional `batch` and
/// `pair` columns. Rows containing `NA` are dropped.
pub fn read_qc_csv<R: Read>(reader: R) -> Result<QcSamples> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let batch_col = headers.iter().position(|h| h == "batch");
    let pair_col = headers.iter().position(|h| h == "pair");
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|c| Some(*c) != batch_col && Some(*c) != pair_col).collect();
    if feature_cols.is_empty() {
        return error::data("QC file has no feature columns");
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();
    let mut values = Vec::new();
    let mut batch = Vec::new();
    let mut pair = Vec::new();
    let mut dropped = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return error::data(format!("QC row {} has {} fields, expected {}", line + 2, rec.len(), headers.len()));
        }
        if feature_cols.iter().any(|&c| rec[c].eq_ignore_ascii_case("NA") || rec[c].is_empty()) {
            dropped += 1;
            continue;
        }
        for &c in &feature_cols {
            let v: f64 = rec[c].parse().map_err(|_| {
                crate::Error::Data(format!("QC row {}, column '{}': cannot parse '{}'", line + 2, &headers[c], &rec[c]))
            })?;
            values.push(v);
        }
        if let Some(c) = batch_col {
            batch.push(rec[c].to_string());
        }
        if let Some(c) = pair_col {
            pair.push(rec[c].to_string());
        }
    }
    if dropped > 0 {
        info!("dropped {dropped} QC rows containing NA");
    }
    let q = values.len() / names.len();
    Ok(QcSamples {
        values: DMatrix::from_row_slice(q, names.len(), &values),
        names,
        batch: batch_col.map(|_| batch),
        pair: pair_col.map(|_| pair),
    })
}

/// Write a covariance matrix as CSV: a `feature` column followed by one
/// column per feature.
pub fn write_cov_csv<W: Write>(out: W, names: &[String], cov: &DMatrix<f64>) -> Result<()> {
    if names.len() != cov.nrows() || !cov.is_square() {
        return param("covariance and name list disagree in size");
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["feature".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..cov.ncols()).map(|j| cov[(i, j)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
