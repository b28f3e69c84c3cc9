use nalgebra::{DMatrix, DVector};

use crate::error::{data, param, Result};

/// Outcome, incomplete feature matrix, observation mask and (optionally)
/// the known measurement-error covariance of the features.
///
/// `observed[(i, j)]` is `true` when cell `(i, j)` was measured. Values in
/// unobserved cells are stored as `NaN` and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub outcome: DVector<f64>,
    pub features: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    pub names: Vec<String>,
    pub error_cov: Option<DMatrix<f64>>,
}

impl ObservedData {
    pub fn new(outcome: DVector<f64>, features: DMatrix<f64>, observed: DMatrix<bool>) -> Result<Self> {
        let (n, p) = features.shape();
        if outcome.len() != n {
            return param(format!("outcome has {} rows, features have {n}", outcome.len()));
        }
        if observed.shape() != (n, p) {
            return param("mask shape does not match the feature matrix");
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return data("outcome contains non-finite values");
        }
        let mut features = features;
        for j in 0..p {
            for i in 0..n {
                if observed[(i, j)] {
                    if !features[(i, j)].is_finite() {
                        return data(format!("non-finite observed value at row {i}, column {j}"));
                    }
                } else {
                    features[(i, j)] = f64::NAN;
                }
            }
        }
        let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
        Ok(Self { outcome, features, observed, names, error_cov: None })
    }

    /// Fully observed data.
    pub fn complete(outcome: DVector<f64>, features: DMatrix<f64>) -> Result<Self> {
        let observed = DMatrix::from_element(features.nrows(), features.ncols(), true);
        Self::new(outcome, features, observed)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return param("feature name count does not match the number of columns");
        }
        self.names = names;
        Ok(self)
    }

    pub fn with_error_cov(mut self, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (self.p(), self.p()) {
            return param("error covariance must be p x p");
        }
        self.error_cov = Some(cov);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn missing_in_column(&self, j: usize) -> usize {
        self.observed.column(j).iter().filter(|o| !**o).count()
    }

    pub fn has_missing(&self) -> bool {
        self.observed.iter().any(|o| !*o)
    }

    /// Observed values of column `j`, in row order.
    pub fn observed_values(&self, j: usize) -> Vec<f64> {
        (0..self.n())
            .filter(|&i| self.observed[(i, j)])
            .map(|i| self.features[(i, j)])
            .collect()
    }

    /// Keep only the listed columns.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let features = self.features.select_columns(keep);
        let observed = self.observed.select_columns(keep);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        let error_cov = self.error_cov.as_ref().map(|c| c.select_rows(keep).select_columns(keep));
        Self { outcome: self.outcome.clone(), features, observed, names, error_cov }
    }

    /// Keep only the listed rows.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        Self {
            outcome: self.outcome.select_rows(keep),
            features: self.features.select_rows(keep),
            observed: self.observed.select_rows(keep),
            names: self.names.clone(),
            error_cov: self.error_cov.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_cells_are_blanked() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[true, false, true, true]);
        let d = ObservedData::new(DVector::from_vec(vec![0.0, 1.0]), x, mask).unwrap();
        assert!(d.features[(0, 1)].is_nan());
        assert_eq!(d.missing_in_column(1), 1);
        assert_eq!(d.observed_values(1), vec![4.0]);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let x = DMatrix::zeros(3, 2);
        assert!(ObservedData::complete(DVector::zeros(2), x).is_err());
    }
}
