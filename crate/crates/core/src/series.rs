//! Observed data: an ordinal path and its aligned covariate design.

use serde::{Deserialize, Serialize};

use crate::error::{AcarError, Result};

/// A path of ordinal levels in `{0, …, K}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalSeries {
    k: usize,
    levels: Vec<usize>,
}

impl OrdinalSeries {
    pub fn new(k: usize, levels: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(AcarError::InvalidInput("K must be at least 1".into()));
        }
        if let Some((t, &l)) = levels.iter().enumerate().find(|(_, &l)| l > k) {
            return Err(AcarError::InvalidInput(format!(
                "level {l} at position {t} exceeds K = {k}"
            )));
        }
        Ok(Self { k, levels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn level(&self, t: usize) -> usize {
        self.levels[t]
    }

    /// `Ȳ_t = (Y_{1,t}, …, Y_{K,t})`; level 0 is the all-zero vector.
    pub fn one_hot(&self, t: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        let l = self.levels[t];
        if l > 0 {
            v[l - 1] = 1.0;
        }
        v
    }

    pub fn one_hot_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|t| self.one_hot(t)).collect()
    }

    /// Inverse of [`one_hot_matrix`](Self::one_hot_matrix).
    pub fn from_one_hot(k: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut levels = Vec::with_capacity(rows.len());
        for (t, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(AcarError::DimensionMismatch(format!(
                    "one-hot row {t} has {} entries, expected {k}",
                    row.len()
                )));
            }
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(j, _)| j)
                .collect();
            if ones.len() > 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(AcarError::InvalidInput(format!(
                    "row {t} is not a valid one-hot encoding"
                )));
            }
            levels.push(ones.first().map_or(0, |j| j + 1));
        }
        Self::new(k, levels)
    }

    /// Number of distinct levels that occur in the path.
    pub fn distinct_levels(&self) -> usize {
        let mut seen = vec![false; self.k + 1];
        for &l in &self.levels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }

    /// Empirical frequency of each level `0..=K`.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.k + 1];
        for &l in &self.levels {
            counts[l] += 1.0;
        }
        let n = self.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }
}

/// Row-major `n × P` design matrix. Row `t − 1` drives the latent value at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    column_names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(n: usize, p: usize, values: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.len() != n * p {
            return Err(AcarError::DimensionMismatch(format!(
                "covariate buffer has {} entries, expected {n} x {p}",
                values.len()
            )));
        }
        if column_names.len() != p {
            return Err(AcarError::DimensionMismatch(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AcarError::InvalidInput(format!(
                "non-finite covariate at row {}, column {}",
                i / p.max(1),
                i % p.max(1)
            )));
        }
        Ok(Self {
            n,
            p,
            values,
            column_names,
        })
    }

    /// Columns named `x1..xP`.
    pub fn with_default_names(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(n, p, values, default_names(p))
    }

    pub fn from_rows(rows: &[Vec<f64>], column_names: Vec<String>) -> Result<Self> {
        let p = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(AcarError::DimensionMismatch(format!(
                    "row {t} has {} entries, expected {p}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), p, values, column_names)
    }

    /// An `n × 0` design (no covariates).
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            p: 0,
            values: Vec::new(),
            column_names: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.p..(t + 1) * self.p]
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.p + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.get(t, j)).collect()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            n: end - start,
            p: self.p,
            values: self.values[start * self.p..end * self.p].to_vec(),
            column_names: self.column_names.clone(),
        }
    }

    /// Multiplies column `j` by `factor`.
    pub fn scale_column(&mut self, j: usize, factor: f64) {
        for t in 0..self.n {
            self.values[t * self.p + j] *= factor;
        }
    }

    /// Keeps the named subset of columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|name| {
                self.column_names
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| AcarError::InvalidInput(format!("unknown covariate column `{name}`")))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(self.n * idx.len());
        for t in 0..self.n {
            values.extend(idx.iter().map(|&j| self.get(t, j)));
        }
        Self::new(self.n, idx.len(), values, names.to_vec())
    }
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

/// Checks that a series and its design can be fed to the model together.
pub fn check_aligned(series: &OrdinalSeries, covariates: &CovariateMatrix, k: usize, p: usize) -> Result<()> {
    if series.k() != k {
        return Err(AcarError::DimensionMismatch(format!(
            "series has K = {}, parameters have K = {k}",
            series.k()
        )));
    }
    if covariates.ncols() != p {
        return Err(AcarError::DimensionMismatch(format!(
            "design has {} columns, parameters have P = {p}",
            covariates.ncols()
        )));
    }
    if covariates.nrows() != series.len() {
        return Err(AcarError::DimensionMismatch(format!(
            "design has {} rows, series has {} observations",
            covariates.nrows(),
            series.len()
        )));
    }
    Ok(())
}
