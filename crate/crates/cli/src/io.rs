//! CSV readers and writers for series, covariate tables and daily climate.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use acar::{AcarError, CovariateMatrix, OrdinalSeries, Result};
use chrono::NaiveDate;

use crate::climate::DailyClimateRecord;

/// Number of defoliation levels above zero.
pub const DEFOLIATION_K: usize = 3;

fn csv_error(path: &Path, e: csv::Error) -> AcarError {
    AcarError::InvalidInput(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| AcarError::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "na" | "NaN" | "nan")
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| AcarError::InvalidInput(format!("line {line}: cannot parse {what} '{field}'")))
}

fn parse_year(field: &str, line: u64) -> Result<i32> {
    field
        .parse::<i32>()
        .map_err(|_| AcarError::InvalidInput(format!("line {line}: cannot parse year '{field}'")))
}

/// Defoliation proportion to level: `0 → 0`, `(0, 0.35] → 1`,
/// `(0.35, 0.70] → 2`, `(0.70, 1] → 3`.
pub fn defoliation_level(proportion: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(AcarError::InvalidInput(format!(
            "defoliation proportion {proportion} outside [0, 1]"
        )));
    }
    Ok(if proportion == 0.0 {
        0
    } else if proportion <= 0.35 {
        1
    } else if proportion <= 0.70 {
        2
    } else {
        3
    })
}

pub fn classify_defoliation(proportions: &[f64]) -> Result<OrdinalSeries> {
    let levels = proportions
        .iter()
        .map(|&p| defoliation_level(p))
        .collect::<Result<Vec<_>>>()?;
    OrdinalSeries::new(DEFOLIATION_K, levels)
}

/// A response series keyed by year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearlySeries {
    pub years: Vec<i32>,
    pub series: OrdinalSeries,
}

/// Reads `year,level` (integer levels) or `year,proportion` (defoliation
/// proportions, coded into four levels). `k` defaults to the largest level
/// seen, or to three for proportions.
pub fn load_ordinal_series(path: &Path, k: Option<usize>) -> Result<YearlySeries> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let year_col =
        col("year").ok_or_else(|| AcarError::InvalidInput(format!("{}: missing 'year' column", path.display())))?;
    let (value_col, proportions) = match (col("level"), col("proportion")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        (None, None) => {
            return Err(AcarError::InvalidInput(format!(
                "{}: expected a 'level' or 'proportion' column",
                path.display()
            )))
        }
    };
    let mut years = Vec::new();
    let mut levels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = i as u64 + 2;
        years.push(parse_year(&record[year_col], line)?);
        let field = &record[value_col];
        let level = if proportions {
            defoliation_level(parse_f64(field, "proportion", line)?)?
        } else {
            field
                .parse::<usize>()
                .map_err(|_| AcarError::InvalidInput(format!("line {line}: unknown level code '{field}'")))?
        };
        levels.push(level);
    }
    if years.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AcarError::InvalidInput(format!(
            "{}: years must be strictly increasing",
            path.display()
        )));
    }
    let k = match (k, proportions) {
        (Some(k), _) => k,
        (None, true) => DEFOLIATION_K,
        (None, false) => levels.iter().copied().max().unwrap_or(0).max(1),
    };
    if let Some(bad) = levels.iter().find(|&&l| l > k) {
        return Err(AcarError::InvalidInput(format!("unknown level code {bad} (K = {k})")));
    }
    Ok(YearlySeries {
        years,
        series: OrdinalSeries::new(k, levels)?,
    })
}

pub fn write_series<W: Write>(out: W, years: &[i32], series: &OrdinalSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| AcarError::InvalidInput(e.to_string());
    w.write_record(["year", "level"]).map_err(fail)?;
    for (y, l) in years.iter().zip(series.levels()) {
        w.write_record([y.to_string(), l.to_string()]).map_err(fail)?;
    }
    w.flush()?;
    Ok(())
}

/// Covariate columns keyed by year; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub years: Vec<i32>,
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CovariateTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row_for_year(&self, year: i32) -> Option<&[Option<f64>]> {
        self.years.binary_search(&year).ok().map(|i| self.rows[i].as_slice())
    }

    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| AcarError::InvalidInput(format!("unknown covariate column '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            years: self.years.clone(),
            names: names.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }
}

/// Reads `year` plus named numeric columns. A `level` column, if present,
/// is ignored so a combined series file can double as a covariate file.
pub fn load_covariate_table(path: &Path) -> Result<CovariateTable> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let year_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("year"))
        .ok_or_else(|| AcarError::InvalidInput(format!("{}: missing 'year' column", path.display())))?;
    let value_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| {
            i != year_col && !headers[i].eq_ignore_ascii_case("level") && !headers[i].eq_ignore_ascii_case("proportion")
        })
        .collect();
    let names = value_cols.iter().map(|&i| headers[i].to_string()).collect();
    let mut years = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = i as u64 + 2;
        years.push(parse_year(&record[year_col], line)?);
        let row = value_cols
            .iter()
            .map(|&c| {
                let f = &record[c];
                if is_missing(f) {
                    Ok(None)
                } else {
                    parse_f64(f, &headers[c], line).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if years.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AcarError::InvalidInput(format!(
            "{}: years must be strictly increasing",
            path.display()
        )));
    }
    Ok(CovariateTable { years, names, rows })
}

fn format_value(v: Option<f64>) -> String {
    // Shortest round-trip representation.
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_covariate_table<W: Write>(out: W, table: &CovariateTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| AcarError::InvalidInput(e.to_string());
    let mut header = vec!["year".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header).map_err(fail)?;
    for (y, row) in table.years.iter().zip(&table.rows) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(|&v| format_value(v)));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush()?;
    Ok(())
}

/// Series and covariates in one table: `year,level,<covariates>`.
pub fn write_combined<W: Write>(
    out: W,
    years: &[i32],
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| AcarError::InvalidInput(e.to_string());
    let mut header = vec!["year".to_string(), "level".to_string()];
    header.extend(covariates.column_names().iter().cloned());
    w.write_record(&header).map_err(fail)?;
    for (t, y) in years.iter().enumerate() {
        let mut rec = vec![y.to_string(), series.level(t).to_string()];
        rec.extend(covariates.row(t).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `date,tmax,tmin,prcp,snow` with ISO dates; blank or `NA` fields are missing.
pub fn load_daily_climate<R: Read>(input: R) -> Result<Vec<DailyClimateRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| AcarError::InvalidInput(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| AcarError::InvalidInput(format!("climate file is missing the '{name}' column")))
    };
    let cols = [col("date")?, col("tmax")?, col("tmin")?, col("prcp")?, col("snow")?];
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AcarError::InvalidInput(e.to_string()))?;
        let line = i as u64 + 2;
        let date = NaiveDate::parse_from_str(&record[cols[0]], "%Y-%m-%d")
            .map_err(|_| AcarError::InvalidInput(format!("line {line}: invalid date '{}'", &record[cols[0]])))?;
        let field = |c: usize, what: &str| -> Result<Option<f64>> {
            let f = &record[c];
            if is_missing(f) {
                Ok(None)
            } else {
                parse_f64(f, what, line).map(Some)
            }
        };
        let rec = DailyClimateRecord {
            date,
            tmax: field(cols[1], "tmax")?,
            tmin: field(cols[2], "tmin")?,
            prcp: field(cols[3], "prcp")?,
            snow: field(cols[4], "snow")?,
        };
        if let (Some(lo), Some(hi)) = (rec.tmin, rec.tmax) {
            if lo > hi {
                return Err(AcarError::InvalidInput(format!(
                    "line {line}: tmin {lo} exceeds tmax {hi}"
                )));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_daily_climate_file(path: &Path) -> Result<Vec<DailyClimateRecord>> {
    let file = File::open(path).map_err(|e| AcarError::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    load_daily_climate(file)
}
