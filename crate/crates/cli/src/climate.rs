//! Seasonal climate covariates and their alignment with a yearly response.

use std::collections::BTreeMap;

use acar::{AcarError, CovariateMatrix, OrdinalSeries, Result};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::io::{CovariateTable, YearlySeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyClimateRecord {
    pub date: NaiveDate,
    /// °C
    pub tmax: Option<f64>,
    /// °C
    pub tmin: Option<f64>,
    /// mm
    pub prcp: Option<f64>,
    /// mm
    pub snow: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateConfig {
    /// Multiplier applied to every temperature column.
    pub scale: f64,
    /// Minimum share of days with data for a seasonal or annual statistic.
    pub min_coverage: f64,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        Self {
            scale: 0.1,
            min_coverage: 0.8,
        }
    }
}

/// Years between a climate year and the response year it drives.
pub const DEFAULT_LAG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Season {
    Spring,
    Summer,
}

impl Season {
    const ALL: [Season; 2] = [Season::Spring, Season::Summer];

    fn of(month: u32) -> Option<Self> {
        match month {
            4..=6 => Some(Self::Spring),
            7..=9 => Some(Self::Summer),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Spring => "spring",
            Self::Summer => "summer",
        }
    }

    fn days(self, year: i32) -> usize {
        let (start, end) = match self {
            Self::Spring => ((year, 4), (year, 7)),
            Self::Summer => ((year, 7), (year, 10)),
        };
        let d = |(y, m): (i32, u32)| NaiveDate::from_ymd_opt(y, m, 1).expect("valid month start");
        (d(end) - d(start)).num_days() as usize
    }
}

fn days_in_year(year: i32) -> usize {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

/// Temperature column names in output order; squares follow as `sq_<name>`.
pub const TEMPERATURE_COLUMNS: [&str; 8] = [
    "tmax_range_spring",
    "tmax_range_summer",
    "tmin_range_spring",
    "tmin_range_summer",
    "d_tmax_spring",
    "d_tmax_summer",
    "d_tmin_spring",
    "d_tmin_summer",
];

pub const PRECIPITATION_COLUMNS: [&str; 4] = ["log_prcp", "log_snow", "d_log_prcp", "d_log_snow"];

pub const SQUARE_PREFIX: &str = "sq_";

pub fn column_names() -> Vec<String> {
    TEMPERATURE_COLUMNS
        .iter()
        .chain(PRECIPITATION_COLUMNS.iter())
        .map(|s| s.to_string())
        .chain(TEMPERATURE_COLUMNS.iter().map(|s| format!("{SQUARE_PREFIX}{s}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedYear {
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalCovariateTable {
    /// Keyed by climate year.
    pub table: CovariateTable,
    pub config: CovariateConfig,
    pub dropped: Vec<DroppedYear>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Stat {
    count: usize,
    sum: f64,
    min: f64,
    max: f64,
}

impl Stat {
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += v;
    }
}

#[derive(Debug, Default)]
struct YearAccumulator {
    // [season][tmax, tmin]
    seasonal: [[Stat; 2]; 2],
    prcp: Stat,
    snow: Stat,
}

/// Per-year summaries before differencing: ranges, means and log totals.
#[derive(Debug, Clone, Copy)]
struct YearSummary {
    range: [[f64; 2]; 2],
    mean: [[f64; 2]; 2],
    log_prcp: f64,
    log_snow: f64,
}

fn summarize_year(year: i32, acc: &YearAccumulator, min_coverage: f64) -> std::result::Result<YearSummary, String> {
    let mut range = [[0.0; 2]; 2];
    let mut mean = [[0.0; 2]; 2];
    for (si, season) in Season::ALL.iter().enumerate() {
        for (vi, var) in ["tmax", "tmin"].iter().enumerate() {
            let st = acc.seasonal[si][vi];
            let days = season.days(year);
            let coverage = st.count as f64 / days as f64;
            if st.count == 0 || coverage < min_coverage {
                return Err(format!(
                    "{} {var}: {} of {days} days present (coverage {coverage:.3} below {min_coverage})",
                    season.name(),
                    st.count
                ));
            }
            range[si][vi] = st.max - st.min;
            mean[si][vi] = st.sum / st.count as f64;
        }
    }
    let annual = |st: Stat, var: &str| -> std::result::Result<f64, String> {
        let days = days_in_year(year);
        let coverage = st.count as f64 / days as f64;
        if coverage < min_coverage {
            return Err(format!(
                "annual {var}: {} of {days} days present (coverage {coverage:.3} below {min_coverage})",
                st.count
            ));
        }
        if st.sum <= 0.0 {
            return Err(format!(
                "annual {var} total {} is not positive; its log is undefined",
                st.sum
            ));
        }
        Ok(st.sum.ln())
    };
    Ok(YearSummary {
        range,
        mean,
        log_prcp: annual(acc.prcp, "prcp")?,
        log_snow: annual(acc.snow, "snow")?,
    })
}

/// Builds one covariate row per climate year that has a complete summary and
/// a complete previous year (needed for interannual differences).
pub fn build_seasonal_covariates(
    daily: &[DailyClimateRecord],
    config: &CovariateConfig,
) -> Result<SeasonalCovariateTable> {
    if !(config.scale.is_finite() && config.scale != 0.0) {
        return Err(AcarError::InvalidInput(format!(
            "scale must be finite and nonzero, got {}",
            config.scale
        )));
    }
    if !(0.0..=1.0).contains(&config.min_coverage) {
        return Err(AcarError::InvalidInput(format!(
            "min_coverage must lie in [0, 1], got {}",
            config.min_coverage
        )));
    }
    let mut years: BTreeMap<i32, YearAccumulator> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for rec in daily {
        if !seen.insert(rec.date) {
            return Err(AcarError::InvalidInput(format!(
                "duplicate climate record for {}",
                rec.date
            )));
        }
        let acc = years.entry(rec.date.year()).or_default();
        if let Some(season) = Season::of(rec.date.month()) {
            let si = season as usize;
            if let Some(v) = rec.tmax {
                acc.seasonal[si][0].push(v);
            }
            if let Some(v) = rec.tmin {
                acc.seasonal[si][1].push(v);
            }
        }
        if let Some(v) = rec.prcp {
            acc.prcp.push(v);
        }
        if let Some(v) = rec.snow {
            acc.snow.push(v);
        }
    }
    let (Some(&first), Some(&last)) = (years.keys().next(), years.keys().next_back()) else {
        return Err(AcarError::InvalidInput("no climate records".into()));
    };
    if last - first < 2 {
        return Err(AcarError::InvalidInput(
            "at least three consecutive years of climate data are required".into(),
        ));
    }

    let mut dropped = Vec::new();
    let mut summaries: BTreeMap<i32, YearSummary> = BTreeMap::new();
    let empty = YearAccumulator::default();
    for year in first..=last {
        match summarize_year(year, years.get(&year).unwrap_or(&empty), config.min_coverage) {
            Ok(s) => {
                summaries.insert(year, s);
            }
            Err(reason) => dropped.push(DroppedYear { year, reason }),
        }
    }

    let scale = config.scale;
    let mut out_years = Vec::new();
    let mut rows = Vec::new();
    for (&year, cur) in &summaries {
        let Some(prev) = summaries.get(&(year - 1)) else {
            let reason = if year == first {
                "first year has no previous year for interannual differences".to_string()
            } else {
                format!("previous year {} unavailable for interannual differences", year - 1)
            };
            dropped.push(DroppedYear { year, reason });
            continue;
        };
        let temps = [
            cur.range[0][0],
            cur.range[1][0],
            cur.range[0][1],
            cur.range[1][1],
            cur.mean[0][0] - prev.mean[0][0],
            cur.mean[1][0] - prev.mean[1][0],
            cur.mean[0][1] - prev.mean[0][1],
            cur.mean[1][1] - prev.mean[1][1],
        ]
        .map(|v| v * scale);
        let mut row: Vec<Option<f64>> = temps.iter().map(|&v| Some(v)).collect();
        row.extend([
            Some(cur.log_prcp),
            Some(cur.log_snow),
            Some(cur.log_prcp - prev.log_prcp),
            Some(cur.log_snow - prev.log_snow),
        ]);
        row.extend(temps.iter().map(|&v| Some(v * v)));
        out_years.push(year);
        rows.push(row);
    }
    dropped.sort_by_key(|d| d.year);
    Ok(SeasonalCovariateTable {
        table: CovariateTable {
            years: out_years,
            names: column_names(),
            rows,
        },
        config: *config,
        dropped,
    })
}

/// Response and design rows matched by year.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedData {
    pub years: Vec<i32>,
    pub series: OrdinalSeries,
    pub covariates: CovariateMatrix,
    /// Response years removed for lack of complete covariates.
    pub dropped_years: Vec<i32>,
}

/// Matches response year `y` with covariate year `y + 1 − lag`.
///
/// The model feeds `X_{t−1}` into the latent process at `t`, so the row
/// stored with year `y` drives the response of year `y + 1`; with this
/// offset the response of year `y` is driven by the covariates of year
/// `y − lag`. Years without a complete covariate row are dropped and the
/// remaining observations are treated as consecutive.
pub fn align(series: &YearlySeries, table: &CovariateTable, lag: i32) -> Result<AlignedData> {
    let mut years = Vec::new();
    let mut levels = Vec::new();
    let mut rows = Vec::new();
    let mut dropped_years = Vec::new();
    for (i, &y) in series.years.iter().enumerate() {
        let row = table
            .row_for_year(y + 1 - lag)
            .and_then(|r| r.iter().copied().collect::<Option<Vec<f64>>>());
        match row {
            Some(r) => {
                years.push(y);
                levels.push(series.series.level(i));
                rows.push(r);
            }
            None => dropped_years.push(y),
        }
    }
    if years.is_empty() {
        return Err(AcarError::InvalidInput(
            "no response year has a complete covariate row".into(),
        ));
    }
    let covariates = if table.names.is_empty() {
        CovariateMatrix::empty(years.len())
    } else {
        CovariateMatrix::from_rows(&rows, table.names.clone())?
    };
    Ok(AlignedData {
        series: OrdinalSeries::new(series.series.k(), levels)?,
        years,
        covariates,
        dropped_years,
    })
}
