//! Exhaustive covariate-subset search with a portmanteau filter.

use acar::fit::{fit, FitConfig, FitResult};
use acar::infer::portmanteau_test;
use acar::{AcarError, CovariateMatrix, OrdinalSeries, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climate::SQUARE_PREFIX;

pub const DEFAULT_MAX_COVARIATES: usize = 8;

/// All subsets of `names` with at most `max_covariates` columns in which
/// every `sq_<x>` column appears together with `x`. Subsets are ordered by
/// size, then lexicographically by column position.
pub fn enumerate_candidates(names: &[String], max_covariates: usize) -> Result<Vec<Vec<String>>> {
    let base_of = |n: &String| -> Option<usize> {
        n.strip_prefix(SQUARE_PREFIX)
            .and_then(|b| names.iter().position(|m| m == b))
    };
    let parents: Vec<Option<usize>> = names.iter().map(base_of).collect();
    if names.len() > 30 {
        return Err(AcarError::InvalidInput(format!(
            "{} candidate columns is too many to enumerate; restrict the column list",
            names.len()
        )));
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::new();
    for size in 0..=max_covariates.min(names.len()) {
        collect_subsets(0, size, names.len(), &mut current, &mut out);
    }
    Ok(out
        .into_iter()
        .filter(|set| set.iter().all(|&i| parents[i].is_none_or(|p| set.contains(&p))))
        .map(|set| set.into_iter().map(|i| names[i].clone()).collect())
        .collect())
}

fn collect_subsets(start: usize, remaining: usize, n: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for i in start..n {
        if n - i < remaining {
            break;
        }
        current.push(i);
        collect_subsets(i + 1, remaining - 1, n, current, out);
        current.pop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateStatus {
    /// Passed every filter.
    Eligible,
    /// The portmanteau test rejected the model.
    RejectedPortmanteau,
    /// A feedback coefficient sits on the boundary.
    AtBound,
    /// The fit or its diagnostics failed.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateOutcome {
    pub index: usize,
    pub columns: Vec<String>,
    pub status: CandidateStatus,
    pub reason: Option<String>,
    pub negloglik: Option<f64>,
    pub aic: Option<f64>,
    /// Covariate coefficients with `|t| > 1.96`.
    pub significant_covariates: usize,
    pub portmanteau_statistic: Option<f64>,
    pub portmanteau_p: Option<f64>,
    pub parameter_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSearchReport {
    pub q: usize,
    pub alpha: f64,
    pub n_obs: usize,
    pub candidates: Vec<CandidateOutcome>,
    /// Eligible candidates, best first.
    pub ranking: Vec<usize>,
    pub selected: Option<usize>,
}

impl ModelSearchReport {
    pub fn selected_candidate(&self) -> Option<&CandidateOutcome> {
        self.selected.map(|i| &self.candidates[i])
    }
}

fn evaluate(
    index: usize,
    columns: &[String],
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    q: usize,
    alpha: f64,
    config: &FitConfig,
) -> CandidateOutcome {
    let mut out = CandidateOutcome {
        index,
        columns: columns.to_vec(),
        status: CandidateStatus::Failed,
        reason: None,
        negloglik: None,
        aic: None,
        significant_covariates: 0,
        portmanteau_statistic: None,
        portmanteau_p: None,
        parameter_names: Vec::new(),
        theta_hat: Vec::new(),
        std_errors: None,
    };
    let fitted: Result<FitResult> = covariates.select_columns(columns).and_then(|x| fit(series, &x, config));
    let f = match fitted {
        Ok(f) => f,
        Err(e) => {
            out.reason = Some(e.to_string());
            return out;
        }
    };
    out.negloglik = Some(f.negloglik);
    out.aic = Some(f.aic);
    out.parameter_names = f.parameter_names.clone();
    out.theta_hat = f.theta_hat.as_slice().to_vec();
    out.std_errors = f.std_errors.clone();
    let layout = f.layout();
    out.significant_covariates = f.significant((0..layout.p).map(|i| layout.gamma(i)));
    if f.any_at_bound() {
        out.status = CandidateStatus::AtBound;
        out.reason = Some("at-bound".into());
        return out;
    }
    match portmanteau_test(&f, q) {
        Ok(p) => {
            out.portmanteau_statistic = Some(p.statistic);
            out.portmanteau_p = Some(p.p_value);
            if p.rejects(alpha) {
                out.status = CandidateStatus::RejectedPortmanteau;
                out.reason = Some(format!("portmanteau p-value {:.4} below {alpha}", p.p_value));
            } else {
                out.status = CandidateStatus::Eligible;
            }
        }
        Err(e) => out.reason = Some(format!("portmanteau: {e}")),
    }
    out
}

/// Fits every candidate, filters by the portmanteau test at `alpha` and the
/// boundary rule, and ranks the rest by significant-covariate count
/// (descending), AIC (ascending), then candidate index.
pub fn search_models(
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    candidates: &[Vec<String>],
    q: usize,
    alpha: f64,
    config: &FitConfig,
) -> Result<ModelSearchReport> {
    if candidates.is_empty() {
        return Err(AcarError::InvalidInput("no candidate covariate sets".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AcarError::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    for set in candidates {
        for name in set {
            if let Some(base) = name.strip_prefix(SQUARE_PREFIX) {
                if covariates.column_names().iter().any(|n| n == base) && !set.iter().any(|n| n == base) {
                    return Err(AcarError::InvalidInput(format!(
                        "candidate {set:?} includes {name} without its linear term {base}"
                    )));
                }
            }
        }
    }
    config.validate()?;
    let outcomes: Vec<CandidateOutcome> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, cols)| evaluate(i, cols, series, covariates, q, alpha, config))
        .collect();
    let mut ranking: Vec<usize> = outcomes
        .iter()
        .filter(|o| o.status == CandidateStatus::Eligible)
        .map(|o| o.index)
        .collect();
    ranking.sort_by(|&a, &b| {
        let (oa, ob) = (&outcomes[a], &outcomes[b]);
        ob.significant_covariates
            .cmp(&oa.significant_covariates)
            .then(
                oa.aic
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&ob.aic.unwrap_or(f64::INFINITY)),
            )
            .then(a.cmp(&b))
    });
    Ok(ModelSearchReport {
        q,
        alpha,
        n_obs: series.len(),
        selected: ranking.first().copied(),
        ranking,
        candidates: outcomes,
    })
}
