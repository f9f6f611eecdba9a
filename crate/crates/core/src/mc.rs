//! Monte Carlo harness: estimator recovery and comparison-test scenarios.
//!
//! Each replication draws its seed from the master seed and its index, so
//! results do not depend on thread scheduling.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcarError, Result};
use crate::fit::{fit, FitConfig, FitResult, Z_95};
use crate::infer::{compare_models, SMode};
use crate::params::ParameterVector;
use crate::sim::{simulate, simulate_paired_sites, stream_rng, Coupling, Scenario, SimConfig};

const REPLICATION_STREAM_BASE: u64 = 1 << 32;

/// Seed of replication `index` under `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    stream_rng(master, REPLICATION_STREAM_BASE + index).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCDesign {
    pub theta0: ParameterVector,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub fit_config: FitConfig,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    crate::sim::DEFAULT_BURN_IN
}

impl MCDesign {
    pub fn new(theta0: ParameterVector, sample_sizes: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            theta0,
            sample_sizes,
            replications,
            seed,
            fit_config: FitConfig::default(),
            burn_in: default_burn_in(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(AcarError::InvalidInput("at least one replication is required".into()));
        }
        if self.sample_sizes.is_empty() {
            return Err(AcarError::InvalidInput("no sample sizes given".into()));
        }
        let min = self.theta0.len() + 2;
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < min) {
            return Err(AcarError::InvalidInput(format!(
                "sample size {n} is below the minimum {min}"
            )));
        }
        self.theta0.validate(self.fit_config.epsilon)?;
        self.fit_config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub theta0: f64,
    /// Mean estimate.
    pub cmle: f64,
    /// Mean estimated standard error.
    pub tse: f64,
    pub mae: f64,
    pub mse: f64,
    /// Share of replications whose 95% Wald interval covers `theta0`.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCSummary {
    pub n: usize,
    pub replications: usize,
    /// Replications entering the aggregates.
    pub used: usize,
    /// Fits that failed or returned no standard errors.
    pub failures: usize,
    /// Converged fits with a feedback coefficient on the boundary.
    pub at_bound: usize,
    pub parameters: Vec<ParameterSummary>,
}

/// One replication's estimate and standard errors, or why it was dropped.
#[derive(Debug, Clone, PartialEq)]
pub enum Replication {
    Ok { theta_hat: Vec<f64>, std_errors: Vec<f64> },
    AtBound,
    Failed(String),
}

impl Replication {
    fn from_fit(result: Result<FitResult>) -> Self {
        match result {
            Err(e) => Self::Failed(e.to_string()),
            Ok(f) if f.any_at_bound() => Self::AtBound,
            Ok(f) => match f.std_errors {
                Some(se) => Self::Ok {
                    theta_hat: f.theta_hat.into_vec(),
                    std_errors: se,
                },
                None => Self::Failed(f.covariance_error.unwrap_or_else(|| "no standard errors".into())),
            },
        }
    }
}

/// Aggregates replications into per-parameter CMLE, TSE, MAE, MSE and coverage.
pub fn summarize_replications(theta0: &ParameterVector, n: usize, reps: &[Replication]) -> MCSummary {
    let dim = theta0.len();
    let names = theta0.layout().names();
    let ok: Vec<(&Vec<f64>, &Vec<f64>)> = reps
        .iter()
        .filter_map(|r| match r {
            Replication::Ok { theta_hat, std_errors } => Some((theta_hat, std_errors)),
            _ => None,
        })
        .collect();
    let used = ok.len();
    let b = used.max(1) as f64;
    let parameters = (0..dim)
        .map(|i| {
            let t0 = theta0.as_slice()[i];
            let mut s = ParameterSummary {
                name: names[i].clone(),
                theta0: t0,
                cmle: 0.0,
                tse: 0.0,
                mae: 0.0,
                mse: 0.0,
                coverage: 0.0,
            };
            for (th, se) in &ok {
                let err = th[i] - t0;
                s.cmle += th[i];
                s.tse += se[i];
                s.mae += err.abs();
                s.mse += err * err;
                s.coverage += f64::from(u8::from(err.abs() <= Z_95 * se[i]));
            }
            if used == 0 {
                s.cmle = f64::NAN;
                s.tse = f64::NAN;
            }
            s.cmle /= b;
            s.tse /= b;
            s.mae /= b;
            s.mse /= b;
            s.coverage /= b;
            s
        })
        .collect();
    MCSummary {
        n,
        replications: reps.len(),
        used,
        failures: reps.iter().filter(|r| matches!(r, Replication::Failed(_))).count(),
        at_bound: reps.iter().filter(|r| matches!(r, Replication::AtBound)).count(),
        parameters,
    }
}

fn recovery_replication(design: &MCDesign, n: usize, seed: u64) -> Replication {
    let sim = SimConfig {
        burn_in: design.burn_in,
        eta0: design.fit_config.eta0,
        ..SimConfig::new(design.theta0.clone(), n, seed)
    };
    let config = FitConfig {
        seed,
        ..design.fit_config.clone()
    };
    Replication::from_fit(simulate(&sim).and_then(|d| fit(&d.series, &d.covariates, &config)))
}

/// Recovery study: one summary per sample size.
pub fn run_recovery_study(design: &MCDesign) -> Result<Vec<MCSummary>> {
    design.validate()?;
    let b = design.replications as u64;
    Ok(design
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let reps: Vec<Replication> = (0..b)
                .into_par_iter()
                .map(|r| recovery_replication(design, n, replication_seed(design.seed, i as u64 * b + r)))
                .collect();
            summarize_replications(&design.theta0, n, &reps)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDesign {
    pub scenario: u8,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Overrides the scenario's default `S` handling.
    pub s_mode: Option<SMode>,
    #[serde(default)]
    pub fit_config: FitConfig,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl ScenarioDesign {
    pub fn new(scenario: u8, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            replications,
            seed,
            alpha: 0.05,
            s_mode: None,
            fit_config: FitConfig::default(),
            burn_in: default_burn_in(),
        }
    }
}

/// `S` is taken as zero for independent sites and estimated otherwise.
pub fn default_s_mode(scenario: u8) -> SMode {
    if scenario <= 2 {
        SMode::AssumedZero
    } else {
        SMode::Empirical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: u8,
    pub coupling: Coupling,
    pub s_mode: SMode,
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    /// Replications with a usable global test.
    pub used: usize,
    pub failures: usize,
    pub at_bound: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub acceptance_rate: f64,
    pub mean_statistic: f64,
    /// Per-parameter rejection rates of the marginal z-tests.
    pub per_param_rejection_rate: Vec<f64>,
}

enum ScenarioOutcome {
    Tested {
        statistic: f64,
        reject: bool,
        marginal: Vec<bool>,
    },
    AtBound,
    Failed,
}

fn scenario_replication(design: &ScenarioDesign, scenario: &Scenario, s_mode: SMode, index: u64) -> ScenarioOutcome {
    let seed1 = replication_seed(design.seed, 2 * index);
    let seed2 = replication_seed(design.seed, 2 * index + 1);
    let site = |theta: &ParameterVector, seed| SimConfig {
        burn_in: design.burn_in,
        eta0: design.fit_config.eta0,
        ..SimConfig::new(theta.clone(), design.n, seed)
    };
    let Ok((a, b)) = simulate_paired_sites(
        &site(&scenario.theta1, seed1),
        &site(&scenario.theta2, seed2),
        scenario.coupling,
    ) else {
        return ScenarioOutcome::Failed;
    };
    let fit_site = |d: &crate::sim::SimulatedPath, seed| {
        fit(
            &d.series,
            &d.covariates,
            &FitConfig {
                seed,
                ..design.fit_config.clone()
            },
        )
    };
    let (Ok(f1), Ok(f2)) = (fit_site(&a, seed1), fit_site(&b, seed2)) else {
        return ScenarioOutcome::Failed;
    };
    if f1.any_at_bound() || f2.any_at_bound() {
        return ScenarioOutcome::AtBound;
    }
    match compare_models(&f1, &f2, s_mode) {
        Ok(c) => match (c.global_statistic, c.rejects(design.alpha)) {
            (Some(statistic), Some(reject)) => ScenarioOutcome::Tested {
                statistic,
                reject,
                marginal: c
                    .per_param_p
                    .iter()
                    .map(|p| p.is_some_and(|p| p < design.alpha))
                    .collect(),
            },
            _ => ScenarioOutcome::Failed,
        },
        Err(_) => ScenarioOutcome::Failed,
    }
}

/// Global comparison-test rejection rate over paired-site replications.
pub fn run_scenario_study(design: &ScenarioDesign) -> Result<ScenarioReport> {
    let scenario = Scenario::get(design.scenario)?;
    if design.replications == 0 {
        return Err(AcarError::InvalidInput("at least one replication is required".into()));
    }
    if !(design.alpha > 0.0 && design.alpha < 1.0) {
        return Err(AcarError::InvalidInput(format!(
            "alpha must lie in (0, 1), got {}",
            design.alpha
        )));
    }
    design.fit_config.validate()?;
    let s_mode = design.s_mode.unwrap_or_else(|| default_s_mode(design.scenario));
    let outcomes: Vec<ScenarioOutcome> = (0..design.replications as u64)
        .into_par_iter()
        .map(|i| scenario_replication(design, &scenario, s_mode, i))
        .collect();

    let dim = scenario.theta1.len();
    let mut used = 0;
    let mut rejections = 0;
    let mut stat_sum = 0.0;
    let mut marginal = vec![0usize; dim];
    for o in &outcomes {
        if let ScenarioOutcome::Tested {
            statistic,
            reject,
            marginal: m,
        } = o
        {
            used += 1;
            rejections += usize::from(*reject);
            stat_sum += statistic;
            for (acc, &r) in marginal.iter_mut().zip(m) {
                *acc += usize::from(r);
            }
        }
    }
    let denom = used.max(1) as f64;
    let rejection_rate = if used == 0 { f64::NAN } else { rejections as f64 / denom };
    Ok(ScenarioReport {
        scenario: design.scenario,
        coupling: scenario.coupling,
        s_mode,
        n: design.n,
        replications: design.replications,
        alpha: design.alpha,
        used,
        failures: outcomes.iter().filter(|o| matches!(o, ScenarioOutcome::Failed)).count(),
        at_bound: outcomes
            .iter()
            .filter(|o| matches!(o, ScenarioOutcome::AtBound))
            .count(),
        rejections,
        rejection_rate,
        acceptance_rate: 1.0 - rejection_rate,
        mean_statistic: if used == 0 { f64::NAN } else { stat_sum / denom },
        per_param_rejection_rate: marginal.iter().map(|&m| m as f64 / denom).collect(),
    })
}
