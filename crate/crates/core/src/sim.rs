//! Exact simulation of the data-generating process.
//!
//! Each path uses two independent ChaCha streams derived from its seed: one
//! for the Gaussian covariates and one for the uniforms that select levels.
//! Keeping the uniform stream separate is what lets paired sites share or
//! mirror their uniforms while drawing independent covariates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AcarError, Result};
use crate::model::latent::shared_drive;
use crate::model::probs::adjacent_to_probs;
use crate::params::{simulation_design, ParameterVector, DEFAULT_EPSILON};
use crate::series::{default_names, CovariateMatrix, OrdinalSeries};

pub const DEFAULT_BURN_IN: usize = 200;

const COVARIATE_STREAM: u64 = 0;
const UNIFORM_STREAM: u64 = 1;
const SECOND_SITE_COVARIATE_STREAM: u64 = 2;
const SECOND_SITE_UNIFORM_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub theta: ParameterVector,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_eta0_value")]
    pub eta0: f64,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_eta0_value() -> f64 {
    crate::model::latent::DEFAULT_ETA0
}

impl SimConfig {
    pub fn new(theta: ParameterVector, n: usize, seed: u64) -> Self {
        Self {
            theta,
            n,
            seed,
            burn_in: DEFAULT_BURN_IN,
            eta0: default_eta0_value(),
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Rows of covariates and uniforms consumed, burn-in included.
    pub fn total_len(&self) -> usize {
        self.burn_in + self.n
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate(DEFAULT_EPSILON)?;
        if self.n < 2 {
            return Err(AcarError::InvalidInput(format!(
                "sample size must be >= 2, got {}",
                self.n
            )));
        }
        if !self.eta0.is_finite() {
            return Err(AcarError::InvalidInput("eta0 must be finite".into()));
        }
        Ok(())
    }
}

/// How the uniform streams of two sites relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Independent,
    /// `U⁽²⁾ = U⁽¹⁾`.
    Common,
    /// `U⁽²⁾ = 1 − U⁽¹⁾`.
    Antithetic,
}

impl std::str::FromStr for Coupling {
    type Err = AcarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "common" => Ok(Self::Common),
            "antithetic" => Ok(Self::Antithetic),
            other => Err(AcarError::InvalidInput(format!("unknown coupling `{other}`"))),
        }
    }
}

/// The four two-site comparison scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: u8,
    pub coupling: Coupling,
    pub theta1: ParameterVector,
    pub theta2: ParameterVector,
}

impl Scenario {
    pub fn get(id: u8) -> Result<Self> {
        let d1 = simulation_design(1).expect("design 1");
        let d3 = simulation_design(3).expect("design 3");
        let (coupling, theta2) = match id {
            1 => (Coupling::Independent, d1.clone()),
            2 => (Coupling::Independent, d3),
            3 => (Coupling::Antithetic, d1.clone()),
            4 => (Coupling::Common, d3),
            other => {
                return Err(AcarError::InvalidInput(format!("scenario must be 1..=4, got {other}")));
            }
        };
        Ok(Self {
            id,
            coupling,
            theta1: d1,
            theta2,
        })
    }
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n × P` i.i.d. standard normal design.
pub fn simulate_covariates<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<CovariateMatrix> {
    if n == 0 {
        return Err(AcarError::InvalidInput(
            "cannot simulate an empty covariate matrix".into(),
        ));
    }
    let values: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    CovariateMatrix::new(n, p, values, default_names(p))
}

pub fn simulate_uniforms<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Level `j` whose cumulative cell `[Σ_{i<j} π_i, Σ_{i≤j} π_i)` contains `u`.
/// `u ≥ 1` (possible after the antithetic map) selects the top level.
pub fn level_from_uniform(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let top = probs.len() - 1;
    for (j, p) in probs.iter().enumerate().take(top) {
        cum += p;
        if u < cum {
            return j;
        }
    }
    top
}

/// A simulated path with the design rows it was driven by.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub series: OrdinalSeries,
    pub covariates: CovariateMatrix,
    /// Recorded (post burn-in) uniforms.
    pub uniforms: Vec<f64>,
}

/// Runs the recursion over `burn_in + n` steps and keeps the last `n`.
///
/// `covariates` and `uniforms` must both cover `burn_in + n` steps; when
/// `uniforms` is `None` they are drawn from the configuration's seed.
pub fn simulate_path(
    config: &SimConfig,
    covariates: &CovariateMatrix,
    uniforms: Option<&[f64]>,
) -> Result<SimulatedPath> {
    config.validate()?;
    let total = config.total_len();
    let theta = &config.theta;
    let (k, p) = (theta.k(), theta.p());
    if covariates.nrows() != total || covariates.ncols() != p {
        return Err(AcarError::DimensionMismatch(format!(
            "covariates are {} x {}, expected {total} x {p}",
            covariates.nrows(),
            covariates.ncols()
        )));
    }
    let drawn;
    let u: &[f64] = match uniforms {
        Some(u) => {
            if u.len() != total {
                return Err(AcarError::DimensionMismatch(format!(
                    "{} uniforms supplied, expected {total}",
                    u.len()
                )));
            }
            if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(AcarError::InvalidInput("uniforms must lie in [0, 1]".into()));
            }
            u
        }
        None => {
            drawn = simulate_uniforms(total, &mut stream_rng(config.seed, UNIFORM_STREAM));
            &drawn
        }
    };

    let (omega, gamma, alpha, beta) = (theta.omega(), theta.gamma(), theta.alpha(), theta.beta());
    let mut eta = vec![config.eta0; k];
    let mut levels = Vec::with_capacity(total);
    levels.push(level_from_uniform(&adjacent_to_probs(&eta), u[0]));
    for t in 1..total {
        let drive = shared_drive(gamma, alpha, covariates.row(t - 1), levels[t - 1]);
        for j in 0..k {
            eta[j] = omega[j] + drive + beta[j] * eta[j];
            if !eta[j].is_finite() {
                return Err(AcarError::NonFiniteLatent { t, category: j + 1 });
            }
        }
        levels.push(level_from_uniform(&adjacent_to_probs(&eta), u[t]));
    }
    let start = config.burn_in;
    Ok(SimulatedPath {
        series: OrdinalSeries::new(k, levels[start..].to_vec())?,
        covariates: covariates.slice_rows(start, total),
        uniforms: u[start..].to_vec(),
    })
}

/// Simulates covariates and a path entirely from `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<SimulatedPath> {
    config.validate()?;
    let x = simulate_covariates(
        config.total_len(),
        config.theta.p(),
        &mut stream_rng(config.seed, COVARIATE_STREAM),
    )?;
    simulate_path(config, &x, None)
}

/// Two sites with independent covariates and coupled uniforms.
///
/// Site 1 draws from `config1.seed`; site 2's covariates (and, for
/// independent coupling, its uniforms) come from `config2.seed` on separate
/// streams, so the sites stay independent even when both seeds coincide.
pub fn simulate_paired_sites(
    config1: &SimConfig,
    config2: &SimConfig,
    coupling: Coupling,
) -> Result<(SimulatedPath, SimulatedPath)> {
    config1.validate()?;
    config2.validate()?;
    if config1.n != config2.n || config1.burn_in != config2.burn_in {
        return Err(AcarError::DimensionMismatch(
            "paired sites need equal sample sizes and burn-in".into(),
        ));
    }
    let total = config1.total_len();
    let x1 = simulate_covariates(
        total,
        config1.theta.p(),
        &mut stream_rng(config1.seed, COVARIATE_STREAM),
    )?;
    let x2 = simulate_covariates(
        total,
        config2.theta.p(),
        &mut stream_rng(config2.seed, SECOND_SITE_COVARIATE_STREAM),
    )?;
    let (u1, u2) = coupled_uniforms(config1.seed, config2.seed, total, coupling);
    let site1 = simulate_path(config1, &x1, Some(&u1))?;
    let site2 = simulate_path(config2, &x2, Some(&u2))?;
    Ok((site1, site2))
}

pub fn coupled_uniforms(seed1: u64, seed2: u64, n: usize, coupling: Coupling) -> (Vec<f64>, Vec<f64>) {
    let u1 = simulate_uniforms(n, &mut stream_rng(seed1, UNIFORM_STREAM));
    let u2 = match coupling {
        Coupling::Independent => simulate_uniforms(n, &mut stream_rng(seed2, SECOND_SITE_UNIFORM_STREAM)),
        Coupling::Common => u1.clone(),
        Coupling::Antithetic => u1.iter().map(|u| 1.0 - u).collect(),
    };
    (u1, u2)
}
