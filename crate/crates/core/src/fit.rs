//! Conditional maximum-likelihood estimation over the box `Θ_ε`.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::normal_two_sided;
use crate::error::{AcarError, Result};
use crate::linalg::{self, serde_rows, GuardedSolver};
use crate::model::{latent_path_with_gradients, Objective, PathStatistics, ResidualMatrix, DEFAULT_ETA0};
use crate::optim::{self, LbfgsbOptions, Minimum};
use crate::params::{Layout, ParameterVector, DEFAULT_EPSILON};
use crate::series::{CovariateMatrix, OrdinalSeries};
use crate::sim::stream_rng;

/// Critical value of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Offset of the per-start RNG streams from the fit seed.
const START_STREAM_BASE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_starts: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub objective_tolerance: f64,
    pub seed: u64,
    /// Initial latent value used for every category.
    pub eta0: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 20,
            epsilon: DEFAULT_EPSILON,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            objective_tolerance: 1e-9,
            seed: 0,
            eta0: DEFAULT_ETA0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(AcarError::InvalidInput("n_starts must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(AcarError::InvalidInput(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        if !self.eta0.is_finite() {
            return Err(AcarError::InvalidInput("eta0 must be finite".into()));
        }
        Ok(())
    }

    fn optimizer_options(&self) -> LbfgsbOptions {
        LbfgsbOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            objective_tolerance: self.objective_tolerance,
            ..LbfgsbOptions::default()
        }
    }
}

/// Sandwich pieces at an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Sandwich {
    pub j_hat: DMatrix<f64>,
    pub l_hat: DMatrix<f64>,
    /// `Ĵ⁻¹ L̂ Ĵ⁻ᵀ / n`.
    pub covariance: DMatrix<f64>,
    pub j_condition: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub theta_hat: ParameterVector,
    pub parameter_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub n_obs: usize,
    /// Number of likelihood terms (the first observation is conditioned on).
    pub n_terms: usize,
    pub negloglik: f64,
    pub aic: f64,
    #[serde(with = "serde_rows::option")]
    pub covariance: Option<DMatrix<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub t_stats: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
    #[serde(with = "serde_rows")]
    pub j_hat: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub l_hat: DMatrix<f64>,
    pub j_condition: f64,
    pub covariance_error: Option<String>,
    pub residuals: ResidualMatrix,
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub at_bound: Vec<bool>,
    pub best_start: usize,
    pub start_objectives: Vec<f64>,
    pub epsilon: f64,
    pub eta0: f64,
    pub warnings: Vec<String>,
    /// Per-term score rows at the estimate.
    #[serde(skip)]
    pub scores: DMatrix<f64>,
}

impl FitResult {
    pub fn layout(&self) -> Layout {
        self.theta_hat.layout()
    }

    pub fn any_at_bound(&self) -> bool {
        self.at_bound.iter().any(|&b| b)
    }

    /// Indices whose two-sided 95% Wald test rejects zero.
    pub fn significant(&self, indices: impl IntoIterator<Item = usize>) -> usize {
        match &self.t_stats {
            Some(t) => indices.into_iter().filter(|&i| t[i].abs() > Z_95).count(),
            None => 0,
        }
    }

    pub fn sandwich(&self) -> Result<Sandwich> {
        let covariance = self.covariance.clone().ok_or_else(|| AcarError::Singular {
            what: "J_hat",
            condition: self.j_condition,
        })?;
        Ok(Sandwich {
            j_hat: self.j_hat.clone(),
            l_hat: self.l_hat.clone(),
            covariance,
            j_condition: self.j_condition,
        })
    }
}

/// `AIC = 2·dim + 2·negloglik`.
pub fn aic_value(negloglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 + 2.0 * negloglik
}

pub fn aic(fit: &FitResult) -> f64 {
    aic_value(fit.negloglik, fit.theta_hat.len())
}

/// `Ĵ⁻¹ L̂ Ĵ⁻ᵀ / n` from already-averaged `Ĵ` and `L̂`.
pub fn sandwich_from_components(j_hat: &DMatrix<f64>, l_hat: &DMatrix<f64>, n_terms: usize) -> Result<Sandwich> {
    let solver = GuardedSolver::new(j_hat, "J_hat")?;
    let covariance = linalg::sandwich(&solver, l_hat) / n_terms as f64;
    Ok(Sandwich {
        j_hat: j_hat.clone(),
        l_hat: l_hat.clone(),
        covariance,
        j_condition: solver.condition(),
    })
}

pub fn sandwich_covariance(
    theta_hat: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    eta0: &[f64],
) -> Result<Sandwich> {
    let path = latent_path_with_gradients(theta_hat, series, covariates, eta0)?;
    let stats = PathStatistics::compute(theta_hat, series, covariates, &path)?;
    sandwich_from_components(&stats.mean_hessian(), &stats.mean_score_outer(), stats.n_terms())
}

/// Random start: `ω, γ, α ~ U[−2, 2]`, `β ~ U[−0.9, 0.9]`.
pub fn random_start<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Vec<f64> {
    (0..layout.dim())
        .map(|i| {
            if layout.is_beta(i) {
                rng.random_range(-0.9..=0.9)
            } else {
                rng.random_range(-2.0..=2.0)
            }
        })
        .collect()
}

fn start_points(layout: Layout, config: &FitConfig) -> Vec<Vec<f64>> {
    (0..config.n_starts as u64)
        .map(|s| random_start(layout, &mut stream_rng(config.seed, START_STREAM_BASE + s)))
        .collect()
}

/// Fits from `config.n_starts` random starts.
pub fn fit(series: &OrdinalSeries, covariates: &CovariateMatrix, config: &FitConfig) -> Result<FitResult> {
    let layout = Layout::new(series.k(), covariates.ncols());
    config.validate()?;
    fit_from_starts(series, covariates, config, &start_points(layout, config))
}

/// Fits from explicit starting points; the lowest final objective wins and
/// ties go to the earliest start.
pub fn fit_from_starts(
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    config: &FitConfig,
    starts: &[Vec<f64>],
) -> Result<FitResult> {
    config.validate()?;
    let k = series.k();
    let layout = Layout::new(k, covariates.ncols());
    let eta0 = vec![config.eta0; k];
    let objective = Objective::new(series, covariates, &eta0)?;
    if starts.is_empty() {
        return Err(AcarError::InvalidInput("no starting points".into()));
    }
    if let Some(bad) = starts.iter().find(|s| s.len() != layout.dim()) {
        return Err(AcarError::DimensionMismatch(format!(
            "start has {} coordinates, expected {}",
            bad.len(),
            layout.dim()
        )));
    }
    let (lower, upper) = layout.bounds(config.epsilon);
    let options = config.optimizer_options();

    let runs: Vec<Minimum> = starts
        .par_iter()
        .map(|x0| optim::minimize(|x, g| objective.value_and_gradient(x, g), x0, &lower, &upper, &options))
        .collect();

    let start_objectives: Vec<f64> = runs.iter().map(|m| m.value).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, m)| m.termination.converged() && m.value.is_finite())
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        let best_objective = start_objectives
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        return Err(AcarError::NonConvergence { best_objective });
    };
    // Polish the winner on the gradient criterion alone; the relative
    // objective rule can stop well short of the optimum on flat ridges.
    let polish_options = LbfgsbOptions {
        objective_tolerance: 0.0,
        ..options
    };
    let polished = optim::minimize(
        |x, g| objective.value_and_gradient(x, g),
        &runs[best].x,
        &lower,
        &upper,
        &polish_options,
    );
    let run = if polished.value.is_finite() && polished.value <= runs[best].value {
        &polished
    } else {
        &runs[best]
    };

    let mut warnings = Vec::new();
    let n = series.len();
    if n < layout.dim() + 2 {
        warnings.push(format!(
            "sample size {n} is small for {} parameters (recommended >= {})",
            layout.dim(),
            layout.dim() + 2
        ));
    }
    if series.distinct_levels() < 2 {
        warnings.push("series is constant; estimates are not identified".into());
    } else if series.distinct_levels() < k + 1 {
        warnings.push("some levels are never observed; their parameters are weakly identified".into());
    }

    let theta_hat = ParameterVector::from_flat(k, layout.p, run.x.clone())?;
    let mut result = summarize(theta_hat, series, covariates, config, &eta0, run.value, warnings)?;
    result.converged = run.termination.converged();
    result.termination = format!("{:?}", run.termination);
    result.iterations = run.iterations;
    result.projected_gradient_norm = run.projected_gradient_norm(&lower, &upper);
    result.best_start = best;
    result.start_objectives = start_objectives;
    Ok(result)
}

/// Builds the inference summary at a given estimate.
fn summarize(
    theta_hat: ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    config: &FitConfig,
    eta0: &[f64],
    negloglik: f64,
    mut warnings: Vec<String>,
) -> Result<FitResult> {
    let layout = theta_hat.layout();
    let path = latent_path_with_gradients(&theta_hat, series, covariates, eta0)?;
    let stats = PathStatistics::compute(&theta_hat, series, covariates, &path)?;
    let j_hat = stats.mean_hessian();
    let l_hat = stats.mean_score_outer();
    let beta_limit = 1.0 - config.epsilon - 1e-9;
    let at_bound: Vec<bool> = theta_hat.beta().iter().map(|b| b.abs() >= beta_limit).collect();
    if at_bound.iter().any(|&b| b) {
        warnings.push("a feedback coefficient sits on the boundary of the parameter box".into());
    }

    let (covariance, j_condition, covariance_error) = match sandwich_from_components(&j_hat, &l_hat, stats.n_terms()) {
        Ok(s) => (Some(s.covariance), s.j_condition, None),
        Err(AcarError::Singular { condition, .. }) => (
            None,
            condition,
            Some(format!("J_hat is singular (condition {condition:.3e})")),
        ),
        Err(e) => return Err(e),
    };
    let std_errors: Option<Vec<f64>> = covariance
        .as_ref()
        .map(|c| (0..layout.dim()).map(|i| c[(i, i)].max(0.0).sqrt()).collect());
    let t_stats: Option<Vec<f64>> = std_errors
        .as_ref()
        .map(|se| theta_hat.as_slice().iter().zip(se).map(|(v, s)| v / s).collect());
    let p_values = t_stats
        .as_ref()
        .map(|t| t.iter().map(|&z| normal_two_sided(z)).collect());

    Ok(FitResult {
        parameter_names: layout.names(),
        covariate_names: covariates.column_names().to_vec(),
        n_obs: series.len(),
        n_terms: stats.n_terms(),
        negloglik,
        aic: aic_value(negloglik, layout.dim()),
        covariance,
        std_errors,
        t_stats,
        p_values,
        j_hat,
        l_hat,
        j_condition,
        covariance_error,
        residuals: stats.residuals,
        converged: true,
        termination: String::new(),
        iterations: 0,
        projected_gradient_norm: 0.0,
        at_bound,
        best_start: 0,
        start_objectives: Vec::new(),
        epsilon: config.epsilon,
        eta0: config.eta0,
        warnings,
        scores: stats.scores,
        theta_hat,
    })
}

/// Vertex `−θ_lin / (2 θ_quad)` of a fitted quadratic effect with its
/// delta-method standard error and symmetric 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ThresholdResult {
    /// Interval with its lower end clipped at zero, for quantities such as
    /// temperature ranges that cannot be negative.
    pub fn truncated_at_zero(&self) -> (f64, f64) {
        (self.ci_low.max(0.0), self.ci_high)
    }

    /// Converts from covariate units back to raw units when the covariate was
    /// entered as `raw · scale`.
    pub fn in_raw_units(&self, scale: f64) -> Self {
        Self {
            estimate: self.estimate / scale,
            std_error: self.std_error / scale.abs(),
            ci_low: self.ci_low / scale,
            ci_high: self.ci_high / scale,
        }
    }
}

const QUADRATIC_TOLERANCE: f64 = 1e-12;

/// Vertex from the two coefficients and the 2×2 covariance of
/// `(θ_lin, θ_quad)`.
pub fn threshold_from_coefficients(linear: f64, quadratic: f64, cov: [[f64; 2]; 2]) -> Result<ThresholdResult> {
    if !(quadratic.abs() >= QUADRATIC_TOLERANCE) {
        return Err(AcarError::DegenerateQuadratic(quadratic));
    }
    let estimate = -linear / (2.0 * quadratic);
    let mu = [-1.0 / (2.0 * quadratic), linear / (2.0 * quadratic * quadratic)];
    let var = mu[0] * mu[0] * cov[0][0] + 2.0 * mu[0] * mu[1] * cov[0][1] + mu[1] * mu[1] * cov[1][1];
    let std_error = var.max(0.0).sqrt();
    Ok(ThresholdResult {
        estimate,
        std_error,
        ci_low: estimate - Z_95 * std_error,
        ci_high: estimate + Z_95 * std_error,
    })
}

pub fn quadratic_threshold(fit: &FitResult, linear_index: usize, quadratic_index: usize) -> Result<ThresholdResult> {
    let dim = fit.theta_hat.len();
    if linear_index >= dim || quadratic_index >= dim {
        return Err(AcarError::InvalidInput("threshold index out of range".into()));
    }
    let cov = fit.covariance.as_ref().ok_or_else(|| AcarError::Singular {
        what: "J_hat",
        condition: fit.j_condition,
    })?;
    let theta = fit.theta_hat.as_slice();
    threshold_from_coefficients(
        theta[linear_index],
        theta[quadratic_index],
        [
            [cov[(linear_index, linear_index)], cov[(linear_index, quadratic_index)]],
            [
                cov[(quadratic_index, linear_index)],
                cov[(quadratic_index, quadratic_index)],
            ],
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::simulation_design;
    use crate::sim::{simulate, SimConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn aic_arithmetic() {
        assert_abs_diff_eq!(aic_value(10.081, 14), 48.162, epsilon = 1e-12);
        assert_eq!(aic_value(0.0, 0), 0.0);
        assert_abs_diff_eq!(aic_value(3.3, 6) - aic_value(3.3, 5), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_vertices() {
        let zero = [[0.0; 2]; 2];
        let cases = [
            (-58.714, 12.927, 2.2710),
            (31.206, -4.794, 3.2546),
            (-67.179, 15.404, 2.1806),
        ];
        for (lin, quad, want) in cases {
            let r = threshold_from_coefficients(lin, quad, zero).unwrap();
            assert!((r.estimate - want).abs() < 1e-3, "{} vs {want}", r.estimate);
        }
        let r = threshold_from_coefficients(-58.714, 12.927, zero).unwrap();
        assert_abs_diff_eq!(r.in_raw_units(0.1).estimate, 22.71, epsilon = 0.01);
    }

    #[test]
    fn threshold_delta_method_matches_finite_differences() {
        let (lin, quad) = (1.3, -0.4);
        let cov = [[0.04, 0.01], [0.01, 0.02]];
        let r = threshold_from_coefficients(lin, quad, cov).unwrap();
        let f = |a: f64, b: f64| -a / (2.0 * b);
        let h = 1e-6;
        let g = [
            (f(lin + h, quad) - f(lin - h, quad)) / (2.0 * h),
            (f(lin, quad + h) - f(lin, quad - h)) / (2.0 * h),
        ];
        let var = g[0] * g[0] * cov[0][0] + 2.0 * g[0] * g[1] * cov[0][1] + g[1] * g[1] * cov[1][1];
        assert_abs_diff_eq!(r.std_error, var.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(r.estimate - r.ci_low, r.ci_high - r.estimate, epsilon = 1e-12);
        assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
    }

    #[test]
    fn threshold_scale_invariance() {
        let cov = [[0.3, -0.1], [-0.1, 0.2]];
        let base = threshold_from_coefficients(2.0, 0.7, cov).unwrap();
        for c in [-3.0, 0.5, 10.0] {
            let r = threshold_from_coefficients(2.0 * c, 0.7 * c, cov).unwrap();
            assert_abs_diff_eq!(r.estimate, base.estimate, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_quadratic_is_an_error() {
        assert!(matches!(
            threshold_from_coefficients(1.0, 0.0, [[1.0, 0.0], [0.0, 1.0]]),
            Err(AcarError::DegenerateQuadratic(_))
        ));
    }

    #[test]
    fn truncation_clips_lower_end() {
        let r = ThresholdResult {
            estimate: 2.0,
            std_error: 2.0,
            ci_low: -1.92,
            ci_high: 5.92,
        };
        assert_eq!(r.truncated_at_zero(), (0.0, 5.92));
    }

    #[test]
    fn binomial_logit_sandwich_variance() {
        // i.i.d. binary data, intercept-only logit: at the MLE the sandwich
        // variance of ω̂ is 1 / (n p̂ (1 − p̂)).
        let levels: Vec<usize> = (0..400).map(|t| ((t * 7919) % 10 < 3) as usize).collect();
        let n = levels.len();
        let p_hat = levels.iter().sum::<usize>() as f64 / n as f64;
        let omega = (p_hat / (1.0 - p_hat)).ln();
        let (mut j, mut l) = (0.0, 0.0);
        for &y in &levels {
            let p = 1.0 / (1.0 + (-omega).exp());
            j += p * (1.0 - p);
            l += (y as f64 - p).powi(2);
        }
        let jm = DMatrix::from_element(1, 1, j / n as f64);
        let lm = DMatrix::from_element(1, 1, l / n as f64);
        let s = sandwich_from_components(&jm, &lm, n).unwrap();
        assert_abs_diff_eq!(
            s.covariance[(0, 0)],
            1.0 / (n as f64 * p_hat * (1.0 - p_hat)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_information_is_singular() {
        let z = DMatrix::zeros(3, 3);
        assert!(matches!(
            sandwich_from_components(&z, &z, 10),
            Err(AcarError::Singular { .. })
        ));
    }

    #[test]
    fn fit_recovers_design_one() {
        let theta0 = simulation_design(1).unwrap();
        let data = simulate(&SimConfig::new(theta0.clone(), 500, 2024)).unwrap();
        let config = FitConfig {
            n_starts: 8,
            seed: 1,
            ..FitConfig::default()
        };
        let fit = fit(&data.series, &data.covariates, &config).unwrap();
        assert!(fit.converged);
        let beta = fit.theta_hat.beta();
        assert!((beta[0] - 0.8).abs() < 0.1, "beta1 = {}", beta[0]);
        assert_abs_diff_eq!(fit.aic, aic(&fit), epsilon = 1e-12);
        let cov = fit.covariance.as_ref().unwrap();
        assert!((cov - cov.transpose()).amax() < 1e-12);
        assert!(cov.clone().symmetric_eigenvalues().min() > -1e-10);
        for (i, se) in fit.std_errors.as_ref().unwrap().iter().enumerate() {
            assert_abs_diff_eq!(*se, cov[(i, i)].sqrt(), epsilon = 1e-15);
        }

        // Restarting at the optimum leaves the objective unchanged.
        let refit = fit_from_starts(
            &data.series,
            &data.covariates,
            &config,
            &[fit.theta_hat.as_slice().to_vec()],
        )
        .unwrap();
        assert!((refit.negloglik - fit.negloglik).abs() <= 1e-8);
    }

    #[test]
    fn config_validation() {
        let bad = FitConfig {
            n_starts: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            epsilon: 0.7,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
