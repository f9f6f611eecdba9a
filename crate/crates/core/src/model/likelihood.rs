//! Conditional negative log-likelihood and its gradient.

use crate::error::{AcarError, Result};
use crate::model::latent::{compute_latent_path, shared_drive, FIRST_TERM};
use crate::model::probs::LevelProbs;
use crate::params::{Layout, ParameterVector};
use crate::series::{check_aligned, CovariateMatrix, OrdinalSeries};

/// `−Σ_t log π_{y_t, t}` over explicitly supplied logit rows.
pub fn negative_log_likelihood_from_latent(etas: &[Vec<f64>], levels: &[usize]) -> Result<f64> {
    if etas.len() != levels.len() {
        return Err(AcarError::DimensionMismatch(format!(
            "{} latent rows for {} observations",
            etas.len(),
            levels.len()
        )));
    }
    let mut total = 0.0;
    for (eta, &y) in etas.iter().zip(levels) {
        if y > eta.len() {
            return Err(AcarError::InvalidInput(format!("level {y} exceeds K = {}", eta.len())));
        }
        total += LevelProbs::from_eta(eta).neg_log_prob(y);
    }
    finite(total)
}

/// Conditional negative log-likelihood, conditioning on the first observation.
pub fn negative_log_likelihood(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    eta0: &[f64],
) -> Result<f64> {
    let path = compute_latent_path(theta, series, covariates, eta0)?;
    let mut total = 0.0;
    for t in FIRST_TERM..series.len() {
        total += LevelProbs::from_eta(path.eta(t)).neg_log_prob(series.level(t));
    }
    finite(total)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AcarError::NonFiniteObjective)
    }
}

/// Borrowed data plus fixed settings, evaluated on raw parameter slices.
///
/// This is the hot path used by the optimizer: the gradient recursion is
/// streamed with two `K × dim` buffers instead of materializing the path.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    series: &'a OrdinalSeries,
    covariates: &'a CovariateMatrix,
    eta0: &'a [f64],
    layout: Layout,
}

impl<'a> Objective<'a> {
    pub fn new(series: &'a OrdinalSeries, covariates: &'a CovariateMatrix, eta0: &'a [f64]) -> Result<Self> {
        let k = series.k();
        let p = covariates.ncols();
        check_aligned(series, covariates, k, p)?;
        if eta0.len() != k {
            return Err(AcarError::DimensionMismatch(format!(
                "eta0 has {} entries, expected {k}",
                eta0.len()
            )));
        }
        Ok(Self {
            series,
            covariates,
            eta0,
            layout: Layout::new(k, p),
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of likelihood terms.
    pub fn n_terms(&self) -> usize {
        self.series.len().saturating_sub(FIRST_TERM)
    }

    /// Objective value; `+∞` when the recursion overflows.
    pub fn value(&self, theta: &[f64]) -> f64 {
        let Layout { k, p } = self.layout;
        let (omega, gamma, alpha, beta) = split(theta, k, p);
        let mut eta = self.eta0.to_vec();
        let mut next = vec![0.0; k];
        let mut total = 0.0;
        for t in 1..self.series.len() {
            let drive = shared_drive(gamma, alpha, self.covariates.row(t - 1), self.series.level(t - 1));
            for j in 0..k {
                next[j] = omega[j] + drive + beta[j] * eta[j];
            }
            std::mem::swap(&mut eta, &mut next);
            total += LevelProbs::from_eta(&eta).neg_log_prob(self.series.level(t));
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    /// Objective value with its gradient written to `grad`.
    pub fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let layout = self.layout;
        let Layout { k, p } = layout;
        let dim = layout.dim();
        let (omega, gamma, alpha, beta) = split(theta, k, p);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut eta = self.eta0.to_vec();
        let mut next = vec![0.0; k];
        let mut dprev = vec![0.0; k * dim];
        let mut dcur = vec![0.0; k * dim];
        let mut total = 0.0;
        for t in 1..self.series.len() {
            let x_prev = self.covariates.row(t - 1);
            let y_prev = self.series.level(t - 1);
            let drive = shared_drive(gamma, alpha, x_prev, y_prev);
            for j in 0..k {
                next[j] = omega[j] + drive + beta[j] * eta[j];
                let g = &mut dcur[j * dim..(j + 1) * dim];
                let gp = &dprev[j * dim..(j + 1) * dim];
                for (a, b) in g.iter_mut().zip(gp) {
                    *a = beta[j] * b;
                }
                g[layout.omega(j)] += 1.0;
                for (i, x) in x_prev.iter().enumerate() {
                    g[layout.gamma(i)] += x;
                }
                if y_prev > 0 {
                    g[layout.alpha(y_prev - 1)] += 1.0;
                }
                g[layout.beta(j)] += eta[j];
            }
            std::mem::swap(&mut eta, &mut next);
            std::mem::swap(&mut dprev, &mut dcur);
            let lp = LevelProbs::from_eta(&eta);
            let y = self.series.level(t);
            total += lp.neg_log_prob(y);
            // ∂(−log π_y)/∂η_j = −e_j.
            for (j, e) in lp.residuals(y).into_iter().enumerate() {
                let g = &dprev[j * dim..(j + 1) * dim];
                for (acc, d) in grad.iter_mut().zip(g) {
                    *acc -= e * d;
                }
            }
        }
        if total.is_finite() && grad.iter().all(|g| g.is_finite()) {
            total
        } else {
            f64::INFINITY
        }
    }
}

fn split(theta: &[f64], k: usize, p: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
    let (omega, rest) = theta.split_at(k);
    let (gamma, rest) = rest.split_at(p);
    let (alpha, beta) = rest.split_at(k);
    (omega, gamma, alpha, beta)
}
