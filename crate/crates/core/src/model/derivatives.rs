//! Per-observation score, information-style Hessian, residuals and the
//! residual Jacobian.
//!
//! With `M_t(k, l) = P(Y_t ≥ max(k,l)) · P(Y_t < min(k,l))` (the conditional
//! covariance of the indicators `1{Y_t ≥ k}`), the quantities are
//!
//! - `e_{k,t} = 1{Y_t ≥ k} − P(Y_t ≥ k)`
//! - `s_t = −Σ_k e_{k,t} ∇η_{k,t}`
//! - `h_t = Σ_{k,l} M_t(k,l) ∇η_{k,t} ∇η_{l,t}ᵀ`
//! - `ξ_t(k, ·) = −Σ_l M_t(k,l) ∇η_{l,t}ᵀ`
//!
//! Rows are indexed by likelihood term, i.e. row `r` belongs to time
//! `r + FIRST_TERM`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{AcarError, Result};
use crate::model::latent::{LatentPath, FIRST_TERM};
use crate::model::probs::LevelProbs;
use crate::params::ParameterVector;
use crate::series::{check_aligned, CovariateMatrix, OrdinalSeries};

/// Residuals `e_t` (`rows × K`) and their Jacobians `ξ_t` (`K × dim` each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualMatrix {
    #[serde(with = "crate::linalg::serde_rows")]
    pub e: DMatrix<f64>,
    #[serde(with = "crate::linalg::serde_rows::list")]
    pub xi: Vec<DMatrix<f64>>,
}

impl ResidualMatrix {
    pub fn len(&self) -> usize {
        self.e.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.e.nrows() == 0
    }

    pub fn k(&self) -> usize {
        self.e.ncols()
    }

    /// All-zero residuals of the given shape.
    pub fn zeros(rows: usize, k: usize, dim: usize) -> Self {
        Self {
            e: DMatrix::zeros(rows, k),
            xi: vec![DMatrix::zeros(k, dim); rows],
        }
    }
}

fn check_path(path: &LatentPath, series: &OrdinalSeries, theta: &ParameterVector) -> Result<()> {
    if path.len() != series.len() || path.k() != theta.k() || path.dim() != theta.len() {
        return Err(AcarError::DimensionMismatch("latent path does not match inputs".into()));
    }
    if !path.has_gradients() {
        return Err(AcarError::InvalidInput("latent path has no gradients".into()));
    }
    Ok(())
}

fn probs_at(path: &LatentPath, t: usize) -> LevelProbs {
    LevelProbs::from_eta(path.eta(t))
}

/// Score rows `s_t`, one per likelihood term.
pub fn score_path(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    path: &LatentPath,
) -> Result<DMatrix<f64>> {
    check_aligned(series, covariates, theta.k(), theta.p())?;
    check_path(path, series, theta)?;
    let rows = series.len().saturating_sub(FIRST_TERM);
    let dim = theta.len();
    let mut scores = DMatrix::zeros(rows, dim);
    for r in 0..rows {
        let t = r + FIRST_TERM;
        let e = probs_at(path, t).residuals(series.level(t));
        for (k, ek) in e.iter().enumerate() {
            let g = path.grad(t, k);
            for i in 0..dim {
                scores[(r, i)] -= ek * g[i];
            }
        }
    }
    Ok(scores)
}

/// Information-style Hessians `h_t`, symmetrized.
pub fn hessian_path(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    path: &LatentPath,
) -> Result<Vec<DMatrix<f64>>> {
    check_aligned(series, covariates, theta.k(), theta.p())?;
    check_path(path, series, theta)?;
    let rows = series.len().saturating_sub(FIRST_TERM);
    Ok((0..rows)
        .map(|r| {
            let t = r + FIRST_TERM;
            hessian_term(&probs_at(path, t), path, t)
        })
        .collect())
}

fn gradient_block(path: &LatentPath, t: usize) -> DMatrix<f64> {
    let (k, dim) = (path.k(), path.dim());
    DMatrix::from_fn(k, dim, |j, i| path.grad(t, j)[i])
}

fn covariance_block(lp: &LevelProbs) -> DMatrix<f64> {
    let k = lp.k();
    DMatrix::from_fn(k, k, |a, b| lp.indicator_covariance(a + 1, b + 1))
}

fn hessian_term(lp: &LevelProbs, path: &LatentPath, t: usize) -> DMatrix<f64> {
    let grads = gradient_block(path, t);
    let m = covariance_block(lp);
    let h = grads.transpose() * m * &grads;
    (&h + h.transpose()) * 0.5
}

/// Residuals and their Jacobian with respect to θ.
pub fn residual_path(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    path: &LatentPath,
) -> Result<ResidualMatrix> {
    check_aligned(series, covariates, theta.k(), theta.p())?;
    check_path(path, series, theta)?;
    let k = theta.k();
    let rows = series.len().saturating_sub(FIRST_TERM);
    let mut e = DMatrix::zeros(rows, k);
    let mut xi = Vec::with_capacity(rows);
    for r in 0..rows {
        let t = r + FIRST_TERM;
        let lp = probs_at(path, t);
        for (j, v) in lp.residuals(series.level(t)).into_iter().enumerate() {
            e[(r, j)] = v;
        }
        xi.push(-(covariance_block(&lp) * gradient_block(path, t)));
    }
    Ok(ResidualMatrix { e, xi })
}

/// Everything inference needs from one pass over the data.
#[derive(Debug, Clone)]
pub struct PathStatistics {
    pub scores: DMatrix<f64>,
    pub hessians: Vec<DMatrix<f64>>,
    pub residuals: ResidualMatrix,
}

impl PathStatistics {
    pub fn compute(
        theta: &ParameterVector,
        series: &OrdinalSeries,
        covariates: &CovariateMatrix,
        path: &LatentPath,
    ) -> Result<Self> {
        let residuals = residual_path(theta, series, covariates, path)?;
        let rows = residuals.len();
        let dim = theta.len();
        let mut scores = DMatrix::zeros(rows, dim);
        let mut hessians = Vec::with_capacity(rows);
        for r in 0..rows {
            let t = r + FIRST_TERM;
            let grads = gradient_block(path, t);
            let s = -(grads.transpose() * residuals.e.row(r).transpose());
            scores.set_row(r, &s.transpose());
            let lp = probs_at(path, t);
            let h = grads.transpose() * covariance_block(&lp) * &grads;
            hessians.push((&h + h.transpose()) * 0.5);
        }
        Ok(Self {
            scores,
            hessians,
            residuals,
        })
    }

    pub fn n_terms(&self) -> usize {
        self.scores.nrows()
    }

    /// `Ĵ = mean h_t`.
    pub fn mean_hessian(&self) -> DMatrix<f64> {
        let dim = self.scores.ncols();
        let mut j = DMatrix::zeros(dim, dim);
        for h in &self.hessians {
            j += h;
        }
        j / self.n_terms().max(1) as f64
    }

    /// `L̂ = mean s_t s_tᵀ`.
    pub fn mean_score_outer(&self) -> DMatrix<f64> {
        self.scores.transpose() * &self.scores / self.n_terms().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::latent::latent_path_with_gradients;
    use crate::model::likelihood::negative_log_likelihood;
    use crate::params::simulation_design;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, k: usize, p: usize, seed: u64) -> (OrdinalSeries, CovariateMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = (0..n).map(|_| rng.random_range(0..=k)).collect();
        let vals = (0..n * p).map(|_| rng.random_range(-1.5..1.5)).collect();
        (
            OrdinalSeries::new(k, levels).unwrap(),
            CovariateMatrix::with_default_names(n, p, vals).unwrap(),
        )
    }

    #[test]
    fn single_category_score_identity() {
        let theta = ParameterVector::from_parts(&[0.2], &[0.5, -0.4], &[0.7], &[0.3]).unwrap();
        let (s, x) = random_data(40, 1, 2, 9);
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.5]).unwrap();
        let scores = score_path(&theta, &s, &x, &path).unwrap();
        let res = residual_path(&theta, &s, &x, &path).unwrap();
        for r in 0..scores.nrows() {
            let g = path.grad(r + 1, 0);
            for i in 0..theta.len() {
                assert_eq!(scores[(r, i)], -res.e[(r, 0)] * g[i]);
            }
        }
    }

    #[test]
    fn binary_hessian_at_zero_logit() {
        // K = 1, η = 0, ∇η = u → h = π(1 − π) u uᵀ = 0.25 u uᵀ.
        let theta = ParameterVector::from_parts(&[0.0], &[], &[0.0], &[0.0]).unwrap();
        let s = OrdinalSeries::new(1, vec![1, 0]).unwrap();
        let x = CovariateMatrix::empty(2);
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.0]).unwrap();
        let h = hessian_path(&theta, &s, &x, &path).unwrap();
        // t = 1: ∇η = (1, Ȳ_0 = 1, η_0 = 0).
        let u = [1.0, 1.0, 0.0];
        for a in 0..3 {
            for b in 0..3 {
                assert_abs_diff_eq!(h[0][(a, b)], 0.25 * u[a] * u[b], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_gradients_give_zero_hessian() {
        let theta = ParameterVector::from_parts(&[0.3, 0.1], &[], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let s = OrdinalSeries::new(2, vec![1]).unwrap();
        let x = CovariateMatrix::empty(1);
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.5, 0.5]).unwrap();
        // Position 0 carries a zero gradient by construction.
        let lp = LevelProbs::from_eta(path.eta(0));
        let h = hessian_term(&lp, &path, 0);
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn score_sums_to_objective_gradient() {
        let theta = simulation_design(2).unwrap();
        let (s, x) = random_data(80, 3, 5, 21);
        let eta0 = [0.5; 3];
        let path = latent_path_with_gradients(&theta, &s, &x, &eta0).unwrap();
        let scores = score_path(&theta, &s, &x, &path).unwrap();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            up.as_mut_slice()[i] += h;
            let mut dn = theta.clone();
            dn.as_mut_slice()[i] -= h;
            let fd = (negative_log_likelihood(&up, &s, &x, &eta0).unwrap()
                - negative_log_likelihood(&dn, &s, &x, &eta0).unwrap())
                / (2.0 * h);
            let an: f64 = scores.column(i).sum();
            assert!(
                (an - fd).abs() <= 1e-5 * an.abs().max(1.0),
                "coordinate {i}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn residual_jacobian_matches_finite_differences() {
        let theta = simulation_design(1).unwrap();
        let (s, x) = random_data(25, 3, 5, 4);
        let eta0 = [0.5; 3];
        let path = latent_path_with_gradients(&theta, &s, &x, &eta0).unwrap();
        let res = residual_path(&theta, &s, &x, &path).unwrap();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            up.as_mut_slice()[i] += h;
            let mut dn = theta.clone();
            dn.as_mut_slice()[i] -= h;
            let eu = residual_path(&up, &s, &x, &latent_path_with_gradients(&up, &s, &x, &eta0).unwrap()).unwrap();
            let ed = residual_path(&dn, &s, &x, &latent_path_with_gradients(&dn, &s, &x, &eta0).unwrap()).unwrap();
            for r in 0..res.len() {
                for k in 0..3 {
                    let fd = (eu.e[(r, k)] - ed.e[(r, k)]) / (2.0 * h);
                    let an = res.xi[r][(k, i)];
                    assert!((an - fd).abs() <= 1e-5 * an.abs().max(1.0), "r {r} k {k} i {i}");
                }
            }
        }
    }

    #[test]
    fn residuals_lie_in_open_interval_and_bundle_agrees() {
        let theta = simulation_design(3).unwrap();
        let (s, x) = random_data(50, 3, 5, 8);
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.5; 3]).unwrap();
        let stats = PathStatistics::compute(&theta, &s, &x, &path).unwrap();
        assert!(stats.residuals.e.iter().all(|&v| v > -1.0 && v < 1.0));
        let scores = score_path(&theta, &s, &x, &path).unwrap();
        let hess = hessian_path(&theta, &s, &x, &path).unwrap();
        assert!((&stats.scores - &scores).amax() <= 1e-12);
        for (a, b) in stats.hessians.iter().zip(&hess) {
            assert!((a - b).amax() <= 1e-12);
            assert!((a - a.transpose()).amax() == 0.0);
        }
    }
}
