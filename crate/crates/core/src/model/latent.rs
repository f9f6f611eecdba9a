//! Latent adjacent-logit recursion and its parameter derivatives.
//!
//! Position 0 carries the initial value `η_0` and a zero gradient; it also
//! consumes the first observation as the lag seed. For `t ≥ 1`,
//!
//! `η_{j,t} = ω_j + γᵀX_{t−1} + αᵀȲ_{t−1} + β_j η_{j,t−1}`.

use crate::error::{AcarError, Result};
use crate::params::ParameterVector;
use crate::series::{check_aligned, CovariateMatrix, OrdinalSeries};

/// Default initial latent value for every category.
pub const DEFAULT_ETA0: f64 = 0.5;

/// First time index that contributes to the likelihood.
pub const FIRST_TERM: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    k: usize,
    dim: usize,
    n: usize,
    eta: Vec<f64>,
    grad: Vec<f64>,
    eta0: Vec<f64>,
}

impl LatentPath {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta0(&self) -> &[f64] {
        &self.eta0
    }

    /// `η_t` as a `K`-vector.
    pub fn eta(&self, t: usize) -> &[f64] {
        &self.eta[t * self.k..(t + 1) * self.k]
    }

    pub fn has_gradients(&self) -> bool {
        !self.grad.is_empty()
    }

    /// `∇_θ η_{j,t}` (zero-based category `j`).
    pub fn grad(&self, t: usize, j: usize) -> &[f64] {
        let start = (t * self.k + j) * self.dim;
        &self.grad[start..start + self.dim]
    }
}

fn check_eta0(eta0: &[f64], k: usize) -> Result<()> {
    if eta0.len() != k {
        return Err(AcarError::DimensionMismatch(format!(
            "eta0 has {} entries, expected {k}",
            eta0.len()
        )));
    }
    if eta0.iter().any(|v| !v.is_finite()) {
        return Err(AcarError::InvalidInput("eta0 must be finite".into()));
    }
    Ok(())
}

/// Runs the recursion without derivatives.
pub fn compute_latent_path(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    eta0: &[f64],
) -> Result<LatentPath> {
    let (k, p) = (theta.k(), theta.p());
    check_aligned(series, covariates, k, p)?;
    check_eta0(eta0, k)?;
    let n = series.len();
    let mut eta = vec![0.0; n * k];
    if n > 0 {
        eta[..k].copy_from_slice(eta0);
    }
    let (omega, gamma, alpha, beta) = (theta.omega(), theta.gamma(), theta.alpha(), theta.beta());
    for t in 1..n {
        let drive = shared_drive(gamma, alpha, covariates.row(t - 1), series.level(t - 1));
        for j in 0..k {
            let v = omega[j] + drive + beta[j] * eta[(t - 1) * k + j];
            if !v.is_finite() {
                return Err(AcarError::NonFiniteLatent { t, category: j + 1 });
            }
            eta[t * k + j] = v;
        }
    }
    Ok(LatentPath {
        k,
        dim: theta.len(),
        n,
        eta,
        grad: Vec::new(),
        eta0: eta0.to_vec(),
    })
}

/// `γᵀX_{t−1} + αᵀȲ_{t−1}`, the part of the recursion shared by all categories.
#[inline]
pub(crate) fn shared_drive(gamma: &[f64], alpha: &[f64], x_prev: &[f64], y_prev: usize) -> f64 {
    let mut s: f64 = gamma.iter().zip(x_prev).map(|(g, x)| g * x).sum();
    if y_prev > 0 {
        s += alpha[y_prev - 1];
    }
    s
}

/// Fills `path.grad` with `∇_θ η_{j,t}`, starting from a zero gradient at
/// position 0.
pub fn latent_gradients(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    path: &mut LatentPath,
) -> Result<()> {
    let (k, p) = (theta.k(), theta.p());
    check_aligned(series, covariates, k, p)?;
    if path.n != series.len() || path.k != k {
        return Err(AcarError::DimensionMismatch("latent path does not match series".into()));
    }
    let layout = theta.layout();
    let dim = layout.dim();
    let n = path.n;
    let beta = theta.beta();
    let mut grad = vec![0.0; n * k * dim];
    for t in 1..n {
        let x_prev = covariates.row(t - 1);
        let y_prev = series.level(t - 1);
        for j in 0..k {
            let prev = (t - 1) * k + j;
            let cur = t * k + j;
            let (head, tail) = grad.split_at_mut(cur * dim);
            let g_prev = &head[prev * dim..prev * dim + dim];
            let g = &mut tail[..dim];
            let b = beta[j];
            for (gi, gp) in g.iter_mut().zip(g_prev) {
                *gi = b * gp;
            }
            g[layout.omega(j)] += 1.0;
            for (i, x) in x_prev.iter().enumerate() {
                g[layout.gamma(i)] += x;
            }
            if y_prev > 0 {
                g[layout.alpha(y_prev - 1)] += 1.0;
            }
            g[layout.beta(j)] += path.eta[prev];
        }
    }
    path.grad = grad;
    Ok(())
}

/// Latent path with gradients in one call.
pub fn latent_path_with_gradients(
    theta: &ParameterVector,
    series: &OrdinalSeries,
    covariates: &CovariateMatrix,
    eta0: &[f64],
) -> Result<LatentPath> {
    let mut path = compute_latent_path(theta, series, covariates, eta0)?;
    latent_gradients(theta, series, covariates, &mut path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::simulation_design;
    use approx::assert_abs_diff_eq;

    fn constant_inputs(n: usize, k: usize, p: usize) -> (OrdinalSeries, CovariateMatrix) {
        (
            OrdinalSeries::new(k, vec![0; n]).unwrap(),
            CovariateMatrix::with_default_names(n, p, vec![0.0; n * p]).unwrap(),
        )
    }

    #[test]
    fn no_dynamics_gives_intercepts() {
        let theta = ParameterVector::from_parts(&[0.3, -1.0], &[0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let series = OrdinalSeries::new(2, vec![0, 1, 2, 1, 0]).unwrap();
        let x = CovariateMatrix::with_default_names(5, 1, vec![1.0, -2.0, 0.5, 3.0, 1.0]).unwrap();
        let path = compute_latent_path(&theta, &series, &x, &[0.5, 0.5]).unwrap();
        for t in 1..5 {
            assert_eq!(path.eta(t), &[0.3, -1.0]);
        }
    }

    #[test]
    fn geometric_decay() {
        let theta = ParameterVector::from_parts(&[0.0], &[], &[0.0], &[0.5]).unwrap();
        let (s, x) = constant_inputs(8, 1, 0);
        let c = 1.7;
        let path = compute_latent_path(&theta, &s, &x, &[c]).unwrap();
        for t in 0..8 {
            assert_abs_diff_eq!(path.eta(t)[0], c * 0.5f64.powi(t as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn design_one_three_steps_by_hand() {
        let theta = simulation_design(1).unwrap();
        let (s, x) = constant_inputs(4, 3, 5);
        let path = compute_latent_path(&theta, &s, &x, &[0.5; 3]).unwrap();
        // η_t = ω + β η_{t−1} with X ≡ 0 and level 0 throughout.
        let omega = [1.2, 0.7, 0.5];
        let beta = [0.8, -0.2, 0.3];
        for j in 0..3 {
            let e1 = omega[j] + beta[j] * 0.5;
            let e2 = omega[j] + beta[j] * e1;
            let e3 = omega[j] + beta[j] * e2;
            assert_abs_diff_eq!(path.eta(1)[j], e1, epsilon = 1e-15);
            assert_abs_diff_eq!(path.eta(2)[j], e2, epsilon = 1e-15);
            assert_abs_diff_eq!(path.eta(3)[j], e3, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(path.eta(3)[0], 1.2 + 0.8 * (1.2 + 0.8 * 1.6), epsilon = 1e-15);
    }

    #[test]
    fn zero_feedback_unit_intercept_derivative() {
        let theta = ParameterVector::from_parts(&[0.1, 0.2], &[0.4], &[0.3, -0.3], &[0.0, 0.6]).unwrap();
        let s = OrdinalSeries::new(2, vec![0, 1, 2, 2, 0, 1]).unwrap();
        let x = CovariateMatrix::with_default_names(6, 1, vec![0.1, 0.2, -0.3, 0.4, 1.0, 2.0]).unwrap();
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.5, 0.5]).unwrap();
        for t in 1..6 {
            assert_eq!(path.grad(t, 0)[0], 1.0);
        }
        assert!(path.grad(0, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_category_derivatives_vanish() {
        let theta = simulation_design(3).unwrap();
        let layout = theta.layout();
        let s = OrdinalSeries::new(3, vec![0, 1, 2, 3, 3, 1, 0, 2]).unwrap();
        let vals: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
        let x = CovariateMatrix::with_default_names(8, 5, vals).unwrap();
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.5; 3]).unwrap();
        for t in 0..8 {
            for k in 0..3 {
                for l in 0..3 {
                    if l != k {
                        assert_eq!(path.grad(t, k)[layout.omega(l)], 0.0);
                        assert_eq!(path.grad(t, k)[layout.beta(l)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn covariate_gradient_matches_finite_differences() {
        let theta = simulation_design(1).unwrap();
        let layout = theta.layout();
        let n = 30;
        let levels: Vec<usize> = (0..n).map(|t| (t * 7 + t / 3) % 4).collect();
        let s = OrdinalSeries::new(3, levels).unwrap();
        let vals: Vec<f64> = (0..n * 5).map(|i| ((i as f64) * 0.731).sin()).collect();
        let x = CovariateMatrix::with_default_names(n, 5, vals).unwrap();
        let path = latent_path_with_gradients(&theta, &s, &x, &[0.5; 3]).unwrap();
        let h = 1e-6;
        for i in 0..layout.dim() {
            let mut up = theta.clone();
            up.as_mut_slice()[i] += h;
            let mut dn = theta.clone();
            dn.as_mut_slice()[i] -= h;
            let pu = compute_latent_path(&up, &s, &x, &[0.5; 3]).unwrap();
            let pd = compute_latent_path(&dn, &s, &x, &[0.5; 3]).unwrap();
            for t in 1..n {
                for k in 0..3 {
                    let fd = (pu.eta(t)[k] - pd.eta(t)[k]) / (2.0 * h);
                    let an = path.grad(t, k)[i];
                    let rel = (fd - an).abs() / an.abs().max(1.0);
                    assert!(rel <= 1e-6, "param {i} t {t} k {k}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let theta = ParameterVector::from_parts(&[1e308], &[], &[0.0], &[0.9]).unwrap();
        let (s, x) = constant_inputs(4, 1, 0);
        let err = compute_latent_path(&theta, &s, &x, &[1e308]).unwrap_err();
        assert!(matches!(err, AcarError::NonFiniteLatent { t: 1, category: 1 }));
    }
}
