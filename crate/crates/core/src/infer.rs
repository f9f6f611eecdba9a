//! Portmanteau goodness-of-fit test on the residual autocorrelations and the
//! two-site parameter comparison tests.
//!
//! Autocorrelations are stacked category-major: entry `(k − 1)·q + (h − 1)`
//! holds lag `h` of category `k`. All empirical means divide by the number of
//! likelihood terms `n`, including lagged sums with fewer than `n` products.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{chi_square_upper_tail, normal_two_sided};
use crate::error::{AcarError, Result};
use crate::fit::FitResult;
use crate::linalg::{self, serde_rows, GuardedSolver};
use crate::model::ResidualMatrix;

fn check_lags(n: usize, q: usize) -> Result<()> {
    if q == 0 {
        return Err(AcarError::InvalidInput("q must be at least 1".into()));
    }
    if q >= n {
        return Err(AcarError::InvalidInput(format!(
            "q = {q} must be smaller than the number of residuals {n}"
        )));
    }
    Ok(())
}

/// Lagged products `m_t(k, h) = e_{k,t} e_{k,t−h}` as an `n × Kq` matrix
/// (zero for `t < h`).
fn lagged_products(e: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    let (n, k) = e.shape();
    let mut m = DMatrix::zeros(n, k * q);
    for c in 0..k {
        for h in 1..=q {
            for t in h..n {
                m[(t, c * q + h - 1)] = e[(t, c)] * e[(t - h, c)];
            }
        }
    }
    m
}

/// `ρ̂_h[k] = n⁻¹ Σ_{t>h} e_{k,t} e_{k,t−h}`, stacked category-major.
pub fn residual_autocorrelations(residuals: &ResidualMatrix, q: usize) -> Result<DVector<f64>> {
    let n = residuals.len();
    check_lags(n, q)?;
    let m = lagged_products(&residuals.e, q);
    Ok(DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| c.sum() / n as f64),
    ))
}

/// The three sample-mean matrices entering `Ŵ` and the result.
#[derive(Debug, Clone, PartialEq)]
pub struct WComponents {
    /// `Ĉ_q`, `Kq × dim`.
    pub c: DMatrix<f64>,
    /// `D̂`, `Kq × Kq`.
    pub d: DMatrix<f64>,
    /// `Ĝ`, `Kq × dim`.
    pub g: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

/// `Ŵ = D̂ + Ĉ Ĵ⁻¹ L̂ Ĵ⁻ᵀ Ĉᵀ + Ĝ Ĉᵀ + Ĉ Ĝᵀ` from per-term residuals and scores.
pub fn w_components(
    residuals: &ResidualMatrix,
    scores: &DMatrix<f64>,
    j_hat: &DMatrix<f64>,
    l_hat: &DMatrix<f64>,
    q: usize,
) -> Result<WComponents> {
    let n = residuals.len();
    let k = residuals.k();
    let dim = j_hat.nrows();
    check_lags(n, q)?;
    if scores.nrows() != n || scores.ncols() != dim || l_hat.shape() != (dim, dim) || j_hat.ncols() != dim {
        return Err(AcarError::DimensionMismatch(
            "scores, J_hat and L_hat do not agree".into(),
        ));
    }
    if residuals.xi.len() != n || residuals.xi.iter().any(|x| x.shape() != (k, dim)) {
        return Err(AcarError::DimensionMismatch("residual Jacobians do not match".into()));
    }
    let nf = n as f64;
    let m = lagged_products(&residuals.e, q);

    let mut c = DMatrix::zeros(k * q, dim);
    for cat in 0..k {
        for h in 1..=q {
            let r = cat * q + h - 1;
            for t in h..n {
                let w = residuals.e[(t - h, cat)] / nf;
                for p in 0..dim {
                    c[(r, p)] += w * residuals.xi[t][(cat, p)];
                }
            }
        }
    }
    let d = m.transpose() * &m / nf;

    let solver = GuardedSolver::new(j_hat, "J_hat")?;
    // Ĝ = −n⁻¹ Σ m_t s_tᵀ Ĵ⁻ᵀ = −(Ĵ⁻¹ · n⁻¹ Σ s_t m_tᵀ)ᵀ.
    let s_m = scores.transpose() * &m / nf;
    let g = -solver.solve_matrix(&s_m).transpose();
    let middle = linalg::sandwich(&solver, l_hat);
    let gc = &g * c.transpose();
    let w = &d + &c * middle * c.transpose() + &gc + gc.transpose();
    Ok(WComponents {
        c,
        d,
        g,
        w: linalg::symmetrize(&w),
    })
}

pub fn estimate_w(fit: &FitResult, q: usize) -> Result<DMatrix<f64>> {
    Ok(w_components(&fit.residuals, &fit.scores, &fit.j_hat, &fit.l_hat, q)?.w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortmanteauResult {
    pub q: usize,
    pub k: usize,
    pub n_terms: usize,
    pub rho: Vec<f64>,
    #[serde(with = "serde_rows")]
    pub w_hat: DMatrix<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub w_condition: f64,
}

impl PortmanteauResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `n ρ̂ᵀ Ŵ⁻¹ ρ̂` from precomputed pieces; compared with `χ²_{Kq}`.
pub fn portmanteau_from_parts(
    rho: &DVector<f64>,
    w: &DMatrix<f64>,
    n: usize,
    k: usize,
    q: usize,
) -> Result<PortmanteauResult> {
    let df = k * q;
    if rho.len() != df || w.shape() != (df, df) {
        return Err(AcarError::DimensionMismatch(format!(
            "rho/W must have dimension K*q = {df}"
        )));
    }
    let w_condition = linalg::condition_number(w);
    let statistic = if rho.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        let solver = GuardedSolver::new(w, "W_hat")?;
        (n as f64 * rho.dot(&solver.solve_vector(rho))).max(0.0)
    };
    Ok(PortmanteauResult {
        q,
        k,
        n_terms: n,
        rho: rho.iter().copied().collect(),
        w_hat: w.clone(),
        statistic,
        df,
        p_value: chi_square_upper_tail(statistic, df)?,
        w_condition,
    })
}

pub fn portmanteau_test(fit: &FitResult, q: usize) -> Result<PortmanteauResult> {
    let rho = residual_autocorrelations(&fit.residuals, q)?;
    let w = estimate_w(fit, q)?;
    portmanteau_from_parts(&rho, &w, fit.residuals.len(), fit.residuals.k(), q)
}

/// How the cross-site score covariance `S` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SMode {
    /// Sites treated as independent: `S = 0`.
    AssumedZero,
    /// `Ŝ = n⁻¹ Σ s_t⁽²⁾ s_t⁽¹⁾ᵀ` over aligned terms.
    Empirical,
}

impl FromStr for SMode {
    type Err = AcarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "assumed-zero" | "zero" => Ok(Self::AssumedZero),
            "empirical" => Ok(Self::Empirical),
            other => Err(AcarError::InvalidInput(format!(
                "unknown S mode '{other}' (expected assumed-zero or empirical)"
            ))),
        }
    }
}

/// `Ŝ` from two aligned score matrices (`dim₂ × dim₁`).
pub fn cross_scores(scores1: &DMatrix<f64>, scores2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if scores1.nrows() != scores2.nrows() {
        return Err(AcarError::DimensionMismatch(format!(
            "score series have {} and {} terms",
            scores1.nrows(),
            scores2.nrows()
        )));
    }
    Ok(scores2.transpose() * scores1 / scores1.nrows().max(1) as f64)
}

pub fn cross_score_covariance(fit1: &FitResult, fit2: &FitResult, mode: SMode) -> Result<DMatrix<f64>> {
    match mode {
        SMode::AssumedZero => Ok(DMatrix::zeros(fit2.theta_hat.len(), fit1.theta_hat.len())),
        SMode::Empirical => cross_scores(&fit1.scores, &fit2.scores),
    }
}

/// `V̂ = J₁⁻¹L₁J₁⁻ᵀ + J₂⁻¹L₂J₂⁻ᵀ + J₂⁻¹SJ₁⁻ᵀ + J₁⁻¹SᵀJ₂⁻ᵀ`, symmetrized.
pub fn comparison_covariance_from_parts(
    j1: &DMatrix<f64>,
    l1: &DMatrix<f64>,
    j2: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dim = j1.nrows();
    for m in [j1, l1, j2, l2, s] {
        if m.shape() != (dim, dim) {
            return Err(AcarError::DimensionMismatch(
                "both models must share one parameterization".into(),
            ));
        }
    }
    let a1 = GuardedSolver::new(j1, "J_hat (site 1)")?;
    let a2 = GuardedSolver::new(j2, "J_hat (site 2)")?;
    // J₂⁻¹ S J₁⁻ᵀ = J₂⁻¹ (J₁⁻¹ Sᵀ)ᵀ.
    let cross = a2.solve_matrix(&a1.solve_matrix(&s.transpose()).transpose());
    let v = linalg::sandwich(&a1, l1) + linalg::sandwich(&a2, l2) + &cross + cross.transpose();
    Ok(linalg::symmetrize(&v))
}

pub fn comparison_covariance(fit1: &FitResult, fit2: &FitResult, mode: SMode) -> Result<DMatrix<f64>> {
    check_same_model(fit1, fit2)?;
    let s = cross_score_covariance(fit1, fit2, mode)?;
    comparison_covariance_from_parts(&fit1.j_hat, &fit1.l_hat, &fit2.j_hat, &fit2.l_hat, &s)
}

fn check_same_model(fit1: &FitResult, fit2: &FitResult) -> Result<()> {
    if fit1.theta_hat.k() != fit2.theta_hat.k() || fit1.theta_hat.p() != fit2.theta_hat.p() {
        return Err(AcarError::DimensionMismatch("models have different (K, P)".into()));
    }
    if fit1.n_terms != fit2.n_terms {
        return Err(AcarError::DimensionMismatch(format!(
            "sites have {} and {} likelihood terms",
            fit1.n_terms, fit2.n_terms
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub parameter_names: Vec<String>,
    pub difference: Vec<f64>,
    /// `None` where `V̂(p, p) ≤ 0`.
    pub per_param_z: Vec<Option<f64>>,
    pub per_param_p: Vec<Option<f64>>,
    /// `None` when `V̂` is singular.
    pub global_statistic: Option<f64>,
    pub global_df: usize,
    pub global_p: Option<f64>,
    #[serde(with = "serde_rows")]
    pub v_hat: DMatrix<f64>,
    pub v_condition: f64,
    pub s_mode: SMode,
    pub n_terms: usize,
}

impl ComparisonResult {
    /// Global rejection at level `alpha`; `None` when the global test is unavailable.
    pub fn rejects(&self, alpha: f64) -> Option<bool> {
        self.global_p.map(|p| p < alpha)
    }
}

/// Per-parameter and global Wald tests of `θ⁽¹⁾ = θ⁽²⁾`.
pub fn compare_from_parts(
    theta1: &[f64],
    theta2: &[f64],
    v: &DMatrix<f64>,
    n: usize,
    s_mode: SMode,
    parameter_names: Vec<String>,
) -> Result<ComparisonResult> {
    let dim = theta1.len();
    if theta2.len() != dim || v.shape() != (dim, dim) {
        return Err(AcarError::DimensionMismatch(
            "parameter vectors and V must agree".into(),
        ));
    }
    let nf = n as f64;
    let diff = DVector::from_iterator(dim, theta1.iter().zip(theta2).map(|(a, b)| a - b));
    let per_param_z: Vec<Option<f64>> = (0..dim)
        .map(|p| (v[(p, p)] > 0.0).then(|| diff[p] * (nf / v[(p, p)]).sqrt()))
        .collect();
    let per_param_p = per_param_z.iter().map(|z| z.map(normal_two_sided)).collect();
    let v_condition = linalg::condition_number(v);
    let global_statistic = if diff.iter().all(|&d| d == 0.0) {
        Some(0.0)
    } else {
        match GuardedSolver::new(v, "V_hat") {
            Ok(solver) => Some((nf * diff.dot(&solver.solve_vector(&diff))).max(0.0)),
            Err(AcarError::Singular { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    let global_p = global_statistic.map(|x| chi_square_upper_tail(x, dim)).transpose()?;
    Ok(ComparisonResult {
        parameter_names,
        difference: diff.iter().copied().collect(),
        per_param_z,
        per_param_p,
        global_statistic,
        global_df: dim,
        global_p,
        v_hat: v.clone(),
        v_condition,
        s_mode,
        n_terms: n,
    })
}

pub fn compare_models(fit1: &FitResult, fit2: &FitResult, s_mode: SMode) -> Result<ComparisonResult> {
    let v = comparison_covariance(fit1, fit2, s_mode)?;
    compare_from_parts(
        fit1.theta_hat.as_slice(),
        fit2.theta_hat.as_slice(),
        &v,
        fit1.n_terms,
        s_mode,
        fit1.parameter_names.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = random_matrix(rng, d, d);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    fn random_residuals(rng: &mut ChaCha8Rng, n: usize, k: usize, dim: usize) -> ResidualMatrix {
        ResidualMatrix {
            e: random_matrix(rng, n, k),
            xi: (0..n).map(|_| random_matrix(rng, k, dim)).collect(),
        }
    }

    #[test]
    fn hand_sum_autocorrelations() {
        let (a, b, c) = (0.3, -0.7, 0.4);
        let r = ResidualMatrix {
            e: DMatrix::from_column_slice(3, 1, &[a, b, c]),
            xi: vec![DMatrix::zeros(1, 1); 3],
        };
        let rho = residual_autocorrelations(&r, 2).unwrap();
        assert_abs_diff_eq!(rho[0], (a * b + b * c) / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[1], a * c / 3.0, epsilon = 1e-15);
        assert!(residual_autocorrelations(&r, 3).is_err());
        assert!(residual_autocorrelations(&r, 0).is_err());
    }

    #[test]
    fn category_major_layout() {
        let e = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        let r = ResidualMatrix {
            e,
            xi: vec![DMatrix::zeros(2, 1); 4],
        };
        let rho = residual_autocorrelations(&r, 2).unwrap();
        assert_abs_diff_eq!(rho[0], (2.0 + 6.0 + 12.0) / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho[1], (3.0 + 8.0) / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho[2], 100.0 * (2.0 + 6.0 + 12.0) / 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rho[3], 100.0 * (3.0 + 8.0) / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_residuals_give_zero_w_and_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = ResidualMatrix::zeros(20, 2, 5);
        let scores = DMatrix::zeros(20, 5);
        let j = random_spd(&mut rng, 5);
        let comps = w_components(&r, &scores, &j, &DMatrix::zeros(5, 5), 2).unwrap();
        assert_eq!(comps.w, DMatrix::zeros(4, 4));
        let rho = residual_autocorrelations(&r, 2).unwrap();
        let res = portmanteau_from_parts(&rho, &comps.w, 20, 2, 2).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn four_term_w_equals_influence_outer_product() {
        // W = mean Z_t Z_tᵀ with Z_t = m_t − Ĉ Ĵ⁻¹ s_t when L̂ = mean s sᵀ.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, k, dim, q) = (40, 3, 6, 2);
        let r = random_residuals(&mut rng, n, k, dim);
        let scores = random_matrix(&mut rng, n, dim);
        let l = scores.transpose() * &scores / n as f64;
        let j = random_spd(&mut rng, dim);
        let comps = w_components(&r, &scores, &j, &l, q).unwrap();

        let jinv = j.clone().try_inverse().unwrap();
        let mut oracle = DMatrix::zeros(k * q, k * q);
        for t in 0..n {
            let mut m = DVector::zeros(k * q);
            for c in 0..k {
                for h in 1..=q {
                    if t >= h {
                        m[c * q + h - 1] = r.e[(t, c)] * r.e[(t - h, c)];
                    }
                }
            }
            let s = scores.row(t).transpose();
            let z = m - &comps.c * &jinv * s;
            oracle += &z * z.transpose();
        }
        oracle /= n as f64;
        assert!((&comps.w - &oracle).amax() < 1e-10);
        assert!((&comps.w - comps.w.transpose()).amax() < 1e-10);
    }

    #[test]
    fn scalar_instance_by_direct_evaluation() {
        // K = 1, q = 1, dim = 1, n = 4: every term written out.
        let e = [0.5, -0.2, 0.8, -0.4];
        let xi = [0.3, -0.1, 0.2, 0.6];
        let s = [0.4, -0.3, 0.1, 0.2];
        let (j, l) = (1.5, 0.25);
        let r = ResidualMatrix {
            e: DMatrix::from_column_slice(4, 1, &e),
            xi: xi.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
        };
        let comps = w_components(
            &r,
            &DMatrix::from_column_slice(4, 1, &s),
            &DMatrix::from_element(1, 1, j),
            &DMatrix::from_element(1, 1, l),
            1,
        )
        .unwrap();
        let m = [0.0, e[1] * e[0], e[2] * e[1], e[3] * e[2]];
        let c = (e[0] * xi[1] + e[1] * xi[2] + e[2] * xi[3]) / 4.0;
        let d = m.iter().map(|v| v * v).sum::<f64>() / 4.0;
        let g = -(m.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / 4.0) / j;
        let w = d + c * c * l / (j * j) + 2.0 * g * c;
        assert_abs_diff_eq!(comps.c[(0, 0)], c, epsilon = 1e-15);
        assert_abs_diff_eq!(comps.d[(0, 0)], d, epsilon = 1e-15);
        assert_abs_diff_eq!(comps.g[(0, 0)], g, epsilon = 1e-15);
        assert_abs_diff_eq!(comps.w[(0, 0)], w, epsilon = 1e-15);
    }

    #[test]
    fn statistic_invariant_to_category_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, k, dim, q) = (60, 3, 4, 2);
        let r = random_residuals(&mut rng, n, k, dim);
        let scores = random_matrix(&mut rng, n, dim);
        let l = scores.transpose() * &scores / n as f64;
        let j = random_spd(&mut rng, dim);
        let stat = |r: &ResidualMatrix| {
            let w = w_components(r, &scores, &j, &l, q).unwrap().w;
            let rho = residual_autocorrelations(r, q).unwrap();
            portmanteau_from_parts(&rho, &w, n, k, q).unwrap().statistic
        };
        let perm = [2, 0, 1];
        let permuted = ResidualMatrix {
            e: DMatrix::from_fn(n, k, |t, c| r.e[(t, perm[c])]),
            xi: r
                .xi
                .iter()
                .map(|x| DMatrix::from_fn(k, dim, |c, p| x[(perm[c], p)]))
                .collect(),
        };
        assert_abs_diff_eq!(stat(&r), stat(&permuted), epsilon = 1e-9 * stat(&r).max(1.0));
    }

    #[test]
    fn solve_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_spd(&mut rng, 6);
        let rho = DVector::from_fn(6, |_, _| rng.random_range(-0.1..0.1));
        let res = portmanteau_from_parts(&rho, &w, 300, 3, 2).unwrap();
        let explicit = 300.0 * (rho.transpose() * w.try_inverse().unwrap() * &rho)[(0, 0)];
        assert_abs_diff_eq!(res.statistic, explicit, epsilon = 1e-10 * explicit.max(1.0));
        assert!(res.p_value >= 0.0 && res.p_value <= 1.0);
        assert_eq!(res.df, 6);
    }

    #[test]
    fn singular_w_is_reported() {
        let rho = DVector::from_element(2, 0.1);
        let w = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            portmanteau_from_parts(&rho, &w, 10, 1, 2),
            Err(AcarError::Singular { .. })
        ));
    }

    #[test]
    fn comparison_covariance_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 4;
        let (j1, j2) = (random_spd(&mut rng, d), random_spd(&mut rng, d));
        let (l1, l2) = (random_spd(&mut rng, d), random_spd(&mut rng, d));
        let zero = DMatrix::zeros(d, d);
        let sw = |j: &DMatrix<f64>, l: &DMatrix<f64>| {
            let ji = j.clone().try_inverse().unwrap();
            &ji * l * ji.transpose()
        };
        let v0 = comparison_covariance_from_parts(&j1, &l1, &j2, &l2, &zero).unwrap();
        assert!((&v0 - (sw(&j1, &l1) + sw(&j2, &l2))).amax() < 1e-10);

        // Identical sites with S = L: V = 4 J⁻¹ L J⁻ᵀ.
        let v = comparison_covariance_from_parts(&j1, &l1, &j1, &l1, &l1).unwrap();
        assert!((&v - sw(&j1, &l1) * 4.0).amax() < 1e-9);

        let s = random_matrix(&mut rng, d, d);
        let v = comparison_covariance_from_parts(&j1, &l1, &j2, &l2, &s).unwrap();
        let (i1, i2) = (j1.clone().try_inverse().unwrap(), j2.clone().try_inverse().unwrap());
        let direct = sw(&j1, &l1) + sw(&j2, &l2) + &i2 * &s * i1.transpose() + &i1 * s.transpose() * i2.transpose();
        assert!((&v - direct).amax() < 1e-10);
    }

    #[test]
    fn scalar_comparison_instance() {
        let (j1, l1, j2, l2, s) = (2.0, 0.5, 4.0, 1.0, 0.3);
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let v = comparison_covariance_from_parts(&m(j1), &m(l1), &m(j2), &m(l2), &m(s)).unwrap();
        let want = l1 / (j1 * j1) + l2 / (j2 * j2) + 2.0 * s / (j1 * j2);
        assert_abs_diff_eq!(v[(0, 0)], want, epsilon = 1e-15);
        let r = compare_from_parts(&[0.9], &[0.7], &v, 100, SMode::Empirical, vec!["omega1".into()]).unwrap();
        let z = 0.2 * (100.0 / want).sqrt();
        assert_abs_diff_eq!(r.per_param_z[0].unwrap(), z, epsilon = 1e-12);
        assert_abs_diff_eq!(r.global_statistic.unwrap(), z * z, epsilon = 1e-10);
    }

    #[test]
    fn identical_estimates_give_null_statistics() {
        let v = DMatrix::identity(3, 3);
        let theta = [0.1, -0.4, 0.7];
        let r = compare_from_parts(&theta, &theta, &v, 50, SMode::AssumedZero, vec![String::new(); 3]).unwrap();
        assert!(r.per_param_z.iter().all(|z| *z == Some(0.0)));
        assert_eq!(r.global_statistic, Some(0.0));
        assert_eq!(r.global_p, Some(1.0));
        assert_eq!(r.rejects(0.05), Some(false));
    }

    #[test]
    fn singular_v_keeps_marginal_tests() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = compare_from_parts(
            &[1.0, 0.0],
            &[0.0, 0.0],
            &v,
            25,
            SMode::AssumedZero,
            vec![String::new(); 2],
        )
        .unwrap();
        assert!(r.global_statistic.is_none());
        assert_abs_diff_eq!(r.per_param_z[0].unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_scores_identity_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_matrix(&mut rng, 30, 4);
        let l = s.transpose() * &s / 30.0;
        assert!((cross_scores(&s, &s).unwrap() - l).amax() < 1e-14);
        assert!(cross_scores(&s, &random_matrix(&mut rng, 29, 4)).is_err());
        assert_eq!("assumed-zero".parse::<SMode>().unwrap(), SMode::AssumedZero);
        assert!("other".parse::<SMode>().is_err());
    }
}
