//! Upper-tail probabilities for the χ² and standard normal laws.
//!
//! Both reduce to the regularized upper incomplete gamma function
//! `Q(a, x)`: `P(χ²_k > x) = Q(k/2, x/2)` and, for `z ≥ 0`,
//! `P(Z > z) = Q(1/2, z²/2) / 2`.

use crate::error::{AcarError, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma by its power series (`x < a + 1`).
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma by a Lentz continued fraction (`x ≥ a + 1`).
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// `Q(a, x) = Γ(a, x) / Γ(a)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// `P(χ²_df > x)`.
pub fn chi_square_upper_tail(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(AcarError::InvalidInput(
            "chi-square degrees of freedom must be >= 1".into(),
        ));
    }
    if x.is_nan() {
        return Err(AcarError::InvalidInput("chi-square statistic is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(regularized_gamma_q(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// `P(Z > z)` for a standard normal `Z`.
pub fn normal_upper_tail(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z >= 0.0 {
        0.5 * regularized_gamma_q(0.5, 0.5 * z * z)
    } else {
        1.0 - normal_upper_tail(-z)
    }
}

/// Two-sided normal p-value `2 P(Z > |z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    (2.0 * normal_upper_tail(z.abs())).min(1.0)
}

/// `(1 − α)` quantile of `χ²_df`, found by bisection on the upper tail.
pub fn chi_square_quantile(level: f64, df: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(AcarError::InvalidInput(format!(
            "quantile level {level} outside (0, 1)"
        )));
    }
    let tail = 1.0 - level;
    let mut lo = 0.0;
    let mut hi = df as f64 + 10.0;
    while chi_square_upper_tail(hi, df)? > tail {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_upper_tail(mid, df)? > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
    use statrs::function::erf::erfc;

    #[test]
    fn zero_statistic_has_unit_tail() {
        for df in 1..20 {
            assert_eq!(chi_square_upper_tail(0.0, df).unwrap(), 1.0);
        }
        assert_eq!(normal_upper_tail(0.0), 0.5);
        assert!(chi_square_upper_tail(1.0, 0).is_err());
    }

    #[test]
    fn three_df_critical_value() {
        // Closed form for three degrees of freedom:
        // P(χ²₃ > x) = erfc(√(x/2)) + √(2x/π) e^{−x/2}.
        let x: f64 = 7.8147;
        let closed = erfc((x / 2.0).sqrt()) + (2.0 * x / std::f64::consts::PI).sqrt() * (-x / 2.0).exp();
        let got = chi_square_upper_tail(x, 3).unwrap();
        assert_abs_diff_eq!(got, closed, epsilon = 1e-10);
        assert_abs_diff_eq!(got, 0.05, epsilon = 1e-5);
    }

    #[test]
    fn agrees_with_statrs() {
        for df in [1usize, 2, 3, 5, 9, 14, 30, 100] {
            let law = ChiSquared::new(df as f64).unwrap();
            for x in [0.01, 0.5, 1.0, 2.5, 7.0, 15.0, 40.0, 120.0] {
                let want = 1.0 - law.cdf(x);
                assert_abs_diff_eq!(chi_square_upper_tail(x, df).unwrap(), want, epsilon = 1e-10);
            }
        }
        let std = Normal::new(0.0, 1.0).unwrap();
        for z in [-4.0, -1.96, -0.3, 0.0, 0.7, 1.96, 3.5, 8.0] {
            assert_abs_diff_eq!(normal_upper_tail(z), 1.0 - std.cdf(z), epsilon = 1e-10);
        }
    }

    #[test]
    fn quantile_inverts_tail() {
        let q = chi_square_quantile(0.95, 3).unwrap();
        assert_abs_diff_eq!(q, 7.814727903, epsilon = 1e-6);
        let q = chi_square_quantile(0.95, 14).unwrap();
        assert_abs_diff_eq!(chi_square_upper_tail(q, 14).unwrap(), 0.05, epsilon = 1e-10);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(10.0), 362880f64.ln(), epsilon = 1e-11);
    }
}
