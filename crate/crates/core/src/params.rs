//! Parameter vector of the adjacent-category autoregression.
//!
//! The flattened layout is `(ω₁..ω_K, γ₁..γ_P, α₁..α_K, β₁..β_K)`, so a model
//! with `K` non-baseline levels and `P` covariates has `3K + P` parameters.
//! The admissible set is the box `Θ_ε`: every feedback coefficient satisfies
//! `|β_j| ≤ 1 − ε` (which implies the stability condition `|β_j| < 1`) and
//! every other coordinate satisfies `|θ_i| ≤ 1/ε`.

use serde::{Deserialize, Serialize};

use crate::error::{AcarError, Result};

/// Default box margin.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    k: usize,
    p: usize,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn dimension(k: usize, p: usize) -> usize {
        3 * k + p
    }

    pub fn zeros(k: usize, p: usize) -> Self {
        Self {
            k,
            p,
            values: vec![0.0; Self::dimension(k, p)],
        }
    }

    pub fn from_flat(k: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(AcarError::InvalidInput(
                "at least one non-baseline category is required".into(),
            ));
        }
        if values.len() != Self::dimension(k, p) {
            return Err(AcarError::DimensionMismatch(format!(
                "expected {} parameters for K = {k}, P = {p}, got {}",
                Self::dimension(k, p),
                values.len()
            )));
        }
        Ok(Self { k, p, values })
    }

    pub fn from_parts(omega: &[f64], gamma: &[f64], alpha: &[f64], beta: &[f64]) -> Result<Self> {
        let k = omega.len();
        if alpha.len() != k || beta.len() != k {
            return Err(AcarError::DimensionMismatch(format!(
                "omega, alpha and beta must share length K (got {}, {}, {})",
                k,
                alpha.len(),
                beta.len()
            )));
        }
        let mut values = Vec::with_capacity(3 * k + gamma.len());
        values.extend_from_slice(omega);
        values.extend_from_slice(gamma);
        values.extend_from_slice(alpha);
        values.extend_from_slice(beta);
        Self::from_flat(k, gamma.len(), values)
    }

    /// Number of non-baseline categories `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of covariates `P`.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn omega(&self) -> &[f64] {
        &self.values[..self.k]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.values[self.k..self.k + self.p]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.values[self.k + self.p..2 * self.k + self.p]
    }

    pub fn beta(&self) -> &[f64] {
        &self.values[2 * self.k + self.p..]
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.k, self.p)
    }

    /// Checks membership in `Θ_ε`, reporting the first violated coordinate.
    pub fn validate(&self, epsilon: f64) -> Result<()> {
        validate_parameters(self, epsilon)
    }
}

/// Index arithmetic for the flattened parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub p: usize,
}

impl Layout {
    pub fn new(k: usize, p: usize) -> Self {
        Self { k, p }
    }

    pub fn dim(&self) -> usize {
        3 * self.k + self.p
    }

    /// Index of `ω_j`, `j` zero-based.
    pub fn omega(&self, j: usize) -> usize {
        j
    }

    pub fn gamma(&self, i: usize) -> usize {
        self.k + i
    }

    pub fn alpha(&self, j: usize) -> usize {
        self.k + self.p + j
    }

    pub fn beta(&self, j: usize) -> usize {
        2 * self.k + self.p + j
    }

    /// Covariate position of a `γ` coordinate.
    pub fn gamma_index(&self, index: usize) -> Option<usize> {
        (index >= self.k && index < self.k + self.p).then(|| index - self.k)
    }

    pub fn is_beta(&self, index: usize) -> bool {
        index >= 2 * self.k + self.p
    }

    /// Human-readable coordinate names (`omega1`, `gamma1`, ...), one-based.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend((1..=self.k).map(|j| format!("omega{j}")));
        out.extend((1..=self.p).map(|i| format!("gamma{i}")));
        out.extend((1..=self.k).map(|j| format!("alpha{j}")));
        out.extend((1..=self.k).map(|j| format!("beta{j}")));
        out
    }

    /// Lower and upper bounds of `Θ_ε`.
    pub fn bounds(&self, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lower = vec![-1.0 / epsilon; dim];
        let mut upper = vec![1.0 / epsilon; dim];
        for j in 0..self.k {
            lower[self.beta(j)] = -1.0 + epsilon;
            upper[self.beta(j)] = 1.0 - epsilon;
        }
        (lower, upper)
    }
}

pub fn validate_parameters(theta: &ParameterVector, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(AcarError::InvalidInput(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    let layout = theta.layout();
    let names = layout.names();
    for (index, &value) in theta.as_slice().iter().enumerate() {
        let bound = if layout.is_beta(index) {
            1.0 - epsilon
        } else {
            1.0 / epsilon
        };
        // Negated comparison so NaN is rejected too.
        if !(value.abs() <= bound) {
            return Err(AcarError::ParameterOutOfBounds {
                index,
                name: names[index].clone(),
                value,
                bound,
            });
        }
    }
    Ok(())
}

/// The three parameter sets of the reference simulation design
/// (`K = 3`, `P = 5`), selected by one-based index.
pub fn simulation_design(index: usize) -> Option<ParameterVector> {
    let values: [f64; 14] = match index {
        1 => [1.2, 0.7, 0.5, -0.8, 1.5, -1.5, 2.0, 2.0, 0.3, -0.3, 0.5, 0.8, -0.2, 0.3],
        2 => [
            1.2, 0.7, 0.5, 0.8, -1.5, 1.5, -2.0, -2.0, -0.3, 0.3, -0.5, -0.8, 0.2, -0.3,
        ],
        3 => [
            1.2, 0.7, 1.5, 0.8, -1.5, -1.5, 2.0, -2.0, 0.3, -0.3, -0.5, -0.8, 0.2, -0.3,
        ],
        _ => return None,
    };
    Some(ParameterVector {
        k: 3,
        p: 5,
        values: values.to_vec(),
    })
}
