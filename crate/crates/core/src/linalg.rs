//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{AcarError, Result};

/// Condition numbers above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// 2-norm condition number from the singular values; `∞` for a zero matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 || !max.is_finite() {
        return f64::INFINITY;
    }
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// LU factorization behind a condition-number guard.
#[derive(Debug, Clone)]
pub struct GuardedSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl GuardedSolver {
    pub fn new(m: &DMatrix<f64>, what: &'static str) -> Result<Self> {
        if !m.is_square() {
            return Err(AcarError::DimensionMismatch(format!("{what} is not square")));
        }
        let condition = condition_number(m);
        if !(condition <= CONDITION_LIMIT) {
            return Err(AcarError::Singular { what, condition });
        }
        Ok(Self {
            lu: m.clone().lu(),
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("guarded matrix is invertible")
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("guarded matrix is invertible")
    }
}

/// `A⁻¹ B A⁻ᵀ` for square `A`, via two solves; symmetrized.
pub fn sandwich(a: &GuardedSolver, b: &DMatrix<f64>) -> DMatrix<f64> {
    let left = a.solve_matrix(b);
    let full = a.solve_matrix(&left.transpose()).transpose();
    symmetrize(&full)
}

/// Serde adapter storing a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// Same adapter for `Option<DMatrix>`.
    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            rows.map(|r| from_rows(&r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }

    /// Same adapter for a list of matrices.
    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(m: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            m.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            all.iter()
                .map(|r| from_rows(r).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 0.5]));
        assert!((condition_number(&m) - 8.0).abs() < 1e-12);
        assert!(condition_number(&DMatrix::zeros(2, 2)).is_infinite());
    }

    #[test]
    fn guard_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            GuardedSolver::new(&m, "test"),
            Err(AcarError::Singular { .. })
        ));
    }

    #[test]
    fn sandwich_matches_explicit_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.3, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let solver = GuardedSolver::new(&a, "a").unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let want = &inv * &b * inv.transpose();
        assert!((sandwich(&solver, &b) - want).amax() < 1e-12);
    }
}
