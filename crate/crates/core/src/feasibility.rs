//! Consistency of the perfect-reconstruction linear systems.
//!
//! Every reconstruction condition has the shape `xᵀ A = rhsᵀ`, where the rows
//! of `A` belong to the unknown player coefficients and its columns to the
//! quadratures that must cancel. We solve the transposed system with an SVD:
//! the minimum-norm least-squares solution is returned when its residual is
//! below [`RESIDUAL_TOL`], and the ranks of `A` and `[A; rhsᵀ]` are reported
//! as the certificate either way.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Singular values below `RANK_RTOL · σ_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;
/// A system is feasible iff the min-norm solution leaves at most this residual.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub unknowns: usize,
    pub equations: usize,
    pub rank: usize,
    pub augmented_rank: usize,
    /// `‖Aᵀx − rhs‖₂` at the min-norm least-squares `x`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub solution: Option<Vec<f64>>,
    pub certificate: RankCertificate,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

/// Rank with relative tolerance [`RANK_RTOL`].
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * max).count()
}

/// Solve `xᵀ a = rhsᵀ` for `x` (length `a.nrows()`).
pub fn solve_row_system(a: &DMatrix<f64>, rhs: &[f64]) -> FeasibilityResult {
    assert_eq!(a.ncols(), rhs.len(), "rhs length must match column count");
    let unknowns = a.nrows();
    let equations = a.ncols();
    let b = DVector::from_column_slice(rhs);

    let x = if unknowns == 0 || equations == 0 {
        DVector::zeros(unknowns)
    } else {
        let at = a.transpose();
        let svd = at.clone().svd(true, true);
        let max = svd.singular_values.max();
        if max == 0.0 {
            DVector::zeros(unknowns)
        } else {
            svd.solve(&b, RANK_RTOL * max)
                .expect("SVD computed with U and V")
        }
    };

    let residual = if unknowns == 0 {
        b.norm()
    } else {
        (a.transpose() * &x - &b).norm()
    };

    let mut augmented = DMatrix::zeros(unknowns + 1, equations);
    augmented
        .view_mut((0, 0), (unknowns, equations))
        .copy_from(a);
    augmented.row_mut(unknowns).copy_from(&b.transpose());

    let certificate = RankCertificate {
        unknowns,
        equations,
        rank: numerical_rank(a),
        augmented_rank: numerical_rank(&augmented),
        residual,
    };
    if residual <= RESIDUAL_TOL {
        FeasibilityResult {
            status: FeasibilityStatus::Feasible,
            solution: Some(x.iter().copied().collect()),
            certificate,
        }
    } else {
        FeasibilityResult {
            status: FeasibilityStatus::Infeasible,
            solution: None,
            certificate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_full_rank_is_feasible() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let res = solve_row_system(&a, &[1.0, 0.0]);
        assert!(res.is_feasible());
        let x = res.solution.unwrap();
        // xᵀA = [2x0 + x1, x0 + 3x1]
        assert!((2.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1]).abs() < 1e-12);
        assert_eq!(res.certificate.rank, 2);
        assert_eq!(res.certificate.augmented_rank, 2);
    }

    #[test]
    fn rhs_outside_row_space_is_infeasible() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let res = solve_row_system(&a, &[0.0, 1.0]);
        assert!(!res.is_feasible());
        assert!(res.solution.is_none());
        assert_eq!(res.certificate.rank, 1);
        assert_eq!(res.certificate.augmented_rank, 2);
        assert!((res.certificate.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_returns_min_norm() {
        // x0 + x1 = 2 → min-norm (1, 1)
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let x = solve_row_system(&a, &[2.0]).solution.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_zero_systems() {
        let none = DMatrix::<f64>::zeros(0, 3);
        let res = solve_row_system(&none, &[0.0, 0.0, 1.0]);
        assert!(!res.is_feasible());
        assert_eq!(res.certificate.rank, 0);
        assert_eq!(res.certificate.augmented_rank, 1);
        assert!(solve_row_system(&none, &[0.0, 0.0, 0.0]).is_feasible());

        let zero = DMatrix::<f64>::zeros(2, 2);
        assert!(!solve_row_system(&zero, &[1.0, 0.0]).is_feasible());
        let ok = solve_row_system(&zero, &[0.0, 0.0]);
        assert_eq!(ok.solution.unwrap(), vec![0.0, 0.0]);
    }
}
