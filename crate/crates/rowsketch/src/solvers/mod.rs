//! Constrained minimization kernels shared by the samplers.
//!
//! Two problems appear over and over: minimize ‖Mx‖_inf subject to
//! ⟨a,x⟩ = 1 (a linear program, solved by a certified two-phase simplex)
//! and minimize ‖Mx‖_p subject to ⟨a,x⟩ = 1 (convex for p >= 1, solved by
//! smoothed iteratively reweighted least squares). Both report through
//! [`SolverResult`].
//!
//! Pseudoinverse quadratic forms live in [`crate::linalg`] and are
//! re-exported here to keep the solver surface in one place.
//!
//! A zero optimal value of the p-norm problem is an exact signal: it occurs
//! precisely when `a` has a component outside the rowspace of `M`, and
//! callers map it to sensitivity 1.

mod irls;
mod simplex;

pub use crate::linalg::{pinv_quadform, pinv_quadform_checked, QuadformStatus};
pub use simplex::LpCertificate;

use crate::{Mat, Vec64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    ToleranceLimited,
}

/// Outcome of a constrained minimization. `value` equals the objective at
/// `argmin` within the solver tolerance when the status is Optimal.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub argmin: Vec64,
    pub value: f64,
    pub status: SolveStatus,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Minimizes max_i |⟨m_i, x⟩| subject to ⟨a, x⟩ = 1. Infeasible iff a = 0.
pub fn min_linf_subject_linear(m: &Mat, a: &Vec64, tol: f64) -> SolverResult {
    simplex::solve_min_linf(m, a, tol).0
}

/// [`min_linf_subject_linear`] together with its optimality certificate
/// (duality gap and worst reduced-cost violation at the final basis).
pub fn solve_linf_with_certificate(m: &Mat, a: &Vec64, tol: f64) -> (SolverResult, LpCertificate) {
    simplex::solve_min_linf(m, a, tol)
}

/// Minimizes ‖Mx‖_p subject to ⟨a, x⟩ = 1 for p >= 1, to relative accuracy
/// `rel_acc`. Returns value 0 exactly when `a` is outside the rowspace of
/// `M` (the minimum is then attained off the rowspace); otherwise the value
/// is strictly positive.
pub fn min_lp_subject_linear(
    m: &Mat,
    a: &Vec64,
    p: f64,
    rel_acc: f64,
    svd_cutoff: f64,
) -> SolverResult {
    irls::solve_min_lp(m, a, p, rel_acc, svd_cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TOL: f64 = 1e-8;
    const CUT: f64 = 1e-10;

    fn vec2(a: f64, b: f64) -> Vec64 {
        Vec64::from_column_slice(&[a, b])
    }

    #[test]
    fn linf_symmetric_square() {
        let m = Mat::identity(2, 2);
        let r = min_linf_subject_linear(&m, &vec2(1.0, 1.0), TOL);
        assert!(r.is_optimal());
        assert_relative_eq!(r.value, 0.5, epsilon = 1e-8);
        assert_relative_eq!(r.argmin[0], 0.5, epsilon = 1e-7);
        assert_relative_eq!(r.argmin[1], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn linf_free_coordinate_reaches_zero() {
        let m = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let r = min_linf_subject_linear(&m, &vec2(0.0, 1.0), TOL);
        assert!(r.is_optimal());
        assert!(r.value.abs() <= 1e-10, "value {}", r.value);
    }

    #[test]
    fn linf_three_row_vertex() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let r = min_linf_subject_linear(&m, &vec2(1.0, 0.0), TOL);
        assert!(r.is_optimal());
        // Optimal vertices include (1, -1/2) and (1, 0); the value is 1 at
        // both, so only the value and witness feasibility are pinned.
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-8);
        assert_relative_eq!(r.argmin[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(
            crate::linalg::linf_norm_rows(&m, &r.argmin),
            1.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn linf_zero_a_is_infeasible() {
        let m = Mat::identity(2, 2);
        let r = min_linf_subject_linear(&m, &vec2(0.0, 0.0), TOL);
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn linf_certificate_gap_is_tiny() {
        let m = Mat::from_row_slice(4, 3, &[
            1.0, 2.0, -1.0, 0.5, -0.25, 2.0, -1.5, 1.0, 0.75, 2.0, 0.0, -1.0,
        ]);
        let a = Vec64::from_column_slice(&[1.0, -1.0, 0.5]);
        let (r, cert) = solve_linf_with_certificate(&m, &a, TOL);
        assert!(r.is_optimal());
        assert!(cert.duality_gap <= TOL * (1.0 + r.value.abs()), "gap {}", cert.duality_gap);
        assert!(cert.dual_infeasibility <= TOL, "dual inf {}", cert.dual_infeasibility);
        // The reported value matches the objective at the reported point.
        let direct = crate::linalg::linf_norm_rows(&m, &r.argmin);
        assert_relative_eq!(direct, r.value, epsilon = 1e-8);
    }

    #[test]
    fn lp_identity_any_p_gives_one() {
        for p in [1.0, 1.5, 2.0, 3.0, 4.0] {
            let m = Mat::identity(3, 3);
            let a = Vec64::from_column_slice(&[1.0, 0.0, 0.0]);
            let r = min_lp_subject_linear(&m, &a, p, 1e-4, CUT);
            assert!(r.is_optimal());
            assert_relative_eq!(r.value, 1.0, max_relative = 2e-4);
        }
    }

    #[test]
    fn lp_duplicated_scalar_row_p1() {
        let m = Mat::from_row_slice(2, 1, &[1.0, 1.0]);
        let a = Vec64::from_column_slice(&[1.0]);
        let r = min_lp_subject_linear(&m, &a, 1.0, 1e-4, CUT);
        assert!(r.is_optimal());
        assert_relative_eq!(r.value, 2.0, max_relative = 2e-4);
    }

    #[test]
    fn lp_p1_interval_of_minimizers() {
        // min |x1| + |x2| + |x1+x2| with x1 = 1: value 2 on x2 in [-1, 0].
        let m = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let r = min_lp_subject_linear(&m, &vec2(1.0, 0.0), 1.0, 1e-4, CUT);
        assert!(r.is_optimal());
        assert_relative_eq!(r.value, 2.0, max_relative = 2e-3);
    }

    #[test]
    fn lp_p2_matches_quadform_oracle() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let a = vec2(1.0, 1.0);
        let r = min_lp_subject_linear(&m, &a, 2.0, 1e-4, CUT);
        assert!(r.is_optimal());
        let tau = 1.0 / (r.value * r.value);
        assert_relative_eq!(tau, 2.0 / 3.0, max_relative = 1e-3);
        assert_relative_eq!(pinv_quadform(&m, &a, 0.0, CUT), 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn lp_outside_rowspace_reports_zero() {
        let m = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let a = vec2(0.0, 1.0);
        for p in [1.0, 1.5, 3.0] {
            let r = min_lp_subject_linear(&m, &a, p, 1e-4, CUT);
            assert!(r.is_optimal());
            assert_eq!(r.value, 0.0);
            // The reported point is feasible and sends M x to zero.
            assert_relative_eq!(a.dot(&r.argmin), 1.0, epsilon = 1e-10);
            assert!(crate::linalg::lp_norm_rows(&m, &r.argmin, p) <= 1e-10);
        }
    }

    #[test]
    fn lp_zero_a_is_infeasible() {
        let m = Mat::identity(2, 2);
        let r = min_lp_subject_linear(&m, &vec2(0.0, 0.0), 2.0, 1e-4, CUT);
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Scaling every row of M by c > 0 scales the optimal value by c.
        #[test]
        fn linf_scale_covariance(
            entries in proptest::collection::vec(-2.0f64..2.0, 6),
            a0 in 0.2f64..2.0,
            a1 in -2.0f64..2.0,
            c in 0.05f64..20.0,
        ) {
            let m = Mat::from_row_slice(3, 2, &entries);
            let a = vec2(a0, a1);
            let r1 = min_linf_subject_linear(&m, &a, TOL);
            let r2 = min_linf_subject_linear(&(&m * c), &a, TOL);
            prop_assert!(r1.is_optimal() && r2.is_optimal());
            prop_assert!((r2.value - c * r1.value).abs() <= 1e-6 * (1.0 + c * r1.value));
        }

        /// Dual route agreement at p = 2: the IRLS path and the closed-form
        /// pseudoinverse quadratic form compute the same sensitivity.
        #[test]
        fn p2_agreement_with_quadform(
            entries in proptest::collection::vec(-1.0f64..1.0, 12),
            avals in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let m = Mat::from_row_slice(4, 3, &entries);
            let a = Vec64::from_column_slice(&avals);
            let (smax, smin) = crate::linalg::sigma_extremes(&m, CUT);
            prop_assume!(smax > 0.0);
            prop_assume!(smin.map(|s| s > 0.05 * smax).unwrap_or(false));
            prop_assume!(crate::linalg::PinvGram::from_rows(&m, CUT).rank() == 3);
            prop_assume!(a.norm() > 0.1);
            let r = min_lp_subject_linear(&m, &a, 2.0, 1e-4, CUT);
            prop_assert!(r.is_optimal());
            prop_assert!(r.value > 0.0);
            let tau_irls = 1.0 / (r.value * r.value);
            let tau_quad = pinv_quadform(&m, &a, 0.0, CUT);
            let rel = (tau_irls - tau_quad).abs() / tau_quad.max(1e-12);
            prop_assert!(rel <= 1e-3, "tau_irls {tau_irls} vs tau_quad {tau_quad}");
        }

        /// a^T (M^T M + lambda I)^+ a is nonincreasing in lambda.
        #[test]
        fn quadform_monotone_in_lambda(
            entries in proptest::collection::vec(-1.0f64..1.0, 12),
            avals in proptest::collection::vec(-1.0f64..1.0, 3),
            l1 in 1e-6f64..1.0,
            factor in 1.0f64..100.0,
        ) {
            let m = Mat::from_row_slice(4, 3, &entries);
            let a = Vec64::from_column_slice(&avals);
            let q1 = pinv_quadform(&m, &a, l1, CUT);
            let q2 = pinv_quadform(&m, &a, l1 * factor, CUT);
            prop_assert!(q2 <= q1 * (1.0 + 1e-10) + 1e-15);
        }
    }
}
