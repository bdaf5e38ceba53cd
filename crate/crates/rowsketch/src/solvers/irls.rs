//! Smoothed iteratively reweighted least squares for
//! min ‖Mx‖_p subject to ⟨a,x⟩ = 1, p >= 1.
//!
//! The problem is restricted to the rowspace of M first: any component of
//! `a` outside it makes the optimum exactly 0 (move along that component to
//! satisfy the constraint for free), and inside it the restricted matrix
//! has full column rank, so every weighted normal system is positive
//! definite. |r| is smoothed to sqrt(r^2 + mu) with mu annealed relative to
//! the current per-row residual scale; each stage solves the weighted
//! normal equations under the affine constraint and backtracks along the
//! step, which is a descent direction for the smoothed objective for every
//! p >= 1.

use super::{SolveStatus, SolverResult};
use crate::linalg::{lp_norm, PinvGram};
use crate::{Mat, Vec64};

pub(crate) fn solve_min_lp(
    m: &Mat,
    a: &Vec64,
    p: f64,
    rel_acc: f64,
    svd_cutoff: f64,
) -> SolverResult {
    let d = a.len();
    assert!(p >= 1.0, "p must be >= 1");
    if a.norm() == 0.0 {
        return SolverResult {
            argmin: Vec64::zeros(d),
            value: 0.0,
            status: SolveStatus::Infeasible,
        };
    }
    let gram = PinvGram::from_rows(m, svd_cutoff);
    if gram.rank() == 0 {
        // M is (numerically) zero: every feasible point is optimal at 0.
        let x = a * (1.0 / a.norm_squared());
        return SolverResult { argmin: x, value: 0.0, status: SolveStatus::Optimal };
    }
    if !gram.in_rowspace(a, svd_cutoff.max(1e-12)) {
        // Satisfy the constraint using only the component of a outside the
        // rowspace; M x vanishes there, so the optimum is exactly 0.
        let c = gram.basis().transpose() * a;
        let a_perp = a - gram.basis() * c;
        let x = &a_perp / a_perp.norm_squared();
        debug_assert!((a.dot(&x) - 1.0).abs() < 1e-9);
        return SolverResult { argmin: x, value: 0.0, status: SolveStatus::Optimal };
    }

    // Restricted problem: z has rank(M) coordinates, M~ has full column rank.
    let v_r = gram.basis();
    let mt = m * v_r;
    let at = v_r.transpose() * a;
    let n = mt.nrows();

    let mut z = constrained_weighted_ls(&mt, &at, None)
        .expect("unweighted normal system is positive definite on the rowspace");
    let mut stage_converged = true;
    for stage in 0..5 {
        let cur = lp_norm(&(&mt * &z), p);
        let scale = (cur / (n as f64).powf(1.0 / p)).max(1e-280);
        let mu = scale * scale * 10f64.powi(-2 - 2 * stage as i32);
        let mut g_old = smoothed_objective(&mt, &z, p, mu);
        stage_converged = false;
        for _ in 0..120 {
            let residuals = &mt * &z;
            let weights: Vec<f64> =
                residuals.iter().map(|&r| (r * r + mu).powf((p - 2.0) / 2.0)).collect();
            let Some(z_star) = constrained_weighted_ls(&mt, &at, Some(&weights)) else {
                break;
            };
            let dz = &z_star - &z;
            if dz.norm() <= 1e-15 * (1.0 + z.norm()) {
                stage_converged = true;
                break;
            }
            // Backtracking line search on the smoothed objective; the IRLS
            // step is a descent direction, so this terminates unless z is
            // already stationary.
            let mut alpha = 1.0;
            let mut g_new = g_old;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &z + &dz * alpha;
                let g = smoothed_objective(&mt, &cand, p, mu);
                if g < g_old {
                    z = cand;
                    g_new = g;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                stage_converged = true;
                break;
            }
            let rel = (g_old - g_new) / g_old.max(1e-300);
            g_old = g_new;
            if rel <= 1e-3 * rel_acc {
                stage_converged = true;
                break;
            }
        }
    }

    let value = lp_norm(&(&mt * &z), p);
    let argmin = v_r * &z;
    let status =
        if stage_converged { SolveStatus::Optimal } else { SolveStatus::ToleranceLimited };
    SolverResult { argmin, value, status }
}

fn smoothed_objective(mt: &Mat, z: &Vec64, p: f64, mu: f64) -> f64 {
    (mt * z).iter().map(|&r| (r * r + mu).powf(p / 2.0)).sum()
}

/// Minimizes z^T (M^T W M) z subject to ⟨a,z⟩ = 1 for PD normal matrix:
/// z = H^{-1} a / (a^T H^{-1} a).
fn constrained_weighted_ls(mt: &Mat, at: &Vec64, weights: Option<&[f64]>) -> Option<Vec64> {
    let r = mt.ncols();
    let h = match weights {
        None => mt.transpose() * mt,
        Some(w) => {
            let mut scaled = mt.clone();
            for (i, &wi) in w.iter().enumerate() {
                let row = scaled.row(i) * wi;
                scaled.set_row(i, &row);
            }
            mt.transpose() * scaled
        }
    };
    let trace = h.trace().max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let hj = if jitter > 0.0 {
            &h + Mat::identity(r, r) * jitter
        } else {
            h.clone()
        };
        if let Some(chol) = nalgebra::Cholesky::new(hj) {
            let hz = chol.solve(at);
            let denom = at.dot(&hz);
            if denom > 0.0 && denom.is_finite() {
                return Some(&hz / denom);
            }
        }
        jitter = if jitter == 0.0 { 1e-14 * trace / r as f64 } else { jitter * 100.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_and_value_consistency() {
        let m = Mat::from_row_slice(5, 3, &[
            1.0, 0.5, -0.25, 2.0, -1.0, 0.0, 0.5, 0.5, 0.5, -1.5, 2.0, 1.0, 0.0, 1.0, -2.0,
        ]);
        let a = Vec64::from_column_slice(&[1.0, -2.0, 0.5]);
        for p in [1.0, 1.3, 2.0, 3.0, 4.0] {
            let r = solve_min_lp(&m, &a, p, 1e-4, 1e-10);
            assert_eq!(r.status, SolveStatus::Optimal, "p = {p}");
            assert!((a.dot(&r.argmin) - 1.0).abs() < 1e-8, "constraint violated at p = {p}");
            let direct = lp_norm(&(&m * &r.argmin), p);
            assert!((direct - r.value).abs() <= 1e-10 * (1.0 + direct));
        }
    }

    #[test]
    fn p3_matches_dense_grid_on_2d() {
        // min (|x2|^3 + |1 + x2|^3 + |1 - x2|^3)^(1/3) with x1 fixed at 1.
        let m = Mat::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        let a = Vec64::from_column_slice(&[1.0, 0.0]);
        let r = solve_min_lp(&m, &a, 3.0, 1e-4, 1e-10);
        let mut best = f64::INFINITY;
        let mut k = -20000;
        while k <= 20000 {
            let x2 = k as f64 * 1e-4;
            let v = (x2.abs().powi(3) + (1.0 + x2).abs().powi(3) + (1.0 - x2).abs().powi(3))
                .powf(1.0 / 3.0);
            best = best.min(v);
            k += 1;
        }
        assert!((r.value - best).abs() <= 2e-4 * best, "irls {} vs grid {best}", r.value);
    }
}
