//! Two-phase dense simplex for min ‖Mx‖_inf subject to ⟨a,x⟩ = 1.
//!
//! Standard form: x = u - v with u, v >= 0, one bounded variable t for the
//! max, slack per inequality ±⟨m_i,x⟩ <= t, and a single artificial for the
//! equality row, so phase 1 only has to drive that one variable out.
//! Dantzig pricing with a Bland fallback after a degenerate stretch, which
//! is all these small structured instances need.

use super::{SolveStatus, SolverResult};
use crate::{Mat, Vec64};

/// Optimality certificate from the final basis: the duality gap
/// |c·x - y·b| (in original problem units) and the worst reduced-cost
/// violation on the scaled problem.
#[derive(Debug, Clone, Copy)]
pub struct LpCertificate {
    pub duality_gap: f64,
    pub dual_infeasibility: f64,
}

const PIVOT_TOL: f64 = 1e-11;
const ENTER_TOL: f64 = 1e-9;

pub(crate) fn solve_min_linf(m: &Mat, a: &Vec64, tol: f64) -> (SolverResult, LpCertificate) {
    let d = a.len();
    let a_scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if a_scale == 0.0 {
        return (
            SolverResult {
                argmin: Vec64::zeros(d),
                value: 0.0,
                status: SolveStatus::Infeasible,
            },
            LpCertificate { duality_gap: f64::INFINITY, dual_infeasibility: f64::INFINITY },
        );
    }
    let n = m.nrows();
    let m_scale = m.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if n == 0 || m_scale == 0.0 {
        let x = a * (1.0 / a.norm_squared());
        return (
            SolverResult { argmin: x, value: 0.0, status: SolveStatus::Optimal },
            LpCertificate { duality_gap: 0.0, dual_infeasibility: 0.0 },
        );
    }
    debug_assert_eq!(m.ncols(), d);

    // Scaled instance: M/m_scale against a/a_scale; value maps back by
    // m_scale / a_scale and the point by 1 / a_scale.
    let n_rows = 2 * n + 1;
    let eq = 2 * n;
    let t_col = 2 * d;
    let slack0 = 2 * d + 1;
    let art_col = slack0 + 2 * n;
    let n_cols = art_col + 1;
    let rhs_col = n_cols;

    let mut tab = Mat::zeros(n_rows, n_cols + 1);
    for i in 0..n {
        for j in 0..d {
            let mij = m[(i, j)] / m_scale;
            tab[(2 * i, j)] = mij;
            tab[(2 * i, d + j)] = -mij;
            tab[(2 * i + 1, j)] = -mij;
            tab[(2 * i + 1, d + j)] = mij;
        }
        tab[(2 * i, t_col)] = -1.0;
        tab[(2 * i + 1, t_col)] = -1.0;
        tab[(2 * i, slack0 + 2 * i)] = 1.0;
        tab[(2 * i + 1, slack0 + 2 * i + 1)] = 1.0;
    }
    for j in 0..d {
        let aj = a[j] / a_scale;
        tab[(eq, j)] = aj;
        tab[(eq, d + j)] = -aj;
    }
    tab[(eq, art_col)] = 1.0;
    tab[(eq, rhs_col)] = 1.0;

    let mut basis: Vec<usize> = (0..2 * n).map(|i| slack0 + i).collect();
    basis.push(art_col);
    let mut banned = vec![false; n_cols];

    // Phase 1: minimize the artificial variable.
    let mut cost1 = vec![0.0; n_cols];
    cost1[art_col] = 1.0;
    let phase1 = run_simplex(&mut tab, &mut basis, &cost1, &banned);
    let infeasible = match phase1 {
        SimplexOutcome::Optimal(obj) => obj > 1e-7,
        _ => true,
    };
    if infeasible {
        return (
            SolverResult {
                argmin: Vec64::zeros(d),
                value: 0.0,
                status: SolveStatus::Infeasible,
            },
            LpCertificate { duality_gap: f64::INFINITY, dual_infeasibility: f64::INFINITY },
        );
    }
    banned[art_col] = true;
    if let Some(row) = basis.iter().position(|&b| b == art_col) {
        // Artificial basic at level zero: pivot it out on any usable column.
        if let Some(col) = (0..n_cols)
            .find(|&j| !banned[j] && !basis.contains(&j) && tab[(row, j)].abs() > 1e-8)
        {
            pivot(&mut tab, &mut basis, row, col);
        }
    }

    // Phase 2: minimize t.
    let mut cost2 = vec![0.0; n_cols];
    cost2[t_col] = 1.0;
    let phase2 = run_simplex(&mut tab, &mut basis, &cost2, &banned);

    let mut x_hat = Vec64::zeros(d);
    for (row, &b) in basis.iter().enumerate() {
        let val = tab[(row, rhs_col)];
        if b < d {
            x_hat[b] += val;
        } else if b < 2 * d {
            x_hat[b - d] -= val;
        }
    }
    let v_hat: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == t_col)
        .map(|(row, _)| tab[(row, rhs_col)])
        .sum();

    // Dual vector for the certificate: y = c_B^T B^{-1}, read off the
    // columns that formed the initial identity basis (slacks, artificial).
    // Only the equality component carries the dual objective since all
    // other right-hand sides are zero.
    let y_eq: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == t_col)
        .map(|(row, _)| tab[(row, art_col)])
        .sum();
    let unit = m_scale / a_scale;
    let gap = (v_hat - y_eq).abs() * unit;

    let red = reduced_costs(&tab, &basis, &cost2);
    let dual_inf = red
        .iter()
        .enumerate()
        .filter(|(j, _)| !banned[*j])
        .map(|(_, &r)| (-r).max(0.0))
        .fold(0.0f64, f64::max);

    let status = match phase2 {
        SimplexOutcome::Optimal(_) => {
            if gap <= tol * (1.0 + v_hat.abs() * unit) && dual_inf <= 1e3 * ENTER_TOL {
                SolveStatus::Optimal
            } else {
                SolveStatus::ToleranceLimited
            }
        }
        SimplexOutcome::Unbounded => SolveStatus::Unbounded,
        SimplexOutcome::Stalled => SolveStatus::ToleranceLimited,
    };

    let argmin = &x_hat / a_scale;
    let value = v_hat * unit;
    (
        SolverResult { argmin, value, status },
        LpCertificate { duality_gap: gap, dual_infeasibility: dual_inf },
    )
}

enum SimplexOutcome {
    Optimal(f64),
    Unbounded,
    Stalled,
}

fn reduced_costs(tab: &Mat, basis: &[usize], cost: &[f64]) -> Vec<f64> {
    let n_cols = cost.len();
    let mut red = cost.to_vec();
    for (row, &b) in basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            for j in 0..n_cols {
                red[j] -= cb * tab[(row, j)];
            }
        }
    }
    // Basic columns are exactly zero by construction; clamp noise.
    for &b in basis {
        red[b] = 0.0;
    }
    red
}

fn objective(tab: &Mat, basis: &[usize], cost: &[f64]) -> f64 {
    let rhs_col = tab.ncols() - 1;
    basis
        .iter()
        .enumerate()
        .map(|(row, &b)| cost[b] * tab[(row, rhs_col)])
        .sum()
}

fn pivot(tab: &mut Mat, basis: &mut [usize], row: usize, col: usize) {
    let n_cols = tab.ncols();
    let piv = tab[(row, col)];
    for j in 0..n_cols {
        tab[(row, j)] /= piv;
    }
    tab[(row, col)] = 1.0;
    let prow: Vec<f64> = (0..n_cols).map(|j| tab[(row, j)]).collect();
    for i in 0..tab.nrows() {
        if i == row {
            continue;
        }
        let f = tab[(i, col)];
        if f != 0.0 {
            for j in 0..n_cols {
                tab[(i, j)] -= f * prow[j];
            }
            tab[(i, col)] = 0.0;
        }
    }
    basis[row] = col;
}

fn run_simplex(tab: &mut Mat, basis: &mut Vec<usize>, cost: &[f64], banned: &[bool]) -> SimplexOutcome {
    let n_rows = tab.nrows();
    let n_cols = cost.len();
    let rhs_col = n_cols;
    let max_iters = 400 + 60 * (n_rows + n_cols);
    let mut bland = false;
    let mut stale = 0usize;
    let mut last_obj = objective(tab, basis, cost);

    for _ in 0..max_iters {
        let red = reduced_costs(tab, basis, cost);
        let entering = if bland {
            (0..n_cols).find(|&j| !banned[j] && red[j] < -ENTER_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n_cols {
                if !banned[j] && red[j] < -ENTER_TOL {
                    if best.map(|(_, r)| red[j] < r).unwrap_or(true) {
                        best = Some((j, red[j]));
                    }
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(col) = entering else {
            return SimplexOutcome::Optimal(objective(tab, basis, cost));
        };

        // Ratio test.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n_rows {
            let t = tab[(i, col)];
            if t > PIVOT_TOL {
                let ratio = tab[(i, rhs_col)] / t;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        if ratio < lr * (1.0 - 1e-12) - 1e-300 {
                            true
                        } else if ratio <= lr * (1.0 + 1e-12) + 1e-300 {
                            if bland {
                                basis[i] < basis[li]
                            } else {
                                t.abs() > tab[(li, col)].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return SimplexOutcome::Unbounded;
        };
        pivot(tab, basis, row, col);

        let obj = objective(tab, basis, cost);
        if last_obj - obj < 1e-13 * (1.0 + last_obj.abs()) {
            stale += 1;
            if stale > 40 {
                bland = true;
            }
        } else {
            stale = 0;
        }
        last_obj = obj;
    }
    SimplexOutcome::Stalled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_rows_do_not_cycle() {
        // Many duplicated rows force degenerate pivots at rhs 0.
        let mut rows = Vec::new();
        for _ in 0..8 {
            rows.extend_from_slice(&[1.0, 1.0]);
            rows.extend_from_slice(&[1.0, -1.0]);
        }
        let m = Mat::from_row_slice(16, 2, &rows);
        let a = Vec64::from_column_slice(&[1.0, 0.0]);
        let (r, cert) = solve_min_linf(&m, &a, 1e-8);
        assert_eq!(r.status, SolveStatus::Optimal);
        // min max(|x1+x2|, |x1-x2|) with x1 = 1 is 1 at x2 = 0.
        assert!((r.value - 1.0).abs() < 1e-8, "value {}", r.value);
        assert!(cert.duality_gap <= 1e-8 * 2.0);
    }

    #[test]
    fn badly_scaled_instance_maps_back() {
        let m = Mat::from_row_slice(2, 2, &[1e8, 0.0, 0.0, 1e8]);
        let a = Vec64::from_column_slice(&[1e-4, 1e-4]);
        let (r, _) = solve_min_linf(&m, &a, 1e-8);
        assert_eq!(r.status, SolveStatus::Optimal);
        // min max(1e8 |x1|, 1e8 |x2|) with 1e-4 (x1 + x2) = 1: x = (5e3, 5e3).
        assert!((r.value - 5e11).abs() / 5e11 < 1e-9, "value {}", r.value);
    }
}
