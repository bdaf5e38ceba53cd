//! Exact distortion measurement for row subsets.
//!
//! The sup-norm distortion of a subset S restricted to rowspan(A_S) is
//! phi = max_x ||A x||_inf / ||A_S x||_inf. Writing x = A_S^T y turns each
//! row's contribution into the linear program
//!   min t  s.t.  <A_S a_j, y> = 1,  +-(A_S A_S^T) y <= t 1,
//! whose optimum t_j gives max |<a_j, x>| over the unit ||A_S x||_inf ball
//! as 1/t_j; phi is the maximum over rows.

use nalgebra::SymmetricEigen;
use rowsketch::error::{Error, Result};
use rowsketch::solvers::{min_linf_subject_linear, SolveStatus};
use rowsketch::Mat;

#[derive(Debug, Clone)]
pub struct DistortionReport {
    pub phi: f64,
    /// Rows orthogonal to rowspan(A_S): their programs are infeasible and
    /// they cannot be stretched inside the subspace.
    pub skipped: Vec<usize>,
    pub rows_measured: usize,
}

pub fn measure_distortion_linf(a: &Mat, s: &[usize]) -> Result<DistortionReport> {
    let d = a.ncols();
    if s.is_empty() {
        return Err(Error::InvalidArgument("subset S must be nonempty".into()));
    }
    let mut a_s = Mat::zeros(s.len(), d);
    for (r, &i) in s.iter().enumerate() {
        if i >= a.nrows() {
            return Err(Error::InvalidArgument(format!(
                "subset index {i} out of range for {} rows",
                a.nrows()
            )));
        }
        a_s.set_row(r, &a.row(i));
    }
    if a_s.norm() == 0.0 {
        return Err(Error::InvalidArgument("A_S is the zero matrix".into()));
    }
    let gram_s = &a_s * a_s.transpose();
    let scale = a_s.norm();
    let mut phi = 0.0f64;
    let mut skipped = Vec::new();
    let mut measured = 0usize;
    for j in 0..a.nrows() {
        let c = &a_s * a.row(j).transpose();
        // Rows orthogonal to the rowspan make the equality unsatisfiable
        // inside the subspace.
        if c.norm() <= 1e-12 * scale * a.row(j).norm().max(1.0) {
            skipped.push(j);
            continue;
        }
        let r = min_linf_subject_linear(&gram_s, &c, 1e-9);
        match r.status {
            SolveStatus::Optimal | SolveStatus::ToleranceLimited => {
                if r.value > 0.0 {
                    phi = phi.max(1.0 / r.value);
                    measured += 1;
                } else {
                    skipped.push(j);
                }
            }
            _ => skipped.push(j),
        }
    }
    if measured == 0 {
        return Err(Error::InvalidArgument(
            "no row of A intersects rowspan(A_S)".into(),
        ));
    }
    Ok(DistortionReport { phi, skipped, rows_measured: measured })
}

/// Extreme generalized stretch factors of `test` against `reference`:
/// the (min, max) over x of ||test x||_2^2 / ||reference x||_2^2 restricted
/// to directions the reference matrix actually spans. A (1 +- eps)
/// embedding has both inside [(1-eps)^2, (1+eps)^2].
pub fn spectral_stretch(reference: &Mat, test: &Mat) -> (f64, f64) {
    let d = reference.ncols();
    let g_ref = reference.transpose() * reference;
    let g_test = test.transpose() * test;
    let eig = SymmetricEigen::new(g_ref);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = max_ev * 1e-12;
    let mut half = Mat::zeros(d, d);
    let mut rank = 0usize;
    for i in 0..d {
        let ev = eig.eigenvalues[i];
        if ev > cut {
            let col = eig.eigenvectors.column(i);
            half += ev.powf(-0.5) * &col * col.transpose();
            rank += 1;
        }
    }
    if rank == 0 {
        return (0.0, f64::INFINITY);
    }
    let mid = &half * g_test * &half;
    let vals = SymmetricEigen::new(mid).eigenvalues;
    // Only directions inside the reference rowspace count; the pencil has
    // d - rank spurious zero eigenvalues from the projector's kernel.
    let mut sorted: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = sorted[d - rank];
    let hi = sorted[d - 1];
    (lo, hi)
}
