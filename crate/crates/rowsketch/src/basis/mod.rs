//! Well-conditioned bases for column spaces under p-norms.
//!
//! Two constructions: change of basis through the maximum-volume inscribed
//! ellipsoid of {x : ‖Ax‖_p <= 1} (giving the d / d^{max(1-1/p,1/2)} pair
//! and the two-sided norm sandwich), and the Lewis-weight basis via QR of
//! the reweighted matrix (giving per-row norms w_i^{1/p} and the pointwise
//! sensitivity bound).

mod ellipsoid;

use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, PinvGram};
use crate::Mat;

/// Basis U = A G^{-1} with conditioning certificates. `alpha` bounds the
/// sum of column p-norms to the p-th power; `beta` is the norm-duality
/// constant: ‖x‖_q <= beta ‖Ux‖_p for the conjugate exponent q. The
/// ellipsoid construction additionally satisfies
/// (1/sqrt(d)) ‖x‖_2 <= ‖Ux‖_p <= ‖x‖_2 up to the ascent slack.
#[derive(Debug, Clone)]
pub struct WellConditionedBasis {
    pub u: Mat,
    pub g: Mat,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
}

/// Lewis weights: the fixed point w_i = tau_i(diag(w)^{1/2-1/p} A) of the
/// reweighted leverage map, each in [0,1] with sum at most d.
#[derive(Debug, Clone)]
pub struct LewisWeights {
    pub w: Vec<f64>,
}

impl LewisWeights {
    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

fn require_full_rank(a: &Mat, rel_cutoff: f64) -> Result<()> {
    let rank = PinvGram::from_rows(a, rel_cutoff).rank();
    if rank < a.ncols() {
        return Err(Error::RankDeficient { rank, cols: a.ncols() });
    }
    Ok(())
}

/// Basis through the maximum-volume inscribed ellipsoid of the unit p-ball
/// of A. The ellipsoid's quadratic form F = G^T G defines the change of
/// basis; the upper side of the sandwich is enforced by rescaling with the
/// empirically maximized 2->p operator ratio.
pub fn well_conditioned_basis_lj(a: &Mat, p: f64, seed: u64) -> Result<WellConditionedBasis> {
    let d = a.ncols();
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    require_full_rank(a, 1e-10)?;

    let (f, _slack) = ellipsoid::inscribed_ellipsoid(a, p, seed);
    let sym = (&f + f.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(sym)
        .ok_or_else(|| Error::NoConvergence("inscribed ellipsoid form not positive definite".into()))?;
    let l = chol.l();
    // U = A (L^T)^{-1}, solved as L U^T = A^T.
    let ut = l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::NoConvergence("singular ellipsoid factor".into()))?;
    let mut u = ut.transpose();
    let mut g = l.transpose();

    // The sampled polar can undercover the true body, letting ‖Ux‖_p peek
    // above ‖x‖_2; scale that out empirically.
    let s = ellipsoid::operator_ratio_2_to_p(&u, p, seed ^ 0x51);
    if s > 1.0 {
        let adj = s * (1.0 + 1e-4);
        u /= adj;
        g *= adj;
    }

    let alpha = d as f64;
    let beta = (d as f64).powf((1.0 - 1.0 / p).max(0.5));
    Ok(WellConditionedBasis { u, g, alpha, beta, p })
}

/// Lewis weights by fixed-point iteration, damped for p >= 4.
pub fn lewis_weights(a: &Mat, p: f64) -> Result<LewisWeights> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let n = a.nrows();
    let exponent = 0.5 - 1.0 / p;
    let nonzero: Vec<bool> = (0..n).map(|i| a.row(i).norm() > 0.0).collect();
    let mut w = vec![1.0f64; n];
    for (i, &nz) in nonzero.iter().enumerate() {
        if !nz {
            w[i] = 0.0;
        }
    }
    // The undamped map contracts for p in [2,4) (log-space Jacobian
    // spectrum (1-2/p)[0,1]); at p = 1 the spectrum touches -1 and the
    // iteration oscillates without decay, so damping is applied on both
    // sides of that window.
    let damping = if (2.0..4.0).contains(&p) { 1.0 } else { 0.5 };
    let max_iters = 3000;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let mut b = a.clone();
        for i in 0..n {
            if nonzero[i] {
                let row = b.row(i) * w[i].max(1e-300).powf(exponent);
                b.set_row(i, &row);
            }
        }
        let tau = leverage_scores(&b, 1e-10);
        residual = (0..n)
            .filter(|&i| nonzero[i])
            .map(|i| (w[i] - tau[i]).abs())
            .fold(0.0f64, f64::max);
        if residual <= 1e-9 {
            break;
        }
        for i in 0..n {
            if nonzero[i] {
                let target = tau[i].max(1e-300);
                w[i] = if damping == 1.0 {
                    target
                } else {
                    w[i].max(1e-300).powf(1.0 - damping) * target.powf(damping)
                };
            }
        }
    }
    if residual > 1e-6 {
        return Err(Error::NoConvergence(format!(
            "Lewis weight fixed point stalled at residual {residual:.2e} (p = {p})"
        )));
    }
    for v in w.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(LewisWeights { w })
}

/// Lewis-weight basis: H = A R^{-1} with R from the QR factorization of
/// diag(w)^{1/2-1/p} A. Row norms of H equal w_i^{1/p}, and each row's
/// sensitivity is bounded by w_i d^{max(p/2-1,0)}.
pub fn basis_from_lewis(a: &Mat, p: f64) -> Result<WellConditionedBasis> {
    let d = a.ncols();
    require_full_rank(a, 1e-10)?;
    let lw = lewis_weights(a, p)?;
    let exponent = 0.5 - 1.0 / p;
    let mut b = a.clone();
    for i in 0..a.nrows() {
        if lw.w[i] > 0.0 {
            let row = b.row(i) * lw.w[i].powf(exponent);
            b.set_row(i, &row);
        } else {
            let row = b.row(i) * 0.0;
            b.set_row(i, &row);
        }
    }
    let qr = b.qr();
    let r = qr.r();
    let rmax = (0..d).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
    if (0..d).any(|j| r[(j, j)].abs() <= 1e-12 * rmax) {
        return Err(Error::RankDeficient { rank: 0, cols: d });
    }
    // H = A R^{-1}, solved as R^T H^T = A^T with R^T lower triangular.
    let ht = r
        .transpose()
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::NoConvergence("singular R in Lewis basis".into()))?;
    let h = ht.transpose();
    let alpha = (d as f64).powf((2.0 - p / 2.0).max(1.0));
    let beta = (d as f64).powf((1.0 - 1.0 / p).max(0.5));
    Ok(WellConditionedBasis { u: h, g: r, alpha, beta, p })
}
