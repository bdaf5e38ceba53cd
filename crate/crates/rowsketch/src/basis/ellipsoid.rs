//! Maximum-volume inscribed ellipsoid of {x : ‖Ax‖_p <= 1}, via the polar.
//!
//! The polar of the unit p-ball of A is A^T B_q (q conjugate), so its
//! boundary is cheap to sample: y = A^T λ with ‖λ‖_q = 1. The minimum
//! volume enclosing ellipsoid of the symmetrized samples is computed by
//! barycentric coordinate ascent (maximize log det of the second-moment
//! matrix over the simplex), and the inscribed ellipsoid of the original
//! body is its polar. With P = Σ u_k y_k y_k^T and w_max the largest value
//! of y^T P^{-1} y over the samples, {y : y^T P^{-1} y <= w_max} covers
//! every sample by construction, so the returned F = w_max P always gives
//! a valid polar pair regardless of how far the ascent got.

use crate::hashing::row_rng;
use crate::linalg::lp_norm;
use crate::{Mat, Vec64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Quadratic form F of the inscribed ellipsoid {x : x^T F x <= 1} of
/// {x : ‖Ax‖_p <= 1}, with the achieved ascent slack (w_max / d - 1).
pub(super) fn inscribed_ellipsoid(a: &Mat, p: f64, seed: u64) -> (Mat, f64) {
    let d = a.ncols();
    let q = if p > 1.0 { p / (p - 1.0) } else { f64::INFINITY };
    let points = polar_boundary_samples(a, q, seed);
    let (pmat, slack) = mvee_second_moment(&points, d, 1e-3, 60_000);
    let f = pmat * (slack + 1.0) * d as f64;
    (f, slack)
}

/// Boundary samples of A^T B_q: mixtures of Gaussian directions, sign
/// vectors (the extreme points for q = inf), coordinate vectors (the rows
/// of A), and left singular directions, each normalized to ‖λ‖_q = 1.
fn polar_boundary_samples(a: &Mat, q: f64, seed: u64) -> Vec<Vec64> {
    let n = a.nrows();
    let d = a.ncols();
    let mut rng = row_rng(seed, 0x9A11);
    let budget = (1200 + 600 * d).min(20_000);
    let mut lambdas: Vec<Vec64> = Vec::new();

    for i in 0..n {
        let mut e = Vec64::zeros(n);
        e[i] = 1.0;
        lambdas.push(e);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    for j in 0..u.ncols() {
        lambdas.push(u.column(j).clone_owned());
    }
    while lambdas.len() < budget {
        let mut l = Vec64::zeros(n);
        if rng.random::<bool>() {
            for v in l.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        } else {
            for v in l.iter_mut() {
                *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
        lambdas.push(l);
    }

    let mut points = Vec::with_capacity(lambdas.len());
    for l in lambdas {
        let norm = if q.is_infinite() {
            l.iter().map(|v| v.abs()).fold(0.0f64, f64::max)
        } else {
            lp_norm(&l, q)
        };
        if norm > 0.0 {
            points.push(a.transpose() * (l / norm));
        }
    }
    points
}

/// Barycentric ascent for the minimum-volume origin-centered enclosing
/// ellipsoid of a symmetric point set. Returns the second-moment matrix
/// P = Σ u_k y_k y_k^T at termination and slack = w_max / d - 1.
fn mvee_second_moment(points: &[Vec64], d: usize, eps: f64, max_iters: usize) -> (Mat, f64) {
    let m = points.len();
    assert!(m > 0);
    let mut u = vec![1.0 / m as f64; m];
    let mut pmat = Mat::zeros(d, d);
    for y in points {
        pmat += y * y.transpose() * (1.0 / m as f64);
    }
    let mut pinv = invert_spd(&pmat);
    let df = d as f64;

    let mut slack = f64::INFINITY;
    for iter in 0..max_iters {
        let mut w_max = f64::NEG_INFINITY;
        let mut k_max = 0;
        for (k, y) in points.iter().enumerate() {
            let w = (y.transpose() * &pinv * y)[(0, 0)];
            if w > w_max {
                w_max = w;
                k_max = k;
            }
        }
        slack = w_max / df - 1.0;
        if slack <= eps {
            break;
        }
        let beta = (w_max - df) / (df * (w_max - 1.0));
        for v in u.iter_mut() {
            *v *= 1.0 - beta;
        }
        u[k_max] += beta;

        let y = &points[k_max];
        pmat = &pmat * (1.0 - beta) + y * y.transpose() * beta;
        if iter % 500 == 499 {
            pinv = invert_spd(&pmat);
        } else {
            // Sherman-Morrison on (1-beta)P + beta y y^T.
            let binv = &pinv / (1.0 - beta);
            let bz = &binv * y;
            let denom = 1.0 + beta * (y.transpose() * &bz)[(0, 0)];
            pinv = &binv - &bz * bz.transpose() * (beta / denom);
        }
    }
    (pmat, slack.max(0.0))
}

fn invert_spd(m: &Mat) -> Mat {
    let d = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    if let Some(chol) = nalgebra::Cholesky::new(sym.clone()) {
        return chol.inverse();
    }
    // Ridge fallback for nearly singular second moments.
    let ridge = sym.trace().max(1e-300) * 1e-12 / d as f64;
    nalgebra::Cholesky::new(sym + Mat::identity(d, d) * ridge)
        .expect("ridged SPD inverse")
        .inverse()
}

/// Empirical 2 -> p operator ratio sup ‖Ux‖_p / ‖x‖_2 by multi-start
/// power-type ascent x <- normalize(U^T ψ(Ux)), ψ(r) = |r|^{p-1} sign(r),
/// seeded with coordinates, singular directions, and random starts.
pub(super) fn operator_ratio_2_to_p(u: &Mat, p: f64, seed: u64) -> f64 {
    let d = u.ncols();
    let mut rng = row_rng(seed, 0x09E2);
    let mut starts: Vec<Vec64> = Vec::new();
    for j in 0..d {
        let mut e = Vec64::zeros(d);
        e[j] = 1.0;
        starts.push(e);
    }
    let svd = u.clone().svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    for j in 0..vt.nrows() {
        starts.push(vt.row(j).transpose());
    }
    for _ in 0..24 {
        let mut x = Vec64::zeros(d);
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        starts.push(x);
    }

    let mut best = 0.0f64;
    for mut x in starts {
        let nx = x.norm();
        if nx == 0.0 {
            continue;
        }
        x /= nx;
        for _ in 0..60 {
            let r = u * &x;
            let g = r.map(|v| v.abs().powf(p - 1.0) * v.signum());
            let next = u.transpose() * g;
            let nn = next.norm();
            if nn == 0.0 {
                break;
            }
            let next = next / nn;
            if (&next - &x).norm() < 1e-12 {
                x = next;
                break;
            }
            x = next;
        }
        let ratio = lp_norm(&(u * &x), p);
        best = best.max(ratio);
    }
    best
}
