//! Shared dense kernels: pseudoinverse quadratic forms, rowspace tests,
//! spectral quantities, and p-norms. Everything routes through SVD or a
//! symmetric eigendecomposition with one relative rank cutoff so rank
//! decisions are made the same way everywhere.

use crate::{Mat, Vec64};

/// Outcome classifier for rank-sensitive quadratic forms. ToleranceLimited
/// means some singular value sits close enough to the rank cutoff that the
/// returned value depends on the rank decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadformStatus {
    Ok,
    ToleranceLimited,
}

/// Eigenstructure of a positive semidefinite Gram matrix above a relative
/// rank cutoff. All rowspace queries and regularized quadratic forms are
/// answered from this cached form.
#[derive(Debug, Clone)]
pub struct PinvGram {
    /// d x r, orthonormal columns spanning the rowspace.
    basis: Mat,
    /// Singular values of the row matrix (sqrt of Gram eigenvalues), descending.
    sigmas: Vec<f64>,
    dim: usize,
    /// Largest singular value before the cutoff was applied.
    sigma_max: f64,
    /// Largest discarded singular value (0 if none were discarded).
    sigma_dropped: f64,
}

impl PinvGram {
    /// Builds from the d x d Gram matrix A^T A. `rel_cutoff` is on the
    /// singular-value scale: sigma <= rel_cutoff * sigma_max is rank zero.
    pub fn from_gram(g: &Mat, rel_cutoff: f64) -> Self {
        let d = g.nrows();
        assert_eq!(d, g.ncols(), "Gram matrix must be square");
        let sym = (g + g.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap()
        });
        let lam_max = order.first().map(|&i| eig.eigenvalues[i].max(0.0)).unwrap_or(0.0);
        let sigma_max = lam_max.sqrt();
        let cut = rel_cutoff * sigma_max;
        let mut sigmas = Vec::new();
        let mut keep = Vec::new();
        let mut sigma_dropped = 0.0f64;
        for &i in &order {
            let s = eig.eigenvalues[i].max(0.0).sqrt();
            if s > cut && s > 0.0 {
                sigmas.push(s);
                keep.push(i);
            } else {
                sigma_dropped = sigma_dropped.max(s);
            }
        }
        let mut basis = Mat::zeros(d, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            basis.set_column(col, &eig.eigenvectors.column(i));
        }
        PinvGram { basis, sigmas, dim: d, sigma_max, sigma_dropped }
    }

    /// Builds from the n x d row matrix directly (better conditioned than
    /// forming the Gram matrix when singular values are spread out).
    pub fn from_rows(m: &Mat, rel_cutoff: f64) -> Self {
        let d = m.ncols();
        let svd = m.clone().svd(false, true);
        let v_t = svd.v_t.expect("svd requested v_t");
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let cut = rel_cutoff * sigma_max;
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
        });
        let mut sigmas = Vec::new();
        let mut keep = Vec::new();
        let mut sigma_dropped = 0.0f64;
        for &i in &idx {
            let s = svd.singular_values[i];
            if s > cut && s > 0.0 {
                sigmas.push(s);
                keep.push(i);
            } else {
                sigma_dropped = sigma_dropped.max(s);
            }
        }
        let mut basis = Mat::zeros(d, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            basis.set_column(col, &v_t.row(i).transpose());
        }
        PinvGram { basis, sigmas, dim: d, sigma_max, sigma_dropped }
    }

    pub fn rank(&self) -> usize {
        self.sigmas.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Smallest singular value above the rank cutoff (None for rank 0).
    pub fn sigma_min_nonzero(&self) -> Option<f64> {
        self.sigmas.last().copied()
    }

    /// Orthonormal rowspace basis, d x rank.
    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    /// Norm of the component of `a` outside the rowspace.
    pub fn residual_norm(&self, a: &Vec64) -> f64 {
        let c = self.basis.transpose() * a;
        let r = a - &self.basis * c;
        r.norm()
    }

    /// Rowspace membership at relative tolerance `tol_rel * ||a||`.
    pub fn in_rowspace(&self, a: &Vec64, tol_rel: f64) -> bool {
        let na = a.norm();
        if na == 0.0 {
            return true;
        }
        self.residual_norm(a) <= tol_rel * na
    }

    /// a^T (G + lambda I)^+ a. With lambda = 0 the component of `a` outside
    /// the rowspace is annihilated by the pseudoinverse; with lambda > 0 it
    /// contributes ||a_perp||^2 / lambda.
    pub fn quadform(&self, a: &Vec64, lambda: f64) -> f64 {
        let c = self.basis.transpose() * a;
        let mut total = 0.0;
        for (j, &s) in self.sigmas.iter().enumerate() {
            total += c[j] * c[j] / (s * s + lambda);
        }
        if lambda > 0.0 {
            let r = a - &self.basis * c;
            total += r.norm_squared() / lambda;
        }
        total
    }

    /// Same as [`Self::quadform`], flagging answers whose rank decision was
    /// ambiguous: a singular value within a factor 100 of the cutoff on
    /// either side.
    pub fn quadform_checked(&self, a: &Vec64, lambda: f64, rel_cutoff: f64) -> (f64, QuadformStatus) {
        let v = self.quadform(a, lambda);
        let cut = rel_cutoff * self.sigma_max;
        let kept_close = self
            .sigmas
            .last()
            .map(|&s| s <= 100.0 * cut)
            .unwrap_or(false);
        let dropped_close = self.sigma_dropped >= 1e-2 * cut && self.sigma_dropped > 0.0;
        let status = if kept_close || dropped_close {
            QuadformStatus::ToleranceLimited
        } else {
            QuadformStatus::Ok
        };
        (v, status)
    }
}

/// a^T (M^T M + lambda I)^+ a computed from the row matrix M.
pub fn pinv_quadform(m: &Mat, a: &Vec64, lambda: f64, rel_cutoff: f64) -> f64 {
    PinvGram::from_rows(m, rel_cutoff).quadform(a, lambda)
}

/// Checked variant of [`pinv_quadform`].
pub fn pinv_quadform_checked(
    m: &Mat,
    a: &Vec64,
    lambda: f64,
    rel_cutoff: f64,
) -> (f64, QuadformStatus) {
    PinvGram::from_rows(m, rel_cutoff).quadform_checked(a, lambda, rel_cutoff)
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// (sigma_max, smallest singular value above rel_cutoff * sigma_max).
/// The second entry is None for the zero matrix.
pub fn sigma_extremes(m: &Mat, rel_cutoff: f64) -> (f64, Option<f64>) {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_cutoff * smax;
    let smin = sv
        .iter()
        .cloned()
        .filter(|&s| s > cut && s > 0.0)
        .fold(f64::INFINITY, f64::min);
    (smax, if smin.is_finite() { Some(smin) } else { None })
}

/// Smallest eigenvalue of G_sub restricted to the rowspace of G_full, both
/// seen through the whitening W = V Lambda^{-1/2} of G_full: the minimum of
/// x^T G_sub x / x^T G_full x over the rowspace of G_full.
pub fn min_generalized_eig(g_sub: &Mat, g_full: &Mat, rel_cutoff: f64) -> f64 {
    let full = PinvGram::from_gram(g_full, rel_cutoff);
    let r = full.rank();
    if r == 0 {
        return 1.0;
    }
    let mut w = full.basis().clone();
    for (j, &s) in full.sigmas.iter().enumerate() {
        let col = w.column(j) / s;
        w.set_column(j, &col);
    }
    let m = w.transpose() * g_sub * &w;
    let sym = (&m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Row leverage scores tau_i = m_i^T (M^T M)^+ m_i, each in [0,1], via the
/// left singular vectors above the rank cutoff.
pub fn leverage_scores(m: &Mat, rel_cutoff: f64) -> Vec<f64> {
    let n = m.nrows();
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_cutoff * smax;
    let mut tau = vec![0.0f64; n];
    for j in 0..svd.singular_values.len() {
        if svd.singular_values[j] > cut && svd.singular_values[j] > 0.0 {
            for i in 0..n {
                tau[i] += u[(i, j)] * u[(i, j)];
            }
        }
    }
    for t in tau.iter_mut() {
        *t = t.clamp(0.0, 1.0);
    }
    tau
}

/// ||v||_p with overflow-safe scaling. Requires p >= 1.
pub fn lp_norm(v: &Vec64, p: f64) -> f64 {
    debug_assert!(p >= 1.0);
    let m = v.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|x| (x.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// ||M x||_p.
pub fn lp_norm_rows(m: &Mat, x: &Vec64, p: f64) -> f64 {
    lp_norm(&(m * x), p)
}

/// ||M x||_inf.
pub fn linf_norm_rows(m: &Mat, x: &Vec64) -> f64 {
    (m * x).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Stacks DVector rows into a matrix; `d` disambiguates the empty case.
pub fn stack_rows(rows: &[Vec64], d: usize) -> Mat {
    let mut m = Mat::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), d);
        m.set_row(i, &r.transpose());
    }
    m
}
