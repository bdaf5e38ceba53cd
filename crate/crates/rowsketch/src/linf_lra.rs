//! Online rank-k ridge-leverage coresets for max-distance (ℓ∞) subspace
//! approximation, the ℓp extension via integer exponential scaling, and
//! the derived geometry estimators (outer radius, width, Löwner-John
//! region).
//!
//! The coreset rule: keep row a iff aᵀ(A_SᵀA_S + λI)⁺a ≥ 1/(1+1/k) with
//! λ = ‖A_S − [A_S]_k‖_F²/k recomputed exactly whenever S changes. A
//! rejected row then satisfies d(a,V)² < Σ_{s∈S} d(s,V)² for every
//! k-dimensional V, which yields the deterministic two-sided bound
//! max_S d ≤ max_full d ≤ √|S| · max_S d.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hashing::{mix2, row_rng};
use crate::linalg::stack_rows;
use crate::{Mat, Vec64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian sketch height per unit of ln(stream length hint).
const FAST_ROWS_PER_LOG: usize = 24;

/// Thin spectral factor of the stored rows: right singular vectors with
/// nonzero singular values, plus the current ridge parameter.
#[derive(Debug, Clone)]
struct RidgeFactor {
    /// d x r right singular vectors of A_S (nonzero part).
    v: Mat,
    /// Squared singular values, descending, length r.
    sig2: Vec<f64>,
    lambda: f64,
}

impl RidgeFactor {
    fn empty(d: usize) -> Self {
        RidgeFactor { v: Mat::zeros(d, 0), sig2: Vec::new(), lambda: 0.0 }
    }

    fn rank(&self) -> usize {
        self.sig2.len()
    }

    fn in_rowspace(&self, a: &Vec64) -> bool {
        let na = a.norm();
        if na == 0.0 {
            return true;
        }
        let resid = a - &self.v * (self.v.transpose() * a);
        resid.norm() <= 1e-8 * na
    }

    /// aᵀ(A_SᵀA_S + λI)⁺ a, exact.
    fn quadform(&self, a: &Vec64) -> f64 {
        let proj = self.v.transpose() * a;
        if self.lambda == 0.0 {
            proj.iter().zip(&self.sig2).map(|(c, s2)| c * c / s2).sum()
        } else {
            let inv_l = 1.0 / self.lambda;
            let corr: f64 = proj
                .iter()
                .zip(&self.sig2)
                .map(|(c, s2)| c * c * (1.0 / (s2 + self.lambda) - inv_l))
                .sum();
            a.norm_squared() * inv_l + corr
        }
    }

    /// (A_SᵀA_S + λI)^{+1/2} applied through a Gaussian sketch:
    /// returns Γ·F with Γ drawn fresh (m x d).
    fn sketched_factor(&self, m: usize, seed: u64) -> Mat {
        let d = self.v.nrows();
        let mut rng = row_rng(seed, u64::MAX - 23);
        let gamma = Mat::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng));
        let coef: Vec<f64> = if self.lambda == 0.0 {
            self.sig2.iter().map(|s2| 1.0 / s2.sqrt()).collect()
        } else {
            let base = 1.0 / self.lambda.sqrt();
            self.sig2.iter().map(|s2| 1.0 / (s2 + self.lambda).sqrt() - base).collect()
        };
        let gv = &gamma * &self.v;
        let mut scaled = gv.clone();
        for (j, c) in coef.iter().enumerate() {
            let col = scaled.column(j) * *c;
            scaled.set_column(j, &col);
        }
        let mut gm = scaled * self.v.transpose();
        if self.lambda > 0.0 {
            gm += gamma / self.lambda.sqrt();
        }
        gm
    }
}

#[derive(Debug, Clone)]
struct FastPath {
    seed: u64,
    m: usize,
    gm: Mat,
}

/// Online rank-k ridge-leverage coreset.
#[derive(Debug, Clone)]
pub struct RidgeCoresetState {
    rows: Vec<Vec64>,
    d: usize,
    k: usize,
    factor: RidgeFactor,
    fast: Option<FastPath>,
    cutoff: f64,
}

impl RidgeCoresetState {
    pub fn new(d: usize, k: usize, cfg: &Config) -> Self {
        assert!(k >= 1, "rank target must be at least 1");
        RidgeCoresetState {
            rows: Vec::new(),
            d,
            k,
            factor: RidgeFactor::empty(d),
            fast: None,
            cutoff: cfg.svd_cutoff,
        }
    }

    /// Same engine, but acceptance scores go through a Gaussian sketch of
    /// the quadratic-form factor, refreshed whenever S changes. `n_hint`
    /// sizes the sketch at 24·⌈ln n⌉ rows.
    pub fn with_fast_path(d: usize, k: usize, n_hint: usize, seed: u64, cfg: &Config) -> Self {
        let mut s = Self::new(d, k, cfg);
        let m = FAST_ROWS_PER_LOG * ((n_hint.max(3) as f64).ln().ceil() as usize);
        s.fast = Some(FastPath { seed, m, gm: Mat::zeros(m, d) });
        s
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec64] {
        &self.rows
    }

    pub fn matrix(&self) -> Mat {
        stack_rows(&self.rows, self.d)
    }

    /// Current ridge parameter: tail Frobenius mass of A_S over k.
    pub fn lambda(&self) -> f64 {
        self.factor.lambda
    }

    /// σ_max/σ_min over nonzero singular values of A_S (1 when empty).
    pub fn condition_number(&self) -> f64 {
        if self.factor.rank() == 0 {
            return 1.0;
        }
        let hi = self.factor.sig2[0];
        let lo = *self.factor.sig2.last().unwrap();
        (hi / lo).sqrt()
    }

    /// Exact online rank-k ridge leverage score of `a` against the
    /// current state: 1 when λ = 0 and a leaves the rowspace, otherwise
    /// min(1, aᵀ(A_SᵀA_S + λI)⁺a).
    pub fn ridge_leverage(&self, a: &Vec64) -> f64 {
        if a.norm() == 0.0 {
            return 0.0;
        }
        if self.factor.lambda == 0.0 && !self.factor.in_rowspace(a) {
            return 1.0;
        }
        self.factor.quadform(a).min(1.0)
    }

    /// Sketched score; falls back to the exact path when the fast path
    /// is not configured. The rank test stays exact.
    pub fn ridge_leverage_fast(&self, a: &Vec64) -> f64 {
        let Some(fast) = &self.fast else {
            return self.ridge_leverage(a);
        };
        if a.norm() == 0.0 {
            return 0.0;
        }
        if self.factor.lambda == 0.0 && !self.factor.in_rowspace(a) {
            return 1.0;
        }
        ((&fast.gm * a).norm_squared() / fast.m as f64).min(1.0)
    }

    /// Accepts iff the (configured) score reaches 1/(1+1/k); the
    /// boundary accepts. On accept λ and the spectral factor are
    /// recomputed from scratch.
    pub fn insert(&mut self, a: &Vec64) -> bool {
        assert_eq!(a.len(), self.d, "row dimension mismatch");
        let score = if self.fast.is_some() {
            self.ridge_leverage_fast(a)
        } else {
            self.ridge_leverage(a)
        };
        let threshold = self.k as f64 / (self.k as f64 + 1.0);
        if score < threshold - 1e-12 {
            return false;
        }
        self.rows.push(a.clone());
        self.refresh();
        true
    }

    fn refresh(&mut self) {
        let m = self.matrix();
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("svd requested v_t");
        let smax = svd.singular_values.max();
        let mut sig2 = Vec::new();
        for &s in svd.singular_values.iter() {
            if s > self.cutoff * smax && s > 0.0 {
                sig2.push(s * s);
            }
        }
        let r = sig2.len();
        let mut v = Mat::zeros(self.d, r);
        for j in 0..r {
            v.set_column(j, &v_t.row(j).transpose());
        }
        let tail: f64 = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i >= self.k)
            .map(|(_, s)| s * s)
            .sum();
        let lambda = (tail / self.k as f64).max(0.0);
        self.factor = RidgeFactor { v, sig2, lambda };
        if let Some(fast) = &mut self.fast {
            let seed = mix2(fast.seed, self.rows.len() as u64);
            fast.gm = self.factor.sketched_factor(fast.m, seed);
        }
    }
}

/// Spec-facing form of [`RidgeCoresetState::insert`].
pub fn ridge_coreset_insert(state: &mut RidgeCoresetState, a: &Vec64) -> bool {
    state.insert(a)
}

/// Ridge coreset pre-seeded with (δ/t)e₁..(δ/t)e_{k+1}, t = 2√(k+1).
/// The seeds bound the stored matrix's condition number by R·t/δ for
/// streams with row norms ≤ R. Returns the state and t.
pub fn padded_ridge_coreset(
    d: usize,
    k: usize,
    delta: f64,
    cfg: &Config,
) -> Result<(RidgeCoresetState, f64)> {
    if k + 1 > d {
        return Err(Error::InvalidArgument(format!(
            "padding needs k+1 <= d, got k {k}, d {d}"
        )));
    }
    if delta <= 0.0 {
        return Err(Error::InvalidArgument("padding scale must be positive".into()));
    }
    let t = 2.0 * ((k + 1) as f64).sqrt();
    let mut state = RidgeCoresetState::new(d, k, cfg);
    for i in 0..=k {
        let mut e = Vec64::zeros(d);
        e[i] = delta / t;
        let accepted = state.insert(&e);
        debug_assert!(accepted, "seed vector must increase rank");
    }
    Ok((state, t))
}

/// Sum of online rank-k ridge leverage scores over `rows` fed in order,
/// plus the final matrix's condition number.
pub fn online_ridge_sum(rows: &[Vec64], k: usize, cfg: &Config) -> (f64, f64) {
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut prefix: Vec<Vec64> = Vec::new();
    let mut factor = RidgeFactor::empty(d);
    let mut sum = 0.0;
    for a in rows {
        let score = if a.norm() == 0.0 {
            0.0
        } else if factor.lambda == 0.0 && !factor.in_rowspace(a) {
            1.0
        } else {
            factor.quadform(a).min(1.0)
        };
        sum += score;
        prefix.push(a.clone());
        factor = prefix_factor(&prefix, d, k, cfg.svd_cutoff);
    }
    let kappa = if factor.rank() == 0 {
        1.0
    } else {
        (factor.sig2[0] / factor.sig2.last().unwrap()).sqrt()
    };
    (sum, kappa)
}

fn prefix_factor(rows: &[Vec64], d: usize, k: usize, cutoff: f64) -> RidgeFactor {
    let m = stack_rows(rows, d);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.max();
    let mut sig2 = Vec::new();
    for &s in svd.singular_values.iter() {
        if s > cutoff * smax && s > 0.0 {
            sig2.push(s * s);
        }
    }
    let mut v = Mat::zeros(d, sig2.len());
    for j in 0..sig2.len() {
        v.set_column(j, &v_t.row(j).transpose());
    }
    let tail: f64 = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i >= k)
        .map(|(_, s)| s * s)
        .sum();
    RidgeFactor { v, sig2, lambda: tail / k as f64 }
}

/// Max over rows of the Euclidean distance to the column span of the
/// orthonormal d×k basis (k = 0 gives max row norm).
pub fn max_subspace_distance(a: &Mat, basis: &Mat) -> f64 {
    let proj = a * basis * basis.transpose();
    let resid = a - proj;
    (0..a.nrows()).map(|i| resid.row(i).norm()).fold(0.0, f64::max)
}

/// Output of [`linf_lra_solve`].
#[derive(Debug, Clone)]
pub struct LinfLraSolution {
    /// Orthonormal d×k basis (top-k right singular subspace of A_S).
    pub basis: Mat,
    /// max_{i∈S} d(a_i, basis).
    pub coreset_cost: f64,
    /// √|S|: full-data max distance is at most certificate·coreset_cost.
    pub certificate: f64,
}

/// Solves the ℓ∞ (max-distance) rank-k problem on the coreset by SVD
/// truncation and reports the √|S| extrapolation certificate.
pub fn linf_lra_solve(state: &RidgeCoresetState, k: usize) -> Result<LinfLraSolution> {
    if state.is_empty() {
        return Err(Error::InvalidArgument("coreset is empty".into()));
    }
    let m = state.matrix();
    let d = state.d;
    let k = k.min(d);
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut basis = Mat::zeros(d, k);
    for j in 0..k.min(v_t.nrows()) {
        basis.set_column(j, &v_t.row(j).transpose());
    }
    let coreset_cost = max_subspace_distance(&m, &basis);
    Ok(LinfLraSolution { basis, coreset_cost, certificate: (state.len() as f64).sqrt() })
}

/// Output of [`lp_subspace_approx`].
#[derive(Debug, Clone)]
pub struct LpSubspaceApprox {
    /// Orthonormal d×k basis, to be evaluated on the unscaled data.
    pub basis: Mat,
    /// Integer row scales ⌈E_i^{−1/p}⌉ actually applied.
    pub scales: Vec<f64>,
    pub coreset_size: usize,
}

/// Rank-k ℓp subspace approximation: scale row i by the integer
/// ⌈E_i^{−1/p}⌉ (E_i independent exponentials), run the ridge coreset on
/// the scaled rows, and solve the ℓ∞ problem on the scaled coreset. For
/// large p the scales concentrate on {1, 2}.
pub fn lp_subspace_approx(
    a: &Mat,
    k: usize,
    p: f64,
    seed: u64,
    cfg: &Config,
) -> Result<LpSubspaceApprox> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    let d = a.ncols();
    let mut state = RidgeCoresetState::new(d, k.max(1), cfg);
    let mut scales = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let mut rng = row_rng(seed, i as u64);
        let mut u: f64 = rng.random();
        while u <= 0.0 {
            u = rng.random();
        }
        let e = -u.ln();
        let s = e.powf(-1.0 / p).ceil();
        scales.push(s);
        let row = a.row(i).transpose() * s;
        state.insert(&row);
    }
    let solution = linf_lra_solve(&state, k)?;
    Ok(LpSubspaceApprox { basis: solution.basis, scales, coreset_size: state.len() })
}

/// Outer (d−k) radius estimate: stream a_i − a₁ into a ridge coreset,
/// solve the ℓ∞ problem there. Returns (radius, certificate, state);
/// the full-data max distance to the best k-flat through a₁ is at most
/// certificate·(true outer radius) whenever radius ≤ certificate·opt.
pub fn outer_radius(
    points: &Mat,
    k: usize,
    cfg: &Config,
) -> Result<(f64, f64, RidgeCoresetState)> {
    if points.nrows() == 0 {
        return Err(Error::InvalidArgument("need at least one point".into()));
    }
    let d = points.ncols();
    let a1 = points.row(0).transpose();
    let mut state = RidgeCoresetState::new(d, k.max(1), cfg);
    for i in 0..points.nrows() {
        let b = points.row(i).transpose() - &a1;
        state.insert(&b);
    }
    if state.is_empty() {
        // All points coincide with a1.
        return Ok((0.0, 1.0, state));
    }
    let solution = linf_lra_solve(&state, k)?;
    let certificate = 2.0 * (state.len() as f64).sqrt();
    Ok((solution.coreset_cost, certificate, state))
}

/// w′(x) = ‖B_S x‖_∞ over the centered coreset: never exceeds the true
/// directional width and undershoots by at most 2√|S| plus the λ slack.
pub fn width_estimate(state: &RidgeCoresetState, x: &Vec64) -> f64 {
    if state.is_empty() {
        return 0.0;
    }
    (state.matrix() * x).amax()
}

/// Shrunken coreset ellipsoid {x : ‖A_S x‖₂ ≤ 1 − shrink} with
/// shrink = c·Δ·log(nκ). Intersected with the unit ball it sits inside
/// {x : ‖Ax‖_∞ ≤ 1}, and that polytope section sits inside the
/// certificate-scaled ellipsoid.
#[derive(Debug, Clone)]
pub struct LjRegion {
    rows: Mat,
    pub shrink: f64,
    /// √|S|: K∩B(0,1) ⊆ certificate·{x : ‖A_S x‖₂ ≤ 1}.
    pub certificate: f64,
}

impl LjRegion {
    pub fn contains(&self, x: &Vec64) -> bool {
        (&self.rows * x).norm() <= 1.0 - self.shrink
    }

    pub fn quad_norm(&self, x: &Vec64) -> f64 {
        (&self.rows * x).norm()
    }
}

pub fn lj_region(a_s: &Mat, delta: f64, log_nk: f64, c: f64) -> Result<LjRegion> {
    if delta < 0.0 {
        return Err(Error::InvalidArgument("delta must be nonnegative".into()));
    }
    let shrink = c * delta * log_nk;
    if shrink >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "infeasible shrink factor {shrink:.3} >= 1; delta too large"
        )));
    }
    Ok(LjRegion {
        rows: a_s.clone(),
        shrink,
        certificate: (a_s.nrows() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup_embed::LinfCoresetState;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn cfg() -> Config {
        Config::default()
    }

    fn e(d: usize, i: usize) -> Vec64 {
        Vec64::from_fn(d, |j, _| if j == i { 1.0 } else { 0.0 })
    }

    /// L·R + G with uniform integer entries, the standard synthetic
    /// low-rank-plus-noise instance.
    fn lr_plus_g(n: usize, d: usize, k: usize, coeff: i64, noise: i64, seed: u64) -> Mat {
        let mut rng = row_rng(seed, 1);
        let l = Mat::from_fn(n, k, |_, _| rng.random_range(-coeff..=coeff) as f64);
        let r = Mat::from_fn(k, d, |_, _| rng.random_range(-coeff..=coeff) as f64);
        let g = Mat::from_fn(n, d, |_, _| {
            if noise == 0 { 0.0 } else { rng.random_range(-noise..=noise) as f64 }
        });
        &l * &r + g
    }

    fn top_i_basis(a: &Mat, i: usize) -> Mat {
        let svd = a.clone().svd(false, true);
        let v_t = svd.v_t.unwrap();
        let mut q = Mat::zeros(a.ncols(), i);
        for j in 0..i {
            q.set_column(j, &v_t.row(j).transpose());
        }
        q
    }

    fn random_orthonormal(d: usize, k: usize, seed: u64) -> Mat {
        let mut rng = row_rng(seed, 9);
        let g = Mat::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        qr.q().columns(0, k).into_owned()
    }

    #[test]
    fn empty_state_scores_one_for_nonzero() {
        let s = RidgeCoresetState::new(3, 1, &cfg());
        assert_eq!(s.ridge_leverage(&e(3, 1)), 1.0);
        assert_eq!(s.ridge_leverage(&Vec64::zeros(3)), 0.0);
    }

    #[test]
    fn ridge_score_oracle_for_unit_basis_state() {
        // S = {e1, e2}, k = 1: lambda = 1, so 0.1 e1 scores
        // 0.01 / (1 + 1) = 0.005.
        let mut s = RidgeCoresetState::new(2, 1, &cfg());
        assert!(s.insert(&e(2, 0)));
        assert!(s.insert(&e(2, 1)));
        assert_relative_eq!(s.lambda(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.ridge_leverage(&(e(2, 0) * 0.1)), 0.005, epsilon = 1e-12);
    }

    #[test]
    fn zero_lambda_scores_match_gram_quadform() {
        // rank(A_S) <= k keeps lambda at 0; scores reduce to the plain
        // pseudoinverse quadratic form, and out-of-space rows score 1.
        let mut s = RidgeCoresetState::new(3, 2, &cfg());
        s.insert(&e(3, 0));
        s.insert(&e(3, 1));
        assert_eq!(s.lambda(), 0.0);
        assert_relative_eq!(s.ridge_leverage(&(e(3, 0) * 0.5)), 0.25, epsilon = 1e-12);
        assert_eq!(s.ridge_leverage(&e(3, 2)), 1.0);
    }

    #[test]
    fn insert_trace_keeps_spanning_rows_only() {
        let mut s = RidgeCoresetState::new(2, 1, &cfg());
        assert!(s.insert(&e(2, 0)));
        assert!(s.insert(&e(2, 1)));
        assert!(!s.insert(&(e(2, 0) * 0.1)));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn zero_rows_are_never_accepted() {
        let mut s = RidgeCoresetState::new(2, 1, &cfg());
        assert!(!s.insert(&Vec64::zeros(2)));
        s.insert(&e(2, 0));
        assert!(!s.insert(&Vec64::zeros(2)));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn lambda_positive_iff_rank_exceeds_k() {
        let mut s = RidgeCoresetState::new(4, 2, &cfg());
        s.insert(&e(4, 0));
        assert_eq!(s.lambda(), 0.0);
        s.insert(&e(4, 1));
        assert_eq!(s.lambda(), 0.0);
        s.insert(&e(4, 2));
        assert!(s.lambda() > 0.0);
    }

    #[test]
    fn rejected_rows_violate_no_tested_subspace() {
        // For every rejected row and candidate k-subspace V:
        // d(a,V)^2 < sum over S of d(s,V)^2. Candidates include random
        // subspaces and ones aligned with the rejected row.
        let d = 5;
        let k = 2;
        let mut rng = row_rng(7, 0);
        let mut s = RidgeCoresetState::new(d, k, &cfg());
        let mut rejected: Vec<Vec64> = Vec::new();
        for _ in 0..120 {
            let a = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            if !s.insert(&a) {
                rejected.push(a);
            }
        }
        assert!(!rejected.is_empty());
        let m = s.matrix();
        for (ri, a) in rejected.iter().enumerate() {
            for vseed in 0..30u64 {
                let v = if vseed == 0 {
                    // Adversarial candidate: span orthogonal-ish to a.
                    top_i_basis(&m, k)
                } else {
                    random_orthonormal(d, k, 100 * ri as u64 + vseed)
                };
                let da2 = (a - &v * (v.transpose() * a)).norm_squared();
                let sum_s2: f64 = (0..m.nrows())
                    .map(|i| {
                        let r = m.row(i).transpose();
                        (&r - &v * (v.transpose() * &r)).norm_squared()
                    })
                    .sum();
                assert!(
                    da2 <= sum_s2 + 1e-9 * (1.0 + sum_s2),
                    "rejected row {ri} beats the coreset on a subspace: {da2} > {sum_s2}"
                );
            }
        }
    }

    #[test]
    fn strong_coreset_sandwich_on_low_rank_instance() {
        let n = 1200;
        let d = 60;
        let k = 5;
        let a = lr_plus_g(n, d, k, 20, 40, 3);
        let mut s = RidgeCoresetState::new(d, k, &cfg());
        for i in 0..n {
            s.insert(&a.row(i).transpose());
        }
        assert!(s.len() <= 150, "coreset too large: {}", s.len());
        let m = s.matrix();
        let delta = (s.len() as f64).sqrt();
        // Ratio over top-i SVD subspaces of the full data.
        let mut worst: f64 = 1.0;
        for i in 1..=(2 * k) {
            let v = top_i_basis(&a, i);
            let full = max_subspace_distance(&a, &v);
            let core = max_subspace_distance(&m, &v);
            assert!(core <= full + 1e-9);
            if core > 0.0 {
                worst = worst.max(full / core);
            }
        }
        assert!(worst <= 1.5, "top-i ratio {worst} above 1.5");
        // Deterministic sqrt(|S|) upper side on random k-subspaces.
        for seed in 0..50 {
            let v = random_orthonormal(d, k, seed);
            let full = max_subspace_distance(&a, &v);
            let core = max_subspace_distance(&m, &v);
            assert!(full <= delta * core + 1e-9);
        }
    }

    #[test]
    fn fast_path_agrees_with_exact_on_most_rows() {
        let n = 800;
        let d = 20;
        let k = 3;
        let a = lr_plus_g(n, d, k, 10, 30, 11);
        let mut exact = RidgeCoresetState::new(d, k, &cfg());
        let mut fast = RidgeCoresetState::with_fast_path(d, k, n, 5, &cfg());
        let mut disagreements = 0;
        for i in 0..n {
            let row = a.row(i).transpose();
            let de = exact.insert(&row);
            let df = fast.insert(&row);
            if de != df {
                disagreements += 1;
            }
        }
        assert!(
            disagreements * 100 <= n,
            "fast path disagreed on {disagreements}/{n} rows"
        );
    }

    #[test]
    fn padded_coreset_bounds_condition_number() {
        let d = 8;
        let k = 3;
        let delta = 0.05;
        let (mut s, t) = padded_ridge_coreset(d, k, delta, &cfg()).unwrap();
        assert_eq!(s.len(), k + 1);
        assert_relative_eq!(t, 4.0, epsilon = 1e-12);
        let mut rng = row_rng(13, 0);
        let r_bound = 1.0;
        for _ in 0..400 {
            let mut a = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let norm = a.norm();
            if norm > r_bound {
                a /= norm;
            }
            s.insert(&a);
        }
        assert!(s.condition_number() <= r_bound * t / delta + 1e-6);
        let size_bound = {
            let n = 400.0f64;
            let log_term = (k as f64 * t * r_bound / delta * n).ln();
            8.0 * k as f64 * log_term.powi(3)
        };
        assert!((s.len() as f64) <= size_bound, "{} > {size_bound}", s.len());
    }

    #[test]
    fn solve_is_exact_on_rank_k_data() {
        let d = 6;
        let k = 2;
        let basis = random_orthonormal(d, k, 3);
        let mut rng = row_rng(19, 0);
        let mut s = RidgeCoresetState::new(d, k, &cfg());
        let mut rows = Vec::new();
        for _ in 0..80 {
            let c = Vec64::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let row = &basis * c;
            s.insert(&row);
            rows.push(row);
        }
        let sol = linf_lra_solve(&s, k).unwrap();
        assert!(sol.coreset_cost <= 1e-9);
        let a = stack_rows(&rows, d);
        assert!(max_subspace_distance(&a, &sol.basis) <= 1e-9);
    }

    #[test]
    fn solve_with_k_zero_reports_max_row_norm() {
        let mut s = RidgeCoresetState::new(3, 1, &cfg());
        s.insert(&(e(3, 0) * 2.0));
        s.insert(&(e(3, 1) * 5.0));
        let sol = linf_lra_solve(&s, 0).unwrap();
        assert_eq!(sol.basis.ncols(), 0);
        assert_relative_eq!(sol.coreset_cost, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_certificate_bounds_full_data_cost() {
        let a = lr_plus_g(600, 24, 4, 15, 50, 23);
        let mut s = RidgeCoresetState::new(24, 4, &cfg());
        for i in 0..a.nrows() {
            s.insert(&a.row(i).transpose());
        }
        let sol = linf_lra_solve(&s, 4).unwrap();
        let full = max_subspace_distance(&a, &sol.basis);
        assert!(full <= sol.certificate * sol.coreset_cost + 1e-9);
    }

    #[test]
    fn lp_approx_recovers_exact_rank_k() {
        let d = 8;
        let k = 3;
        let basis = random_orthonormal(d, k, 29);
        let mut rng = row_rng(31, 0);
        let a = Mat::from_fn(150, d, |_, _| StandardNormal.sample(&mut rng));
        let a = a * &basis * basis.transpose();
        let r = lp_subspace_approx(&a, k, 1.5, 9, &cfg()).unwrap();
        assert!(max_subspace_distance(&a, &r.basis) <= 1e-8);
        assert!(r.scales.iter().all(|s| *s >= 1.0 && s.fract() == 0.0));
    }

    #[test]
    fn lp_approx_large_p_degenerates_to_plain_coreset() {
        // At p = 64 the integer scales land in {1, 2} with
        // P[scale = 1] = P[E >= 1] = 1/e; the output stays comparable to
        // the unscaled pipeline.
        let a = lr_plus_g(500, 16, 3, 10, 25, 37);
        let r = lp_subspace_approx(&a, 3, 64.0, 2, &cfg()).unwrap();
        assert!(r.scales.iter().all(|&s| s == 1.0 || s == 2.0));
        let ones = r.scales.iter().filter(|&&s| s == 1.0).count() as f64;
        let n = r.scales.len() as f64;
        let expect = n * (-1.0f64).exp();
        let sigma = (n * (-1.0f64).exp() * (1.0 - (-1.0f64).exp())).sqrt();
        assert!((ones - expect).abs() <= 3.0 * sigma, "ones {ones} vs {expect}");
        let plain = {
            let mut s = RidgeCoresetState::new(16, 3, &cfg());
            for i in 0..a.nrows() {
                s.insert(&a.row(i).transpose());
            }
            linf_lra_solve(&s, 3).unwrap()
        };
        let cost_scaled = max_subspace_distance(&a, &r.basis);
        let cost_plain = max_subspace_distance(&a, &plain.basis);
        assert!(cost_scaled <= 4.0 * cost_plain + 1e-9);
    }

    #[test]
    fn lp_approx_near_svd_optimal_at_p2() {
        let n = 800;
        let d = 30;
        let k = 4;
        let a = lr_plus_g(n, d, k, 12, 30, 41);
        let v_opt = top_i_basis(&a, k);
        let opt = crate::dedup_embed::rank_k_cost(&a, &v_opt, 2.0);
        let mut ok = 0;
        for seed in 0..10 {
            let r = lp_subspace_approx(&a, k, 2.0, seed, &cfg()).unwrap();
            let cost = crate::dedup_embed::rank_k_cost(&a, &r.basis, 2.0);
            if cost <= 25.0 * opt {
                ok += 1;
            }
        }
        assert!(ok >= 8, "only {ok}/10 seeds within 25x of optimal");
    }

    #[test]
    fn outer_radius_zero_for_collinear_points() {
        let pts = Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let (radius, _, _) = outer_radius(&pts, 1, &cfg()).unwrap();
        assert!(radius <= 1e-9);
    }

    #[test]
    fn outer_radius_single_point_is_zero() {
        let pts = Mat::from_row_slice(1, 3, &[4.0, -1.0, 2.0]);
        let (radius, cert, state) = outer_radius(&pts, 2, &cfg()).unwrap();
        assert_eq!(radius, 0.0);
        assert_eq!(cert, 1.0);
        assert!(state.is_empty());
    }

    #[test]
    fn outer_radius_bounded_by_certificate_times_noise() {
        let d = 10;
        let k = 2;
        let flat = random_orthonormal(d, k, 47);
        let eta = 0.05;
        let mut rng = row_rng(53, 0);
        let pts = Mat::from_fn(300, d, |i, j| {
            let _ = (i, j);
            0.0
        });
        let mut pts = pts;
        for i in 0..300 {
            let c = Vec64::from_fn(k, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                3.0 * z
            });
            let noise = Vec64::from_fn(d, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let noise = &noise / noise.norm() * (eta * rng.random::<f64>());
            let row = &flat * c + noise;
            pts.set_row(i, &row.transpose());
        }
        let (radius, cert, _) = outer_radius(&pts, k, &cfg()).unwrap();
        // Centering adds at most one noise radius: opt <= 2 eta.
        assert!(radius <= cert * 2.0 * eta + 1e-9, "radius {radius} cert {cert}");
    }

    #[test]
    fn width_examples() {
        let mut s = RidgeCoresetState::new(2, 1, &cfg());
        // Centered data for rows ±e1: b rows are 0 and -2 e1.
        s.insert(&(e(2, 0) * -2.0));
        let w = width_estimate(&s, &e(2, 0));
        assert!(w > 0.0 && w <= 2.0);
        assert_eq!(width_estimate(&s, &e(2, 1)), 0.0);
    }

    #[test]
    fn width_sandwich_on_low_rank_data() {
        let n = 400;
        let d = 12;
        let k = 3;
        let a = lr_plus_g(n, d, k, 8, 2, 59);
        let a1 = a.row(0).transpose();
        let mut state = RidgeCoresetState::new(d, k, &cfg());
        let mut b = Mat::zeros(n, d);
        for i in 0..n {
            let row = a.row(i).transpose() - &a1;
            state.insert(&row);
            b.set_row(i, &row.transpose());
        }
        let m = state.matrix();
        let slack = state.lambda().sqrt();
        let scale = 2.0 * (state.len() as f64).sqrt();
        for seed in 0..100u64 {
            // Directions in the coreset rowspan.
            let mut rng = row_rng(seed, 61);
            let coef = Vec64::from_fn(m.nrows(), |_, _| StandardNormal.sample(&mut rng));
            let mut x = m.transpose() * coef;
            if x.norm() == 0.0 {
                continue;
            }
            x /= x.norm();
            let wp = width_estimate(&state, &x);
            let projections = &b * &x;
            let w = projections.max() - projections.min();
            assert!(wp <= w + 1e-9, "w' {wp} exceeds w {w}");
            // Rejection rule consequence: ||Bx||_inf^2 <= ||B_S x||^2 + lambda.
            assert!(
                wp >= w / scale - slack,
                "w' {wp} below floor (w {w}, scale {scale}, slack {slack})"
            );
        }
    }

    #[test]
    fn lj_region_zero_delta_is_unit_ellipsoid() {
        let m = Mat::identity(3, 3);
        let r = lj_region(&m, 0.0, 5.0, 1.0).unwrap();
        assert_eq!(r.shrink, 0.0);
        assert!(r.contains(&(e(3, 0) * 0.99)));
        assert!(!r.contains(&(e(3, 0) * 1.01)));
    }

    #[test]
    fn lj_region_rejects_oversized_delta() {
        let m = Mat::identity(2, 2);
        assert!(lj_region(&m, 0.5, 10.0, 1.0).is_err());
    }

    #[test]
    fn lj_region_containments_by_rejection_sampling() {
        // Coreset from the quadform-1 rule gives the exact inequality
        // ||Ax||_inf <= ||A_S x||_2, so both containments are
        // deterministic; rejection sampling certifies them.
        let d = 4;
        let mut rng = row_rng(67, 0);
        let rows: Vec<Vec64> = (0..300)
            .map(|_| {
                let v = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                &v / v.norm() * (0.2 + 0.8 * rng.random::<f64>())
            })
            .collect();
        let mut coreset = LinfCoresetState::new(d, &cfg());
        for r in &rows {
            coreset.insert(r);
        }
        let a = stack_rows(&rows, d);
        let a_s = coreset.matrix();
        let region = lj_region(&a_s, 0.01, 4.0, 1.0).unwrap();
        let mut hits_e = 0;
        let mut hits_k = 0;
        for t in 0..10_000u64 {
            let mut rng = row_rng(t, 71);
            let g = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let radius: f64 = rng.random::<f64>().powf(1.0 / d as f64);
            let x = &g / g.norm() * radius;
            if region.contains(&x) {
                hits_e += 1;
                assert!((&a * &x).amax() <= 1.0 + 1e-9, "E' point escapes K");
            }
            if (&a * &x).amax() <= 1.0 {
                hits_k += 1;
                assert!(
                    region.quad_norm(&x) <= region.certificate + 1e-9,
                    "K point escapes the scaled ellipsoid"
                );
            }
        }
        assert!(hits_e > 100, "sampler never landed in E'");
        assert!(hits_k > 100, "sampler never landed in K");
    }

    #[test]
    fn linf_ax_estimation_lemma_exact() {
        // ||A_S x||_inf <= ||Ax||_inf <= ||A_S x||_2 for the quadform-1
        // coreset, deterministically.
        let d = 5;
        let mut rng = row_rng(73, 0);
        let rows: Vec<Vec64> =
            (0..250).map(|_| Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng))).collect();
        let mut coreset = LinfCoresetState::new(d, &cfg());
        for r in &rows {
            coreset.insert(r);
        }
        let a = stack_rows(&rows, d);
        let a_s = coreset.matrix();
        for _ in 0..500 {
            let x = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let full = (&a * &x).amax();
            let core_inf = (&a_s * &x).amax();
            let core_two = (&a_s * &x).norm();
            assert!(core_inf <= full + 1e-9);
            assert!(full <= core_two + 1e-9);
        }
    }

    #[test]
    fn ridge_sum_within_calibrated_bound() {
        // Sum of online rank-k ridge scores of the coreset rows.
        for seed in 0..10u64 {
            let a = lr_plus_g(500, 16, 3, 10, 30, 100 + seed);
            let mut s = RidgeCoresetState::new(16, 3, &cfg());
            for i in 0..a.nrows() {
                s.insert(&a.row(i).transpose());
            }
            let (sum, kappa) = online_ridge_sum(s.rows(), 3, &cfg());
            let bound = 50.0 * 3.0 * (3.0 * kappa).ln().max(1.0).powi(2);
            assert!(sum <= bound, "seed {seed}: ridge sum {sum} > {bound}");
        }
    }

    #[test]
    fn exponential_net_lemma_failure_rate() {
        // For subspaces built from coreset rows, the exponentially scaled
        // max distance undershoots the lp norm of the distance vector by
        // more than the anchor factor with probability <= e^{-4} < 2%.
        let p = 2.0;
        let t = 4.0f64;
        let anchor = t.powf(1.0 / p);
        let a = lr_plus_g(200, 8, 3, 6, 20, 83);
        let mut s = RidgeCoresetState::new(8, 3, &cfg());
        for i in 0..a.nrows() {
            s.insert(&a.row(i).transpose());
        }
        let m = s.matrix();
        let mut trials = 0;
        let mut failures = 0;
        for seed in 0..400u64 {
            let v = {
                // Span of 3 random coreset rows.
                let mut rng = row_rng(seed, 89);
                let picks: Vec<usize> =
                    (0..3).map(|_| rng.random_range(0..m.nrows())).collect();
                let rows: Vec<Vec64> = picks.iter().map(|&i| m.row(i).transpose()).collect();
                let st = stack_rows(&rows, 8);
                let svd = st.svd(false, true);
                let v_t = svd.v_t.unwrap();
                let r = svd.singular_values.iter().filter(|&&x| x > 1e-9).count();
                let mut q = Mat::zeros(8, r);
                for j in 0..r {
                    q.set_column(j, &v_t.row(j).transpose());
                }
                q
            };
            let dists: Vec<f64> = (0..a.nrows())
                .map(|i| {
                    let r = a.row(i).transpose();
                    (&r - &v * (v.transpose() * &r)).norm()
                })
                .collect();
            let lp_norm = dists.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p);
            if lp_norm == 0.0 {
                continue;
            }
            let mut rng = row_rng(seed, 97);
            let scaled_max = dists
                .iter()
                .map(|&x| {
                    let mut u: f64 = rng.random();
                    while u <= 0.0 {
                        u = rng.random();
                    }
                    x * (-u.ln()).powf(-1.0 / p)
                })
                .fold(0.0, f64::max);
            trials += 1;
            if scaled_max < lp_norm / anchor {
                failures += 1;
            }
        }
        let budget = 0.02 * trials as f64 + 3.0 * (0.02 * trials as f64).sqrt();
        assert!(
            (failures as f64) <= budget,
            "{failures}/{trials} net-lemma failures (budget {budget:.1})"
        );
    }
}
