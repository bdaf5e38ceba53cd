//! ℓp-to-ℓ∞ scaling matrices.
//!
//! Multiplying row i by D_ii^{1/p} for suitable random D turns an ℓp
//! norm question into an ℓ∞ one: with exponential scales the maximum of
//! the scaled coordinates reproduces the ℓp norm in distribution
//! (min-stability), and the hash variant derives D_ii from the row's tag
//! so duplicates share a scale while using bounded independence.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hashing::{row_rng, tag_scale, HashFamily};
use crate::linalg::lp_norm;
use crate::{Mat, Vec64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    Exponential,
    Hash,
}

/// Per-row scales. Exponential mode stores D_ii = E_i^{-1/p} (the power
/// already applied, one scale per stream index); hash mode stores the
/// power-of-two g(t_i) in {1, 2, ..., n_cap} and applies the 1/p power
/// at use. Duplicate tags share a scale in hash mode.
#[derive(Debug, Clone)]
pub struct ScalingAssignment {
    pub mode: ScalingMode,
    pub p: f64,
    pub seed: u64,
    scales: Vec<f64>,
    hash: Option<TagScaler>,
}

/// Evaluates the hash-mode scale for tags that were not in the original
/// slice (new tags seen mid-stream).
#[derive(Debug, Clone)]
struct TagScaler {
    family: HashFamily,
    domain: u64,
    n_cap: u64,
}

impl ScalingAssignment {
    /// Stored scale for stream index i (exp: E_i^{-1/p}; hash: g(t_i)).
    pub fn scale(&self, i: usize) -> f64 {
        self.scales[i]
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Factor to multiply row i with so that the max coordinate of the
    /// scaled image plays the role of the ℓp norm.
    pub fn row_multiplier(&self, i: usize) -> f64 {
        match self.mode {
            ScalingMode::Exponential => self.scales[i],
            ScalingMode::Hash => self.scales[i].powf(1.0 / self.p),
        }
    }

    /// Hash-mode multiplier for an arbitrary tag, g(t)^{1/p}.
    pub fn multiplier_for_tag(&self, tag: u64) -> Result<f64> {
        let h = self
            .hash
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("tag lookup requires hash mode".into()))?;
        let g = tag_scale(&h.family, tag, h.domain, h.n_cap) as f64;
        Ok(g.powf(1.0 / self.p))
    }

    /// All-ones assignment (diagnostics and baselines).
    pub fn uniform(n: usize, p: f64) -> Self {
        ScalingAssignment {
            mode: ScalingMode::Exponential,
            p,
            seed: 0,
            scales: vec![1.0; n],
            hash: None,
        }
    }
}

/// Independent scales D_ii = E_i^{-1/p} with E_i standard exponential,
/// drawn by inverse CDF from per-index counter randomness.
pub fn exp_scaling(n: usize, p: f64, seed: u64) -> ScalingAssignment {
    let scales = (0..n)
        .map(|i| {
            let mut rng = row_rng(seed, i as u64);
            let mut u: f64 = rng.random();
            while u <= 0.0 {
                u = rng.random();
            }
            (-u.ln()).powf(-1.0 / p)
        })
        .collect();
    ScalingAssignment { mode: ScalingMode::Exponential, p, seed, scales, hash: None }
}

/// Tag-keyed power-of-two scales g(t) = min(2^floor(log2(N/h(t))), n)
/// with h drawn k-wise independent. `domain` = N and `n_cap` = n must be
/// powers of two with N >= n.
pub fn hash_scaling(
    tags: &[u64],
    p: f64,
    independence: usize,
    domain: u64,
    n_cap: u64,
    seed: u64,
) -> Result<ScalingAssignment> {
    if !domain.is_power_of_two() || !n_cap.is_power_of_two() || domain < n_cap {
        return Err(Error::InvalidArgument(format!(
            "need powers of two with domain >= cap, got domain {domain}, cap {n_cap}"
        )));
    }
    if independence == 0 {
        return Err(Error::InvalidArgument("independence must be at least 1".into()));
    }
    let family = HashFamily::new(independence, seed);
    let scales = tags
        .iter()
        .map(|&t| tag_scale(&family, t, domain, n_cap) as f64)
        .collect();
    Ok(ScalingAssignment {
        mode: ScalingMode::Hash,
        p,
        seed,
        scales,
        hash: Some(TagScaler { family, domain, n_cap }),
    })
}

/// Rows of `a` multiplied by their assignment factors.
pub fn scaled_matrix(a: &Mat, assignment: &ScalingAssignment) -> Result<Mat> {
    if assignment.len() != a.nrows() {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} rows, matrix has {}",
            assignment.len(),
            a.nrows()
        )));
    }
    let mut out = a.clone();
    for i in 0..a.nrows() {
        let m = assignment.row_multiplier(i);
        let row = out.row(i) * m;
        out.set_row(i, &row);
    }
    Ok(out)
}

/// Extremes of ‖D^{1/p} A x‖_∞ / ‖Ax‖_p over probe directions (the d
/// basis vectors plus `probes` Gaussian draws). Directions where Ax = 0
/// are skipped.
pub fn embed_distortion_probe(
    a: &Mat,
    assignment: &ScalingAssignment,
    probes: usize,
    seed: u64,
    _cfg: &Config,
) -> Result<(f64, f64)> {
    let scaled = scaled_matrix(a, assignment)?;
    let d = a.ncols();
    let p = assignment.p;
    let mut rng = row_rng(seed, u64::MAX - 1);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut consider = |x: &Vec64| {
        let den = lp_norm(&(a * x), p);
        if den == 0.0 {
            return;
        }
        let num = (&scaled * x).amax();
        let r = num / den;
        lo = lo.min(r);
        hi = hi.max(r);
    };
    for j in 0..d {
        let e = Vec64::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 });
        consider(&e);
    }
    for _ in 0..probes {
        let x = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        consider(&x);
    }
    if !lo.is_finite() {
        return Err(Error::InvalidArgument("every probe direction had Ax = 0".into()));
    }
    Ok((lo, hi))
}
