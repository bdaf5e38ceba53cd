//! Offline ℓp sensitivities and sensitivity sampling.
//!
//! The sensitivity of row i is tau_i = max_x |⟨a_i,x⟩|^p / ‖Ax‖_p^p,
//! computed through the reciprocal problem min ‖Ax‖_p subject to
//! ⟨a_i,x⟩ = 1 (so tau = 1/value^p, capped at 1), exactly via the
//! pseudoinverse quadratic form at p = 2. Sampling keeps row i with
//! probability p_i proportional to an overestimate v_i >= beta tau_i and
//! rescales kept rows by p_i^{-1/p}.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hashing::row_rng;
use crate::linalg::leverage_scores;
use crate::solvers::{min_lp_subject_linear, SolveStatus};
use crate::{Mat, Vec64};
use rand::Rng;

/// Per-row sensitivity overestimates: v_i >= beta * tau_i with v in [0,1].
/// `beta` is the caller's guarantee, not recomputed here.
#[derive(Debug, Clone)]
pub struct SensitivityVector {
    pub v: Vec<f64>,
    pub beta: f64,
}

impl SensitivityVector {
    pub fn new(v: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("beta must be in (0,1], got {beta}")));
        }
        if v.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidArgument("sensitivities must lie in [0,1]".into()));
        }
        Ok(SensitivityVector { v, beta })
    }

    /// Exact sensitivities (beta = 1).
    pub fn exact(a: &Mat, p: f64, cfg: &Config) -> Result<Self> {
        Ok(SensitivityVector { v: lp_sensitivities(a, p, cfg)?, beta: 1.0 })
    }
}

/// One sampled row: the original (unscaled) row, its inclusion probability
/// and the reweighting factor p_i^{-1/p} applied when the coreset is
/// materialized as a matrix.
#[derive(Debug, Clone)]
pub struct CoresetEntry {
    pub row: Vec64,
    pub tag: Option<u64>,
    pub probability: f64,
    pub weight: f64,
}

/// Rows kept by a sampling pass, with their weights. The scaled matrix
/// (weight * row, stacked) is the subspace embedding.
#[derive(Debug, Clone)]
pub struct WeightedCoreset {
    pub entries: Vec<CoresetEntry>,
    pub p: f64,
    pub seed: u64,
}

impl WeightedCoreset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stacked weighted rows; `d` disambiguates the empty coreset.
    pub fn scaled_matrix(&self, d: usize) -> Mat {
        let mut m = Mat::zeros(self.entries.len(), d);
        for (i, e) in self.entries.iter().enumerate() {
            m.set_row(i, &(e.row.transpose() * e.weight));
        }
        m
    }

    /// Stacked original rows without weights.
    pub fn unscaled_matrix(&self, d: usize) -> Mat {
        let mut m = Mat::zeros(self.entries.len(), d);
        for (i, e) in self.entries.iter().enumerate() {
            m.set_row(i, &e.row.transpose());
        }
        m
    }
}

/// Sensitivity of row `i` of `a` under p. Zero rows have sensitivity 0.
pub fn lp_sensitivity(a: &Mat, i: usize, p: f64, cfg: &Config) -> Result<f64> {
    let row = a.row(i).transpose();
    if row.norm() == 0.0 {
        return Ok(0.0);
    }
    if p == 2.0 {
        let tau = crate::linalg::pinv_quadform(a, &row, 0.0, cfg.svd_cutoff);
        return Ok(tau.clamp(0.0, 1.0));
    }
    let r = min_lp_subject_linear(a, &row, p, cfg.irls_rel_acc, cfg.svd_cutoff);
    match r.status {
        SolveStatus::Optimal | SolveStatus::ToleranceLimited => {
            if r.value == 0.0 {
                // Unreachable for a row of A (a_i is in the rowspace), kept
                // as the documented fallback.
                return Ok(1.0);
            }
            Ok((1.0 / r.value.powf(p)).clamp(0.0, 1.0))
        }
        _ => Err(Error::NoConvergence(format!("sensitivity solve failed for row {i}"))),
    }
}

/// All row sensitivities. p = 2 uses one SVD for every row.
pub fn lp_sensitivities(a: &Mat, p: f64, cfg: &Config) -> Result<Vec<f64>> {
    if p == 2.0 {
        return Ok(leverage_scores(a, cfg.svd_cutoff));
    }
    (0..a.nrows()).map(|i| lp_sensitivity(a, i, p, cfg)).collect()
}

/// Inclusion probabilities of sensitivity sampling:
/// p_i = min(1, C1 beta^{-1} v_i (C2 d log(d/eps) + log(1/delta)) / eps^2).
pub fn sampling_probabilities(
    v: &SensitivityVector,
    d: usize,
    eps: f64,
    delta: f64,
    cfg: &Config,
) -> Vec<f64> {
    let oversample = cfg.c1 / v.beta
        * (cfg.c2 * d as f64 * (d as f64 / eps).ln() + (1.0 / delta).ln())
        / (eps * eps);
    v.v.iter().map(|&vi| (oversample * vi).min(1.0)).collect()
}

/// Independent Bernoulli sampling at the theorem rates; kept rows carry
/// weight p_i^{-1/p}. Rows with p_i = 0 (zero sensitivity) are never kept.
pub fn sensitivity_sample(
    a: &Mat,
    v: &SensitivityVector,
    eps: f64,
    delta: f64,
    p: f64,
    seed: u64,
    cfg: &Config,
) -> WeightedCoreset {
    let d = a.ncols();
    let probs = sampling_probabilities(v, d, eps, delta, cfg);
    let mut entries = Vec::new();
    for (i, &pi) in probs.iter().enumerate() {
        if pi <= 0.0 {
            continue;
        }
        let mut rng = row_rng(seed, i as u64);
        if rng.random::<f64>() < pi {
            entries.push(CoresetEntry {
                row: a.row(i).transpose(),
                tag: None,
                probability: pi,
                weight: pi.powf(-1.0 / p),
            });
        }
    }
    WeightedCoreset { entries, p, seed }
}

/// Diagnostic: (sum of exact sensitivities, the d^{max(p/2,1)} bound).
pub fn sensitivity_sum_bound_check(a: &Mat, p: f64, cfg: &Config) -> Result<(f64, f64)> {
    let sum = lp_sensitivities(a, p, cfg)?.iter().sum();
    let bound = (a.ncols() as f64).powf((p / 2.0).max(1.0));
    Ok((sum, bound))
}
