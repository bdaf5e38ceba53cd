//! Global configuration: accuracy targets and the oversampling constants
//! the theory leaves unnamed.
//!
//! Theorem statements only ever say "for a large enough constant"; every
//! such constant is surfaced here with a default calibrated on the test
//! corpus, so reproducing or tightening a run never means editing code.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    /// Norm exponent, p >= 1.
    pub p: f64,
    /// Target relative accuracy of embeddings, in (0,1).
    pub eps: f64,
    /// Failure probability budget, in (0,1).
    pub delta: f64,

    /// Generic oversampling constant C (stream samplers).
    pub c: f64,
    /// Offline/online sampling constant C1 (outer factor).
    pub c1: f64,
    /// Offline/online sampling constant C2 (inner log factor). C1 and C2
    /// need not differ and do not depend on p.
    pub c2: f64,

    /// LP optimality tolerance (duality gap certificate).
    pub lp_tol: f64,
    /// Relative accuracy of IRLS p-norm minimization.
    pub irls_rel_acc: f64,
    /// Relative singular-value cutoff: sigma <= cutoff * sigma_max is rank zero.
    pub svd_cutoff: f64,

    /// Calibrated constant absorbing the O(.) in sum-of-sensitivity bounds.
    pub sum_bound_const: f64,
    /// Oversampling constant used only inside important-prefix detection
    /// (the acceptance defaults c1 = c2 = 40 make every sampling
    /// probability 1 at desk scale, which would leave no gaps to test).
    pub partition_c: f64,

    /// Single scalar standing in for the d^O(p) polylog inflation applied
    /// to the measured score when converting it to a sampling rate in the
    /// one-pass dedup embedding. Calibrated so the inflated score
    /// dominates exact sensitivities on d <= 8 instances with margin.
    pub sensitivity_inflation: f64,
    /// Alternate tag-aware sampler rate: alpha = alternate_alpha_c * d ln(n) / eps^2.
    pub alternate_alpha_c: f64,

    /// Recursion bottoms out when n <= recursive_base_c * d^2 (at least 32).
    pub recursive_base_c: f64,
    /// Per-level oversampling constant of the recursive/multipass sampler.
    pub recursive_sample_c: f64,
    /// With-replacement draw budget per refinement pass is
    /// multipass_budget_c * d * ln(d+1) (final pass divides by eps^2).
    pub multipass_budget_c: f64,

    /// Independent L0 samplers kept by the bounded-entries structure.
    pub bounded_samplers: usize,
    /// Switch threshold L of the adversarially robust stream.
    pub robust_switch_factor: f64,
    /// Gaussian sketch width for Frobenius LRA: d' = ceil(frob_sketch_c * k / eps^2).
    pub frob_sketch_c: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            p: 2.0,
            eps: 0.5,
            delta: 0.05,
            c: 1.0,
            c1: 40.0,
            c2: 40.0,
            lp_tol: 1e-8,
            irls_rel_acc: 1e-4,
            svd_cutoff: 1e-10,
            sum_bound_const: 50.0,
            partition_c: 1.0,
            sensitivity_inflation: 64.0,
            alternate_alpha_c: 8.0,
            recursive_base_c: 4.0,
            recursive_sample_c: 6.0,
            multipass_budget_c: 60.0,
            bounded_samplers: 800,
            robust_switch_factor: 8.0,
            frob_sketch_c: 4.0,
        }
    }
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Checks the documented invariants: eps, delta in (0,1), p >= 1, all
    /// constants strictly positive.
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("c", self.c),
            ("c1", self.c1),
            ("c2", self.c2),
            ("lp_tol", self.lp_tol),
            ("irls_rel_acc", self.irls_rel_acc),
            ("svd_cutoff", self.svd_cutoff),
            ("sum_bound_const", self.sum_bound_const),
            ("partition_c", self.partition_c),
            ("sensitivity_inflation", self.sensitivity_inflation),
            ("alternate_alpha_c", self.alternate_alpha_c),
            ("recursive_base_c", self.recursive_base_c),
            ("recursive_sample_c", self.recursive_sample_c),
            ("multipass_budget_c", self.multipass_budget_c),
            ("robust_switch_factor", self.robust_switch_factor),
            ("frob_sketch_c", self.frob_sketch_c),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidArgument(format!("p must be >= 1, got {}", self.p)));
        }
        if self.bounded_samplers == 0 {
            return Err(Error::InvalidArgument("bounded_samplers must be positive".into()));
        }
        Ok(())
    }

    /// Recursion base threshold: streams of at most this many rows are
    /// kept verbatim by the recursive sampler.
    pub fn recursive_base(&self, d: usize) -> usize {
        ((self.recursive_base_c * (d * d) as f64) as usize).max(32)
    }
}
