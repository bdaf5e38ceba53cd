//! Online ℓp sensitivities, online sampling and prefix diagnostics.
//!
//! The online sensitivity of row i measures it against the prefix
//! A_{1:i} (including the row itself), so it never decreases when later
//! rows are ignored: it dominates the offline sensitivity pointwise.
//! Online sampling keeps row i with probability proportional to that
//! value and every prefix of the output embeds the corresponding input
//! prefix. This module is an analysis layer and may hold the whole
//! prefix in memory; the streaming-lean algorithms live in `dedup_embed`.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hashing::row_rng;
use crate::linalg::{lp_norm, min_generalized_eig, PinvGram};
use crate::sensitivity::{CoresetEntry, WeightedCoreset};
use crate::solvers::{min_lp_subject_linear, SolveStatus};
use crate::{Mat, Vec64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Mutable scan over an insertion-only row stream. Tracks the running
/// Gram matrix, the condition-number ingredients, and (for p other than
/// 2) the stored prefix rows needed by the ℓp solver.
#[derive(Debug, Clone)]
pub struct OnlinePrefixState {
    p: f64,
    d: usize,
    count: usize,
    gram: Mat,
    rows: Vec<Vec64>,
    sigma_max: f64,
    min_sigma_min: Option<f64>,
    sum_tau: f64,
    cfg: Config,
}

impl OnlinePrefixState {
    pub fn new(d: usize, p: f64, cfg: &Config) -> Self {
        OnlinePrefixState {
            p,
            d,
            count: 0,
            gram: Mat::zeros(d, d),
            rows: Vec::new(),
            sigma_max: 0.0,
            min_sigma_min: None,
            sum_tau: 0.0,
            cfg: cfg.clone(),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sensitivity_sum(&self) -> f64 {
        self.sum_tau
    }

    /// ‖A_{1:i}‖ / min over processed prefixes of the smallest nonzero
    /// singular value. 1 before any nonzero row arrives.
    pub fn condition_number(&self) -> f64 {
        match self.min_sigma_min {
            Some(s) => self.sigma_max / s,
            None => 1.0,
        }
    }

    /// Absorbs row i and returns its online sensitivity
    /// max_x |⟨a,x⟩|^p / ‖A_{1:i}x‖_p^p with the prefix including `a`.
    pub fn push(&mut self, a: &Vec64) -> Result<f64> {
        if a.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "row has {} entries, state expects {}",
                a.len(),
                self.d
            )));
        }
        self.count += 1;
        self.gram += a * a.transpose();
        if self.p != 2.0 {
            self.rows.push(a.clone());
        }
        let pg = PinvGram::from_gram(&self.gram, self.cfg.svd_cutoff);
        self.sigma_max = pg.sigma_max();
        if let Some(s) = pg.sigma_min_nonzero() {
            self.min_sigma_min = Some(match self.min_sigma_min {
                Some(cur) => cur.min(s),
                None => s,
            });
        }
        if a.norm() == 0.0 {
            return Ok(0.0);
        }
        let tau = if self.p == 2.0 {
            pg.quadform(a, 0.0).clamp(0.0, 1.0)
        } else {
            let m = crate::linalg::stack_rows(&self.rows, self.d);
            let r = min_lp_subject_linear(&m, a, self.p, self.cfg.irls_rel_acc, self.cfg.svd_cutoff);
            match r.status {
                SolveStatus::Optimal | SolveStatus::ToleranceLimited => {
                    if r.value == 0.0 {
                        1.0
                    } else {
                        (1.0 / r.value.powf(self.p)).clamp(0.0, 1.0)
                    }
                }
                _ => {
                    return Err(Error::NoConvergence(format!(
                        "online sensitivity solve failed at row {}",
                        self.count
                    )))
                }
            }
        };
        self.sum_tau += tau;
        Ok(tau)
    }
}

/// Spec-facing form of [`OnlinePrefixState::push`]: `state` covers rows
/// 1..i-1 and `a` becomes row i.
pub fn online_sensitivity(state: &mut OnlinePrefixState, a: &Vec64) -> Result<f64> {
    state.push(a)
}

/// Everything a single online sampling pass produced, for diagnostics:
/// the coreset, the 1-based prefix lengths at which the sample set
/// changed, and the sensitivity-sum and condition-number tallies.
#[derive(Debug, Clone)]
pub struct OnlineSampleTrace {
    pub coreset: WeightedCoreset,
    pub change_points: Vec<usize>,
    pub sensitivity_sum: f64,
    pub kappa: f64,
}

/// One pass of online sensitivity sampling at rates
/// p_i = min(1, C1 tau_i (C2 d log d + log n) / eps^2), with the full
/// trace retained. `c1` overrides the oversampling constant (the prefix
/// partition runs at its own constant).
fn sample_stream_trace(
    rows: &[Vec64],
    p: f64,
    eps: f64,
    seed: u64,
    c1: f64,
    cfg: &Config,
) -> Result<OnlineSampleTrace> {
    let n = rows.len();
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut state = OnlinePrefixState::new(d, p, cfg);
    let factor = (cfg.c2 * d as f64 * (d as f64).ln() + (n.max(1) as f64).ln()) / (eps * eps);
    let mut entries = Vec::new();
    let mut change_points = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        let tau = state.push(a)?;
        let pi = (c1 * tau * factor).min(1.0);
        if pi <= 0.0 {
            continue;
        }
        let mut rng = row_rng(seed, i as u64);
        if rng.random::<f64>() < pi {
            entries.push(CoresetEntry {
                row: a.clone(),
                tag: None,
                probability: pi,
                weight: pi.powf(-1.0 / p),
            });
            change_points.push(i + 1);
        }
    }
    Ok(OnlineSampleTrace {
        coreset: WeightedCoreset { entries, p, seed },
        change_points,
        sensitivity_sum: state.sensitivity_sum(),
        kappa: state.condition_number(),
    })
}

/// Online sensitivity sampling over an insertion-only stream; every
/// prefix of the output embeds the corresponding input prefix with the
/// usual probability guarantee.
pub fn online_sample_stream(
    rows: &[Vec64],
    p: f64,
    eps: f64,
    seed: u64,
    cfg: &Config,
) -> Result<WeightedCoreset> {
    Ok(sample_stream_trace(rows, p, eps, seed, cfg.c1, cfg)?.coreset)
}

/// κ^OL: final spectral norm over the minimum nonzero smallest singular
/// value across prefixes. Exact per-prefix computation.
pub fn online_condition_number(a: &Mat, cfg: &Config) -> Result<f64> {
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("condition number of the zero matrix".into()));
    }
    let mut state = OnlinePrefixState::new(a.ncols(), 2.0, cfg);
    for i in 0..a.nrows() {
        state.push(&a.row(i).transpose())?;
    }
    Ok(state.condition_number())
}

/// 1-based prefix lengths at which an online sampling pass at eps = 1/2
/// changed its sample set, plus n. Between consecutive returned lengths
/// the prefix norm can shrink by at most a factor 4 in any direction.
pub fn important_prefixes(rows: &[Vec64], p: f64, seed: u64, cfg: &Config) -> Result<Vec<usize>> {
    let trace = sample_stream_trace(rows, p, 0.5, seed, cfg.partition_c, cfg)?;
    let mut prefixes = trace.change_points;
    if prefixes.last() != Some(&rows.len()) && !rows.is_empty() {
        prefixes.push(rows.len());
    }
    Ok(prefixes)
}

/// Worst norm ratio ‖A_{1:i_j}x‖_p / ‖A_{1:i}x‖_p over all gap positions
/// i_j < i < i_{j+1} of the partition. Exact (generalized eigenvalues)
/// at p = 2, probe-based otherwise; 1.0 when there are no gaps.
pub fn quarter_property_ratio(
    rows: &[Vec64],
    prefixes: &[usize],
    p: f64,
    probes: usize,
    seed: u64,
    cfg: &Config,
) -> f64 {
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut worst = 1.0f64;
    if p == 2.0 {
        let mut grams = Vec::with_capacity(rows.len() + 1);
        let mut g = Mat::zeros(d, d);
        grams.push(g.clone());
        for a in rows {
            g += a * a.transpose();
            grams.push(g.clone());
        }
        for w in prefixes.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for i in lo + 1..hi {
                let lam = min_generalized_eig(&grams[lo], &grams[i], cfg.svd_cutoff);
                worst = worst.min(lam.max(0.0).sqrt());
            }
        }
        return worst;
    }
    let mut rng = row_rng(seed, u64::MAX);
    for w in prefixes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo + 1 {
            continue;
        }
        let m_lo = crate::linalg::stack_rows(&rows[..lo], d);
        for i in lo + 1..hi {
            let m_i = crate::linalg::stack_rows(&rows[..i], d);
            for _ in 0..probes {
                let x = Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let den = lp_norm(&(&m_i * &x), p);
                if den == 0.0 {
                    continue;
                }
                let num = if lo == 0 { 0.0 } else { lp_norm(&(&m_lo * &x), p) };
                worst = worst.min(num / den);
            }
        }
    }
    worst
}

/// Diagnostic pair (sum of online sensitivities, calibrated bound
/// C (d log(n kappa))^{max(p/2,1)} log n). Logs are natural and floored
/// at 1 so the bound is meaningful for tiny streams.
pub fn online_sensitivity_sum_check(a: &Mat, p: f64, cfg: &Config) -> Result<(f64, f64)> {
    let mut state = OnlinePrefixState::new(a.ncols(), p, cfg);
    for i in 0..a.nrows() {
        state.push(&a.row(i).transpose())?;
    }
    let n = a.nrows() as f64;
    let kappa = state.condition_number();
    let log_nk = (n * kappa).ln().max(1.0);
    let log_n = n.ln().max(1.0);
    let bound = cfg.sum_bound_const
        * (a.ncols() as f64 * log_nk).powf((p / 2.0).max(1.0))
        * log_n;
    Ok((state.sensitivity_sum(), bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::lp_sensitivity;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> Config {
        Config::default()
    }

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec64> {
        let mut rng = row_rng(seed, 0);
        (0..n)
            .map(|_| Vec64::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn first_nonzero_row_has_sensitivity_one() {
        for p in [1.0, 2.0, 3.0] {
            let mut state = OnlinePrefixState::new(2, p, &cfg());
            let tau = state.push(&Vec64::from_vec(vec![2.0, 0.0])).unwrap();
            assert_relative_eq!(tau, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn repeated_basis_vector_decays_harmonically() {
        let mut state = OnlinePrefixState::new(2, 2.0, &cfg());
        let e1 = Vec64::from_vec(vec![1.0, 0.0]);
        assert_relative_eq!(state.push(&e1).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(state.push(&e1).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(state.push(&e1).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_rows_do_not_count() {
        let mut state = OnlinePrefixState::new(2, 2.0, &cfg());
        assert_eq!(state.push(&Vec64::zeros(2)).unwrap(), 0.0);
        assert_relative_eq!(state.condition_number(), 1.0);
        assert_relative_eq!(state.push(&Vec64::from_vec(vec![0.0, 3.0])).unwrap(), 1.0);
    }

    #[test]
    fn online_dominates_offline_pointwise() {
        let rows = gaussian_rows(50, 4, 11);
        let a = crate::linalg::stack_rows(&rows, rows[0].len());
        for p in [1.0, 2.0, 3.0] {
            let mut state = OnlinePrefixState::new(4, p, &cfg());
            for (i, r) in rows.iter().enumerate() {
                let online = state.push(r).unwrap();
                let offline = lp_sensitivity(&a, i, p, &cfg()).unwrap();
                assert!(
                    online >= offline - 1e-3,
                    "p = {p}, row {i}: online {online} < offline {offline}"
                );
            }
        }
    }

    #[test]
    fn identity_stream_is_fully_sampled() {
        let rows: Vec<Vec64> = (0..5)
            .map(|i| Vec64::from_fn(5, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let c = online_sample_stream(&rows, 2.0, 0.5, 42, &cfg()).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.entries.iter().all(|e| e.probability == 1.0 && e.weight == 1.0));
    }

    #[test]
    fn repeated_row_sample_count_matches_probability_sum() {
        // tau_i = 1/i exactly, so the inclusion probabilities are known in
        // closed form and the sample count is a sum of Bernoullis. The
        // default constant saturates every p_i at this scale; shrink it so
        // the probabilities actually decay.
        let n = 1000;
        let e1 = Vec64::from_vec(vec![1.0]);
        let rows: Vec<Vec64> = (0..n).map(|_| e1.clone()).collect();
        let eps = 0.5;
        let mut small = cfg();
        small.c1 = 0.2;
        let factor = ((n as f64).ln()) / (eps * eps);
        let probs: Vec<f64> =
            (1..=n).map(|i| (small.c1 / i as f64 * factor).min(1.0)).collect();
        let expected: f64 = probs.iter().sum();
        let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
        assert!(expected < n as f64 / 2.0, "probabilities did not decay");
        let seeds = 300;
        let mut total = 0usize;
        for s in 0..seeds {
            total += online_sample_stream(&rows, 2.0, eps, s, &small).unwrap().len();
        }
        let mean = total as f64 / seeds as f64;
        let sigma = (var / seeds as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * sigma,
            "mean {mean} vs expected {expected} (sigma {sigma})"
        );
        // At the default constant every probability is 1 and the stream is
        // copied verbatim.
        assert_eq!(online_sample_stream(&rows, 2.0, eps, 0, &cfg()).unwrap().len(), n);
    }

    #[test]
    fn sampled_prefixes_embed_spectrally() {
        // Default constants saturate the probabilities at this scale, so
        // the coreset is the prefix itself; the check still walks the
        // full prefix-embedding invariant.
        let rows = gaussian_rows(300, 8, 17);
        let eps = 0.5;
        let mut ok = 0;
        for seed in 0..10 {
            let c = online_sample_stream(&rows, 2.0, eps, seed, &cfg()).unwrap();
            let m = c.scaled_matrix(8);
            let a = crate::linalg::stack_rows(&rows, rows[0].len());
            let ga = a.transpose() * &a;
            let gm = m.transpose() * &m;
            let lo = min_generalized_eig(&gm, &ga, cfg().svd_cutoff);
            let hi = 1.0 / min_generalized_eig(&ga, &gm, cfg().svd_cutoff);
            if lo >= (1.0 - eps).powi(2) - 1e-9 && hi <= (1.0 + eps).powi(2) + 1e-9 {
                ok += 1;
            }
        }
        assert!(ok >= 9, "only {ok}/10 seeds embedded");
    }

    #[test]
    fn condition_number_examples() {
        assert_relative_eq!(
            online_condition_number(&Mat::identity(4, 4), &cfg()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let a = Mat::from_row_slice(2, 1, &[1.0, 2.0]);
        assert_relative_eq!(
            online_condition_number(&a, &cfg()).unwrap(),
            5.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn row_order_changes_condition_number() {
        let a = Mat::from_row_slice(2, 1, &[1.0, 2.0]);
        let b = Mat::from_row_slice(2, 1, &[2.0, 1.0]);
        let ka = online_condition_number(&a, &cfg()).unwrap();
        let kb = online_condition_number(&b, &cfg()).unwrap();
        assert_relative_eq!(kb, 5.0f64.sqrt() / 2.0, epsilon = 1e-12);
        assert!((ka - kb).abs() > 0.1, "expected order sensitivity: {ka} vs {kb}");
    }

    #[test]
    fn identity_prefixes_are_all_important() {
        let rows: Vec<Vec64> = (0..4)
            .map(|i| Vec64::from_fn(4, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let p = important_prefixes(&rows, 2.0, 5, &cfg()).unwrap();
        assert_eq!(p, vec![1, 2, 3, 4]);
    }

    #[test]
    fn repeated_row_partition_is_sublinear_and_quarter_safe() {
        let n = 1024;
        let rows: Vec<Vec64> = (0..n).map(|_| Vec64::from_vec(vec![1.0])).collect();
        let p = important_prefixes(&rows, 2.0, 9, &cfg()).unwrap();
        assert!(p.len() < n / 3, "partition kept {} of {n} prefixes", p.len());
        assert_eq!(*p.last().unwrap(), n);
        // Norms grow like sqrt(i), so the exact worst gap ratio is
        // sqrt(i_j / (i_{j+1} - 1)); verify against the generic checker.
        let ratio = quarter_property_ratio(&rows, &p, 2.0, 0, 0, &cfg());
        let mut closed_form = 1.0f64;
        for w in p.windows(2) {
            if w[1] > w[0] + 1 {
                closed_form = closed_form.min((w[0] as f64 / (w[1] - 1) as f64).sqrt());
            }
        }
        assert_relative_eq!(ratio, closed_form, epsilon = 1e-9);
        assert!(ratio >= 0.25 - 1e-9, "quarter property failed: {ratio}");
    }

    #[test]
    fn random_stream_partition_passes_probe_check() {
        let rows = gaussian_rows(120, 4, 23);
        for p in [1.0, 2.0] {
            let pref = important_prefixes(&rows, p, 31, &cfg()).unwrap();
            let ratio = quarter_property_ratio(&rows, &pref, p, 200, 7, &cfg());
            assert!(ratio >= 0.25 - 1e-6, "p = {p}: ratio {ratio}");
        }
    }

    #[test]
    fn identity_sum_is_dimension() {
        let (sum, bound) = online_sensitivity_sum_check(&Mat::identity(6, 6), 2.0, &cfg()).unwrap();
        assert_relative_eq!(sum, 6.0, epsilon = 1e-9);
        assert!(sum <= bound);
    }

    #[test]
    fn random_sum_within_calibrated_bound_p2() {
        let a = crate::linalg::stack_rows(&gaussian_rows(1000, 6, 29), 6);
        let (sum, bound) = online_sensitivity_sum_check(&a, 2.0, &cfg()).unwrap();
        assert!(sum <= bound, "sum {sum} > bound {bound}");
    }

    #[test]
    fn random_sum_within_calibrated_bound_p4() {
        let a = crate::linalg::stack_rows(&gaussian_rows(500, 4, 37), 4);
        let (sum, bound) = online_sensitivity_sum_check(&a, 4.0, &cfg()).unwrap();
        assert!(sum <= bound, "sum {sum} > bound {bound}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Online sensitivities never fall below offline ones (p = 2,
        /// exact route on both sides).
        #[test]
        fn online_at_least_offline_p2(
            entries in proptest::collection::vec(-3.0f64..3.0, 18),
        ) {
            let rows: Vec<Vec64> = entries
                .chunks(3)
                .map(|c| Vec64::from_vec(c.to_vec()))
                .collect();
            let a = crate::linalg::stack_rows(&rows, rows[0].len());
            let mut state = OnlinePrefixState::new(3, 2.0, &cfg());
            for (i, r) in rows.iter().enumerate() {
                let online = state.push(r).unwrap();
                let offline = lp_sensitivity(&a, i, 2.0, &cfg()).unwrap();
                prop_assert!(online >= offline - 1e-8);
            }
        }

        /// The partition's quarter property holds on random small streams
        /// (exact generalized-eigenvalue check).
        #[test]
        fn quarter_property_exact_p2(seed in 0u64..500) {
            let rows = gaussian_rows(60, 3, 1000 + seed);
            let pref = important_prefixes(&rows, 2.0, seed, &cfg()).unwrap();
            let ratio = quarter_property_ratio(&rows, &pref, 2.0, 0, 0, &cfg());
            prop_assert!(ratio >= 0.25 - 1e-9, "ratio {ratio}");
        }
    }
}
