//! The acceptance suite: fourteen self-contained checks, each pinning one
//! end-to-end guarantee of the library at fixed instance sizes, seeds and
//! tolerances. Statistical checks use deterministic seeds, so a passing
//! criterion stays passing; calibrated constants are commented where they
//! were set from measurement.

use std::collections::HashMap;

use rayon::prelude::*;

use rowsketch::config::Config;
use rowsketch::dedup_embed::{
    alternate_dedup_embedding, dedup_subspace_embedding, robust_sensitivity_stream,
};
use rowsketch::error::Result;
use rowsketch::hashing::{default_independence, mix2, row_rng};
use rowsketch::linf_embed::hash_scaling;
use rowsketch::linf_lra::{max_subspace_distance, online_ridge_sum, RidgeCoresetState};
use rowsketch::online::{important_prefixes, quarter_property_ratio, OnlinePrefixState};
use rowsketch::sensitivity::{
    lp_sensitivities, sampling_probabilities, sensitivity_sample, sensitivity_sum_bound_check,
    SensitivityVector,
};
use rowsketch::stats::{chi_square_uniform_pvalue, ks_two_sample};
use rowsketch::stream::{dedup, dedup_turnstile, rows_to_matrix, TaggedRow, TurnstileUpdate};
use rowsketch::turnstile::{
    bounded_entries_sketch, multipass_dedup_embedding, L0EstimatorSketch, L0SamplerSketch,
};
use rowsketch::{Mat, Vec64};

use rand::Rng;

use crate::experiments::lp_stretch;
use crate::synth::{distinct_int_rows, gaussian_matrix, gen_synthetic};

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

fn guarded(
    id: usize,
    name: &'static str,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionResult {
    match f() {
        Ok((passed, details)) => CriterionResult { id, name, passed, details },
        Err(e) => CriterionResult { id, name, passed: false, details: format!("errored: {e}") },
    }
}

/// Duplicate-rich tagged stream: `distinct` fixed integer rows, every tag
/// present, remaining picks uniform.
fn acceptance_tagged_stream(
    len: usize,
    distinct: usize,
    d: usize,
    m: i64,
    seed: u64,
) -> Vec<TaggedRow> {
    let rows = distinct_int_rows(distinct, d, m, mix2(seed, 1));
    assert_eq!(rows.len(), distinct, "row grid too small for request");
    let mut rng = row_rng(mix2(seed, 2), 0);
    (0..len)
        .map(|i| {
            let t = if i < distinct { i } else { rng.random_range(0..distinct) };
            TaggedRow::new(t as u64, rows[t].clone())
        })
        .collect()
}

/// Turnstile stream over `distinct` rows in [-m, m]^d with ~30% deletions;
/// running counts never go negative and some rows net out to zero.
fn acceptance_turnstile_stream(
    len: usize,
    distinct: usize,
    d: usize,
    m: i64,
    seed: u64,
) -> Vec<TurnstileUpdate> {
    let rows = distinct_int_rows(distinct, d, m, mix2(seed, 3));
    assert_eq!(rows.len(), distinct, "row grid too small for request");
    let mut rng = row_rng(mix2(seed, 4), 0);
    let mut counts = vec![0i64; distinct];
    let mut live: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        if !live.is_empty() && rng.random::<f64>() < 0.3 {
            let at = rng.random_range(0..live.len());
            let idx = live[at];
            counts[idx] -= 1;
            if counts[idx] == 0 {
                live.swap_remove(at);
            }
            out.push(TurnstileUpdate::new(rows[idx].clone(), -1));
        } else {
            let idx = rng.random_range(0..distinct);
            if counts[idx] == 0 {
                live.push(idx);
            }
            counts[idx] += 1;
            out.push(TurnstileUpdate::new(rows[idx].clone(), 1));
        }
    }
    if live.is_empty() {
        out.push(TurnstileUpdate::new(rows[0].clone(), 1));
    }
    out
}

/// 1. Offline sensitivity sampling on Gaussian 2000x10 at p=2, exact
/// scores, eps=0.25, delta=0.01: spectral distortion within 1 +/- 0.25 in
/// at least 19/20 seeds, and the sample count never exceeds the
/// expected-size bound ceil(sum p_i + 4 sqrt(sum p_i(1-p_i)) + 8).
pub fn criterion_01_offline_embedding() -> CriterionResult {
    guarded(1, "offline sampling embedding", || {
        let cfg = Config::default();
        let (eps, delta) = (0.25, 0.01);
        let runs: Vec<(bool, bool, usize, f64)> = (0..20u64)
            .into_par_iter()
            .map(|seed| -> Result<(bool, bool, usize, f64)> {
                let a = gaussian_matrix(2000, 10, mix2(0xAC01, seed));
                let v = SensitivityVector::exact(&a, 2.0, &cfg)?;
                let probs = sampling_probabilities(&v, 10, eps, delta, &cfg);
                let mean: f64 = probs.iter().sum();
                let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
                let bound = (mean + 4.0 * var.sqrt() + 8.0).ceil();
                let coreset = sensitivity_sample(&a, &v, eps, delta, 2.0, mix2(0xAC02, seed), &cfg);
                let (lo, hi) = lp_stretch(&a, &coreset.scaled_matrix(10), 2.0, 64, seed);
                let within = lo >= 1.0 - eps && hi <= 1.0 + eps;
                Ok((within, (coreset.len() as f64) <= bound, coreset.len(), bound))
            })
            .collect::<Result<_>>()?;
        let within = runs.iter().filter(|r| r.0).count();
        let counts_ok = runs.iter().all(|r| r.1);
        let max_count = runs.iter().map(|r| r.2).max().unwrap_or(0);
        let bound = runs.first().map(|r| r.3).unwrap_or(0.0);
        Ok((
            within >= 19 && counts_ok,
            format!(
                "distortion within 1+/-0.25 in {within}/20 seeds (need 19); \
                 max sample count {max_count} vs bound {bound}"
            ),
        ))
    })
}

/// 2. Sum of lp sensitivities at most d^max(p/2,1) + 1e-3 for
/// p in {1, 1.5, 2, 3, 4} on 50 random 200x6 matrices, exact solver.
pub fn criterion_02_sensitivity_sums() -> CriterionResult {
    guarded(2, "sensitivity sum bounds", || {
        let cfg = Config::default();
        let ps = [1.0, 1.5, 2.0, 3.0, 4.0];
        let checks: Vec<(f64, f64, f64)> = (0..50u64)
            .into_par_iter()
            .map(|seed| -> Result<Vec<(f64, f64, f64)>> {
                let a = gaussian_matrix(200, 6, mix2(0xAC03, seed));
                ps.iter()
                    .map(|&p| {
                        let (sum, bound) = sensitivity_sum_bound_check(&a, p, &cfg)?;
                        Ok((p, sum, bound))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let bad: Vec<&(f64, f64, f64)> =
            checks.iter().filter(|(_, sum, bound)| *sum > bound + 1e-3).collect();
        let worst = checks
            .iter()
            .map(|(_, s, b)| s - b)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((
            bad.is_empty(),
            format!(
                "{} (matrix, p) pairs checked, {} violations, worst sum-bound gap {worst:.2e}",
                checks.len(),
                bad.len()
            ),
        ))
    })
}

/// 3. Online sensitivities dominate offline ones pointwise on 100 random
/// 50x4 instances for every tested p, solver tolerance 1e-3.
pub fn criterion_03_online_dominance() -> CriterionResult {
    guarded(3, "online dominates offline sensitivities", || {
        let cfg = Config::default();
        let ps = [1.0, 1.5, 2.0, 3.0, 4.0];
        let violations: Vec<usize> = (0..100u64)
            .into_par_iter()
            .map(|seed| -> Result<usize> {
                let a = gaussian_matrix(50, 4, mix2(0xAC04, seed));
                let mut bad = 0usize;
                for &p in &ps {
                    let offline = lp_sensitivities(&a, p, &cfg)?;
                    let mut state = OnlinePrefixState::new(4, p, &cfg);
                    for i in 0..a.nrows() {
                        let online = state.push(&a.row(i).transpose())?;
                        if online < offline[i] - 1e-3 {
                            bad += 1;
                        }
                    }
                }
                Ok(bad)
            })
            .collect::<Result<_>>()?;
        let total: usize = violations.iter().sum();
        Ok((
            total == 0,
            format!("100 instances x 5 exponents x 50 rows, {total} dominance violations"),
        ))
    })
}

/// 4. Tag-keyed power-of-two scaling law at N=2^20, cap n=2^10 over 1e5
/// tags: each Pr[g = 2^q] within 3 sigma of 2^-(q+1) (cap bin at 2^-10),
/// and the empirical mean within 3 sigma of (log2 n)/2 + 1 = 6.
pub fn criterion_04_hash_scaling_law() -> CriterionResult {
    guarded(4, "hash scaling law", || {
        let domain = 1u64 << 20;
        let cap = 1u64 << 10;
        let t = 100_000usize;
        let tags: Vec<u64> = (0..t as u64).collect();
        let independence = default_independence(8, domain, 0.01);
        let assignment = hash_scaling(&tags, 2.0, independence, domain, cap, 0xAC05)?;

        // Exact pmf: Pr[g = 2^q] = 2^-(q+1) for q < 10, Pr[g = 2^10] = 2^-10.
        let levels = 10usize;
        let mut pmf = vec![0.0f64; levels + 1];
        for (q, slot) in pmf.iter_mut().enumerate().take(levels) {
            *slot = 0.5f64.powi(q as i32 + 1);
        }
        pmf[levels] = 0.5f64.powi(levels as i32);
        let mean_exact: f64 = pmf.iter().enumerate().map(|(q, p)| p * 2f64.powi(q as i32)).sum();
        let second: f64 = pmf.iter().enumerate().map(|(q, p)| p * 4f64.powi(q as i32)).sum();
        let sigma_g = (second - mean_exact * mean_exact).sqrt();

        let mut counts = vec![0u64; levels + 1];
        let mut sum = 0.0f64;
        for i in 0..assignment.len() {
            let g = assignment.scale(i);
            let q = (g as u64).trailing_zeros() as usize;
            counts[q.min(levels)] += 1;
            sum += g;
        }
        let mut bin_fail = Vec::new();
        for q in 0..=levels {
            let expect = t as f64 * pmf[q];
            let sigma = (t as f64 * pmf[q] * (1.0 - pmf[q])).sqrt();
            if (counts[q] as f64 - expect).abs() > 3.0 * sigma {
                bin_fail.push(q);
            }
        }
        let mean_emp = sum / t as f64;
        let mean_tol = 3.0 * sigma_g / (t as f64).sqrt();
        let mean_ok = (mean_emp - mean_exact).abs() <= mean_tol;
        Ok((
            bin_fail.is_empty() && mean_ok,
            format!(
                "bins outside 3 sigma: {bin_fail:?}; mean {mean_emp:.4} vs {mean_exact} \
                 (tolerance {mean_tol:.4})"
            ),
        ))
    })
}

/// 5. Min-stability: max_i lambda_i/E_i and (sum lambda)/E agree in
/// distribution; two-sample KS p-value above 0.01 at 1e5 draws each.
pub fn criterion_05_min_stability() -> CriterionResult {
    guarded(5, "min-stability of exponential scaling", || {
        let lambdas = [0.3f64, 1.7, 0.9, 2.5, 0.6, 1.1, 0.2, 3.0];
        let total: f64 = lambdas.iter().sum();
        let draws = 100_000usize;
        let exp = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        };
        let mut xs = Vec::with_capacity(draws);
        let mut ys = Vec::with_capacity(draws);
        let mut rng_x = row_rng(0xAC06, 0);
        let mut rng_y = row_rng(0xAC06, 1);
        for _ in 0..draws {
            let x = lambdas
                .iter()
                .map(|&l| l / exp(&mut rng_x).max(f64::MIN_POSITIVE))
                .fold(0.0f64, f64::max);
            xs.push(x);
            ys.push(total / exp(&mut rng_y).max(f64::MIN_POSITIVE));
        }
        let p = ks_two_sample(&xs, &ys);
        Ok((p > 0.01, format!("two-sample KS p-value {p:.4} at {draws} draws (need > 0.01)")))
    })
}

/// 6. One-pass dedup embedding end to end: 1e4 tagged rows over 200 tags,
/// d=8, p=2, eps=0.5. Spectral distortion within 1 +/- 0.5 against the
/// deduplicated oracle in at least 9/10 seeds; exactly one sample per tag
/// and only last occurrences stored, every seed.
pub fn criterion_06_dedup_embedding() -> CriterionResult {
    guarded(6, "one-pass dedup subspace embedding", || {
        // The instances reach online condition numbers near 1e10, so the
        // bound is left open per the precondition kappa_bound >= kappa^OL;
        // the flag must then never trip.
        run_dedup_style(0xAC07, 9, |stream, seed, cfg| {
            let emb = dedup_subspace_embedding(stream, 2.0, 0.5, f64::INFINITY, seed, cfg)?;
            let mut last: HashMap<u64, usize> = HashMap::new();
            for (i, it) in stream.iter().enumerate() {
                last.insert(it.tag, i);
            }
            let mut tags: Vec<u64> =
                emb.coreset.entries.iter().map(|e| e.tag.expect("tagged")).collect();
            tags.sort_unstable();
            let unique = tags.windows(2).all(|w| w[0] != w[1]);
            let last_only = emb
                .coreset
                .entries
                .iter()
                .zip(&emb.positions)
                .all(|(e, &pos)| last.get(&e.tag.expect("tagged")) == Some(&pos));
            Ok((emb.coreset, unique && last_only && !emb.kappa_exceeded))
        })
    })
}

/// Shared harness for criteria 6 and 12: ten seeds of the 1e4-row / 200-tag
/// d=8 stream, spectral check against the dedup oracle, per-seed hard
/// invariant from the callback.
fn run_dedup_style(
    base_seed: u64,
    need: usize,
    run: impl Fn(&[TaggedRow], u64, &Config) -> Result<(rowsketch::sensitivity::WeightedCoreset, bool)>
        + Sync,
) -> Result<(bool, String)> {
    let cfg = Config::default();
    let outcomes: Vec<(bool, bool, usize)> = (0..10u64)
        .into_par_iter()
        .map(|seed| -> Result<(bool, bool, usize)> {
            let stream = acceptance_tagged_stream(10_000, 200, 8, 50, mix2(base_seed, seed));
            let uniq = dedup(&stream)?;
            let rows: Vec<Vec<f64>> = uniq.into_iter().map(|r| r.row).collect();
            let exact = rows_to_matrix(&rows, 8);
            let (coreset, invariants) = run(&stream, mix2(base_seed, 1000 + seed), &cfg)?;
            let (lo, hi) = lp_stretch(&exact, &coreset.scaled_matrix(8), 2.0, 64, seed);
            Ok((lo >= 0.5 && hi <= 1.5, invariants, coreset.len()))
        })
        .collect::<Result<_>>()?;
    let within = outcomes.iter().filter(|o| o.0).count();
    let invariants = outcomes.iter().all(|o| o.1);
    let sizes: Vec<usize> = outcomes.iter().map(|o| o.2).collect();
    Ok((
        within >= need && invariants,
        format!(
            "distortion within 1+/-0.5 in {within}/10 seeds (need >= {need}); hard tag \
             invariants {}; sample counts {sizes:?}",
            if invariants { "held" } else { "VIOLATED" }
        ),
    ))
}

/// 7. Max-distance strong coreset at n=4000, d=500, k=10 on low-rank plus
/// noise data: at most 200 rows stored, max cost ratio over the top-i SVD
/// subspaces at most 1.5, and the sqrt(|S|) upper inequality exact on 200
/// random k-subspaces.
pub fn criterion_07_linf_strong_coreset() -> CriterionResult {
    guarded(7, "max-distance strong coreset", || {
        let cfg = Config::default();
        let (n, d, k) = (4000usize, 500usize, 10usize);
        let a = gen_synthetic(n, d, k, 100, 5000, 0xAC08)?;
        let mut state = RidgeCoresetState::with_fast_path(d, k, n, 0xAC09, &cfg);
        for i in 0..n {
            state.insert(&a.row(i).transpose());
        }
        let size = state.len();
        let coreset = state.matrix();
        let root_s = (size as f64).sqrt();

        let svd = a.clone().svd(false, true);
        let v_t = svd.v_t.expect("svd requested v_t");
        let mut worst_ratio = 0.0f64;
        for i in 1..=k {
            let mut basis = Mat::zeros(d, i);
            for j in 0..i {
                basis.set_column(j, &v_t.row(j).transpose());
            }
            let full = max_subspace_distance(&a, &basis);
            let core = max_subspace_distance(&coreset, &basis);
            if core > 0.0 {
                worst_ratio = worst_ratio.max(full / core);
            }
        }

        let sandwich_ok = (0..200u64).into_par_iter().all(|probe| {
            let g = gaussian_matrix(d, k, mix2(0xAC0A, probe));
            let basis = g.qr().q();
            let full = max_subspace_distance(&a, &basis);
            let core = max_subspace_distance(&coreset, &basis);
            full <= root_s * core * (1.0 + 1e-9)
        });

        Ok((
            size <= 200 && worst_ratio <= 1.5 && sandwich_ok,
            format!(
                "|S| = {size} (need <= 200); worst top-i SVD cost ratio {worst_ratio:.4} \
                 (need <= 1.5); sqrt(|S|) inequality on 200 random subspaces: {}",
                if sandwich_ok { "held" } else { "VIOLATED" }
            ),
        ))
    })
}

/// 8. Sum of online rank-k ridge scores of the stored coreset rows at most
/// 50 k ln(k kappa)^2 on 30 random low-rank plus noise instances.
pub fn criterion_08_ridge_sum() -> CriterionResult {
    guarded(8, "online ridge-leverage sum bound", || {
        let cfg = Config::default();
        let results: Vec<(f64, f64)> = (0..30u64)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let n = 200 + (i as usize % 5) * 60;
                let d = 8 + (i as usize % 4) * 4;
                let k = 2 + (i as usize % 3);
                let a = gen_synthetic(n, d, k, 10, 30, mix2(0xAC0B, i))?;
                let mut s = RidgeCoresetState::new(d, k, &cfg);
                for r in 0..n {
                    s.insert(&a.row(r).transpose());
                }
                let (sum, kappa) = online_ridge_sum(s.rows(), k, &cfg);
                let bound = 50.0 * k as f64 * (k as f64 * kappa).ln().max(1.0).powi(2);
                Ok((sum, bound))
            })
            .collect::<Result<_>>()?;
        let bad = results.iter().filter(|(s, b)| s > b).count();
        let worst =
            results.iter().map(|(s, b)| s / b).fold(0.0f64, f64::max);
        Ok((
            bad == 0,
            format!("30 instances, {bad} bound violations, worst sum/bound ratio {worst:.3}"),
        ))
    })
}

/// 9. L0 primitives. Sampler: 1e5 one-draw sketches over a 64-index
/// support, no out-of-support index and exact frequencies on every draw,
/// chi-square uniformity p > 0.01. Estimator: within 1 +/- 0.1 at 1e3
/// distinct indices in at least 95/100 seeds.
pub fn criterion_09_l0_primitives() -> CriterionResult {
    guarded(9, "L0 sampler and estimator", || {
        let domain = 4096u128;
        let support: Vec<(u128, i64)> =
            (0..64u128).map(|i| (i * 61 + 7, 1 + (i as i64 % 3))).collect();
        let cancelled: Vec<u128> = (0..32u128).map(|i| i * 53 + 11).collect();
        let truth: HashMap<u128, i64> = support.iter().cloned().collect();

        let draws: Vec<Option<(u128, i64)>> = (0..100_000u64)
            .into_par_iter()
            .map(|seed| {
                let mut s = L0SamplerSketch::new(domain, mix2(0xAC0C, seed));
                for &(idx, f) in &support {
                    s.update(idx, f);
                }
                for &idx in &cancelled {
                    if !truth.contains_key(&idx) {
                        s.update(idx, 2);
                        s.update(idx, -2);
                    }
                }
                s.sample()
            })
            .collect();
        let mut counts: HashMap<u128, u64> = HashMap::new();
        let mut successes = 0u64;
        let mut support_violations = 0u64;
        let mut freq_errors = 0u64;
        for d in draws.iter().flatten() {
            successes += 1;
            match truth.get(&d.0) {
                Some(&f) if f == d.1 => *counts.entry(d.0).or_insert(0) += 1,
                Some(_) => freq_errors += 1,
                None => support_violations += 1,
            }
        }
        let observed: Vec<u64> = support.iter().map(|(i, _)| *counts.get(i).unwrap_or(&0)).collect();
        let chi_p = chi_square_uniform_pvalue(&observed);
        let sampler_ok = support_violations == 0
            && freq_errors == 0
            && successes >= 95_000
            && chi_p > 0.01;

        let est_good = (0..100u64)
            .into_par_iter()
            .filter(|&seed| {
                let mut e = L0EstimatorSketch::new(0.1, 1 << 20, mix2(0xAC0D, seed))
                    .expect("estimator parameters are valid");
                for i in 0..1000u128 {
                    e.update(i * 997 + 3, 1);
                }
                let m = e.estimate();
                (900.0..=1100.0).contains(&m)
            })
            .count();

        Ok((
            sampler_ok && est_good >= 95,
            format!(
                "sampler: {successes}/100000 draws succeeded, {support_violations} out-of-support, \
                 {freq_errors} frequency errors, chi-square p {chi_p:.4}; \
                 estimator within 1+/-0.1 in {est_good}/100 seeds (need 95)"
            ),
        ))
    })
}

/// 10. Multipass turnstile embedding: 1e4 updates over 300 distinct rows
/// in [-7,7]^4, p=2, eps=0.5. Distortion within 1 +/- 0.5 of the netted
/// oracle in at least 8/10 seeds, pass count at most ceil(log2 n) + 1,
/// level supports nested, every seed.
pub fn criterion_10_multipass_turnstile() -> CriterionResult {
    guarded(10, "multipass turnstile embedding", || {
        let cfg = Config::default();
        let outcomes: Vec<(bool, bool, usize, usize)> = (0..10u64)
            .into_par_iter()
            .map(|seed| -> Result<(bool, bool, usize, usize)> {
                let updates =
                    acceptance_turnstile_stream(10_000, 300, 4, 7, mix2(0xAC0E, seed));
                let res = multipass_dedup_embedding(&updates, 7, 2.0, 0.5, seed, &cfg)?;
                let exact = rows_to_matrix(&dedup_turnstile(&updates)?, 4);
                let (lo, hi) = lp_stretch(&exact, &res.coreset.scaled_matrix(4), 2.0, 64, seed);
                let nested = res
                    .level_support
                    .windows(2)
                    .all(|w| w[0].iter().all(|e| w[1].binary_search(e).is_ok()));
                let max_passes = (updates.len() as f64).log2().ceil() as usize + 1;
                let hard = nested && res.passes <= max_passes;
                Ok((lo >= 0.5 && hi <= 1.5, hard, res.passes, res.coreset.len()))
            })
            .collect::<Result<_>>()?;
        let within = outcomes.iter().filter(|o| o.0).count();
        let hard = outcomes.iter().all(|o| o.1);
        let passes: Vec<usize> = outcomes.iter().map(|o| o.2).collect();
        Ok((
            within >= 8 && hard,
            format!(
                "distortion within 1+/-0.5 in {within}/10 seeds (need 8); pass/nesting \
                 invariants {}; passes {passes:?}",
                if hard { "held" } else { "VIOLATED" }
            ),
        ))
    })
}

/// 11. Bounded-entries structure at eps=0.2: 100 integer queries per seed
/// all within 1 +/- 0.25 of the exact norm in at least 9/10 seeds, and
/// queries with zero support answered exactly 0.
pub fn criterion_11_bounded_entries() -> CriterionResult {
    guarded(11, "bounded-entries norm queries", || {
        let cfg = Config::default();
        let outcomes: Vec<(bool, bool, f64)> = (0..10u64)
            .into_par_iter()
            .map(|seed| -> Result<(bool, bool, f64)> {
                // Rows live in the hyperplane x4 = 0 so e4 is a zero-support
                // witness; entries bounded by 5, query entries by 2.
                let mut rows = distinct_int_rows(32, 3, 5, mix2(0xAC0F, seed));
                rows.iter_mut().for_each(|r| r.push(0.0));
                let mut rng = row_rng(mix2(0xAC10, seed), 0);
                let mut updates = Vec::new();
                for (i, r) in rows.iter().enumerate() {
                    let f = 1 + (i as i64 % 2);
                    for _ in 0..f {
                        updates.push(TurnstileUpdate::new(r.clone(), 1));
                    }
                }
                // Churn: an extra row inserted and fully removed.
                let ghost = vec![5.0, 5.0, 5.0, 1.0];
                updates.push(TurnstileUpdate::new(ghost.clone(), 3));
                updates.push(TurnstileUpdate::new(ghost, -3));
                let sketch = bounded_entries_sketch(&updates, 5, 0.2, seed, &cfg)?;
                let freqs = rowsketch::stream::turnstile_frequencies(&updates)?;

                let mut all_within = true;
                let mut worst = 0.0f64;
                for _ in 0..100 {
                    let x: Vec<i64> = (0..4).map(|_| rng.random_range(-2..=2)).collect();
                    let exact: f64 = freqs
                        .iter()
                        .map(|(row, f)| {
                            let dot: f64 =
                                row.iter().zip(&x).map(|(&r, &xi)| r * xi as f64).sum();
                            ((*f as f64) * dot).powi(2)
                        })
                        .sum();
                    let est = sketch.query(&x, 2.0)?.estimate;
                    if exact == 0.0 {
                        if est != 0.0 {
                            all_within = false;
                        }
                        continue;
                    }
                    let rel = (est - exact).abs() / exact;
                    worst = worst.max(rel);
                    if rel > 0.25 {
                        all_within = false;
                    }
                }
                let zero_exact = sketch.query(&[0, 0, 0, 2], 2.0)?.estimate == 0.0;
                Ok((all_within, zero_exact, worst))
            })
            .collect::<Result<_>>()?;
        let good = outcomes.iter().filter(|o| o.0).count();
        let zeros = outcomes.iter().all(|o| o.1);
        let worst = outcomes.iter().map(|o| o.2).fold(0.0f64, f64::max);
        Ok((
            good >= 9 && zeros,
            format!(
                "all 100 queries within 1+/-0.25 in {good}/10 seeds (need 9); worst relative \
                 error {worst:.3}; zero-support queries exact: {}",
                if zeros { "yes" } else { "NO" }
            ),
        ))
    })
}

/// 12. Alternate tag-aware sampler on the criterion-6 instance: distortion
/// within 1 +/- eps in at least 8/10 seeds, one sample per tag exact.
pub fn criterion_12_alternate_sampler() -> CriterionResult {
    guarded(12, "alternate tag-aware sampler", || {
        run_dedup_style(0xAC11, 8, |stream, seed, cfg| {
            let coreset = alternate_dedup_embedding(stream, 2.0, 0.5, seed, cfg)?;
            let mut tags: Vec<u64> =
                coreset.entries.iter().map(|e| e.tag.expect("tagged")).collect();
            tags.sort_unstable();
            let unique = tags.windows(2).all(|w| w[0] != w[1]);
            Ok((coreset, unique))
        })
    })
}

/// 13. Prefix partition property at p=2 on 50 random 500x5 streams: the
/// exact generalized-eigenvalue check confirms every gap shrinks norms by
/// at most 4x, and |P| stays within the calibrated size bound.
pub fn criterion_13_partition_property() -> CriterionResult {
    guarded(13, "quarter prefix partition property", || {
        // Default constants saturate every sampling probability at this
        // shape (see the partition_c doc), so every prefix would be a
        // change point and the gap check would be vacuous. The diagnostic
        // runs at a deflated rate that leaves real gaps: at 0.003 the 50
        // streams measure worst gap ratio 0.797 and |P| at most 95.
        let cfg = Config { partition_c: 0.003, ..Config::default() };
        // Size bound 3 d log2(n), calibrated 1.4x above the measured max.
        let size_bound = (3.0 * 5.0 * (500f64).log2()).ceil();
        let outcomes: Vec<(f64, usize)> = (0..50u64)
            .into_par_iter()
            .map(|seed| -> Result<(f64, usize)> {
                let a = gaussian_matrix(500, 5, mix2(0xAC12, seed));
                let rows: Vec<Vec64> = (0..a.nrows()).map(|i| a.row(i).transpose()).collect();
                let prefixes = important_prefixes(&rows, 2.0, seed, &cfg)?;
                let ratio = quarter_property_ratio(&rows, &prefixes, 2.0, 0, seed, &cfg);
                Ok((ratio, prefixes.len()))
            })
            .collect::<Result<_>>()?;
        let worst_ratio = outcomes.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
        let max_p = outcomes.iter().map(|o| o.1).max().unwrap_or(0);
        let ratios_ok = worst_ratio >= 0.25 - 1e-9;
        let sizes_ok = (max_p as f64) <= size_bound;
        Ok((
            ratios_ok && sizes_ok,
            format!(
                "worst gap ratio {worst_ratio:.4} (need >= 0.25); largest |P| {max_p} \
                 (bound {size_bound})"
            ),
        ))
    })
}

/// 14. Adversarially robust variant: zero switches on a constant stream;
/// on an oblivious stream the paired importance estimates stay within the
/// switch-factor-times-polylog envelope of the non-robust run.
pub fn criterion_14_robust_variant() -> CriterionResult {
    guarded(14, "robust sketch switching", || {
        let cfg = Config::default();
        let row = vec![3.0, -1.0, 2.0, 5.0, -2.0, 1.0];
        let constant: Vec<TaggedRow> =
            (0..2000).map(|_| TaggedRow::new(7, row.clone())).collect();
        let quiet = robust_sensitivity_stream(&constant, 2.0, 3, cfg.robust_switch_factor, 0xAC13, &cfg)?;

        let stream = acceptance_tagged_stream(2000, 100, 6, 50, 0xAC14);
        let robust =
            robust_sensitivity_stream(&stream, 2.0, 3, cfg.robust_switch_factor, 0xAC15, &cfg)?;
        let plain = robust_sensitivity_stream(&stream, 2.0, 2, 1e12, 0xAC15, &cfg)?;
        let mut factor = 1.0f64;
        for (r, p) in robust.zetas.iter().zip(&plain.zetas) {
            if *r > 1e-12 && *p > 1e-12 {
                factor = factor.max(r / p).max(p / r);
            }
        }
        // L polylog(n) envelope: switch factor times ln(n)^2, calibrated
        // with margin above the measured paired factor.
        let envelope = cfg.robust_switch_factor * (2000f64).ln().powi(2);
        Ok((
            quiet.switch_points.is_empty() && factor <= envelope,
            format!(
                "constant stream switches: {} (need 0); paired zeta factor {factor:.3} vs \
                 envelope {envelope:.1}; oblivious switches {}",
                quiet.switch_points.len(),
                robust.switch_points.len()
            ),
        ))
    })
}

pub fn run_all() -> Vec<CriterionResult> {
    vec![
        criterion_01_offline_embedding(),
        criterion_02_sensitivity_sums(),
        criterion_03_online_dominance(),
        criterion_04_hash_scaling_law(),
        criterion_05_min_stability(),
        criterion_06_dedup_embedding(),
        criterion_07_linf_strong_coreset(),
        criterion_08_ridge_sum(),
        criterion_09_l0_primitives(),
        criterion_10_multipass_turnstile(),
        criterion_11_bounded_entries(),
        criterion_12_alternate_sampler(),
        criterion_13_partition_property(),
        criterion_14_robust_variant(),
    ]
}
