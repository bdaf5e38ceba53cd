//! Experiment drivers behind the CLI subcommands. Each driver turns one
//! seed into a flat metric map plus a verdict on the algorithm's hard
//! invariants; accuracy statements (which are only probabilistic) are
//! reported as metrics, not invariants.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use rowsketch::config::Config;
use rowsketch::error::{Error, Result};
use rowsketch::hashing::{mix2, row_rng};
use rowsketch::linf_lra::{
    linf_lra_solve, lp_subspace_approx, max_subspace_distance, RidgeCoresetState,
};
use rowsketch::online::{
    important_prefixes, online_sample_stream, online_sensitivity_sum_check,
    quarter_property_ratio,
};
use rowsketch::dedup_embed::{dedup_subspace_embedding, robust_sensitivity_stream};
use rowsketch::stream::{dedup, dedup_turnstile, rows_to_matrix, TaggedRow, TurnstileUpdate};
use rowsketch::turnstile::{
    bounded_entries_sketch, multipass_dedup_embedding, n1t_tradeoff_embedding,
};
use rowsketch::{Mat, Vec64};

use crate::distortion::spectral_stretch;
use crate::pgm::read_pgm;
use crate::report::{ExperimentConfig, Report, SeedOutcome};
use crate::synth::{distinct_int_rows, gen_synthetic};

pub const ALGORITHMS: &[&str] = &[
    "dedup-embed",
    "online-sample",
    "linf-coreset",
    "lp-approx",
    "turnstile",
    "bounded",
    "robust",
];

type Metrics = BTreeMap<String, f64>;
type WorkerOut = (Metrics, bool, Vec<String>);

pub fn run_experiment(cfg: &ExperimentConfig, lib: &Config) -> Result<Report> {
    cfg.validate()?;
    let worker: fn(&ExperimentConfig, &Config, u64) -> Result<WorkerOut> =
        match cfg.algorithm.as_str() {
            "dedup-embed" => run_dedup_embed,
            "online-sample" => run_online_sample,
            "linf-coreset" => run_linf_coreset,
            "lp-approx" => run_lp_approx,
            "turnstile" => run_turnstile,
            "bounded" => run_bounded,
            "robust" => run_robust,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown algorithm {other:?}; expected one of {}",
                    ALGORITHMS.join(", ")
                )))
            }
        };
    let results: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let mut outcome = match worker(cfg, lib, seed) {
                Ok((metrics, held, notes)) => SeedOutcome {
                    seed,
                    metrics,
                    invariants_held: held,
                    notes,
                    error: None,
                    runtime_ms: None,
                },
                Err(e) => SeedOutcome::failed(seed, e.to_string()),
            };
            if cfg.timings {
                outcome.runtime_ms = Some(start.elapsed().as_millis() as u64);
            }
            outcome
        })
        .collect();
    Ok(Report::assemble(cfg.clone(), results))
}

/// Input matrix: PGM when `--input` is given, synthetic low-rank plus
/// noise otherwise.
fn load_matrix(cfg: &ExperimentConfig, seed: u64) -> Result<Mat> {
    match &cfg.input {
        Some(path) => read_pgm(path),
        None => gen_synthetic(cfg.n, cfg.d, cfg.k, cfg.coeff_range, cfg.noise_range, seed),
    }
}

/// Duplicate-rich tagged stream over `distinct` fixed integer rows; every
/// tag appears at least once and repeats carry identical row bits.
fn tagged_stream(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<TaggedRow>> {
    let distinct = cfg.distinct.max(1);
    let len = cfg.updates.max(distinct);
    let m = cfg.coeff_range.clamp(1, 1 << 20);
    let rows = distinct_int_rows(distinct, cfg.d, m, mix2(seed, 101));
    if rows.len() < distinct {
        return Err(Error::InvalidArgument(format!(
            "cannot build {distinct} distinct rows in a [-{m},{m}]^{} grid",
            cfg.d
        )));
    }
    let mut rng = row_rng(mix2(seed, 102), 0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let tag = if i < distinct { i } else { rng.random_range(0..distinct) };
        out.push(TaggedRow::new(tag as u64, rows[tag].clone()));
    }
    Ok(out)
}

/// Insert/delete stream over `distinct` fixed rows in [-m, m]^d. Deletions
/// only touch rows with positive running count, so every net frequency
/// stays nonnegative; some rows cancel to zero along the way.
fn turnstile_stream(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<TurnstileUpdate>> {
    let distinct = cfg.distinct.max(1);
    let len = cfg.updates.max(2);
    let rows = distinct_int_rows(distinct, cfg.d, cfg.m_bound.max(1), mix2(seed, 103));
    if rows.len() < distinct {
        return Err(Error::InvalidArgument(format!(
            "cannot build {distinct} distinct rows in a [-{m},{m}]^{d} grid",
            m = cfg.m_bound.max(1),
            d = cfg.d
        )));
    }
    let mut rng = row_rng(mix2(seed, 104), 0);
    let mut counts = vec![0i64; distinct];
    let mut live: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let delete = !live.is_empty() && rng.random::<f64>() < 0.3;
        if delete {
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
        counts[0] += 1;
        out.push(TurnstileUpdate::new(rows[0].clone(), 1));
    }
    Ok(out)
}

/// Norm-ratio range of `test` against `reference`: exact spectral extremes
/// at p = 2, random plus coordinate probe directions otherwise. Ratios are
/// of p-norms, so a perfect embedding gives (1, 1).
pub fn lp_stretch(reference: &Mat, test: &Mat, p: f64, probes: usize, seed: u64) -> (f64, f64) {
    if p == 2.0 {
        let (lo, hi) = spectral_stretch(reference, test);
        return (lo.sqrt(), hi.sqrt());
    }
    let d = reference.ncols();
    let mut rng = row_rng(mix2(seed, 105), 0);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let scale = reference.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1.0);
    let mut measured = false;
    let lp = |m: &Mat, x: &Vec64| -> f64 {
        (m * x).iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    };
    for probe in 0..probes.max(d) {
        let x = if probe < d {
            let mut e = Vec64::zeros(d);
            e[probe] = 1.0;
            e
        } else {
            Vec64::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
        };
        let base = lp(reference, &x);
        if base <= 1e-12 * scale {
            continue;
        }
        let r = lp(test, &x) / base;
        lo = lo.min(r);
        hi = hi.max(r);
        measured = true;
    }
    if measured { (lo, hi) } else { (1.0, 1.0) }
}

fn tagged_to_matrix(stream: &[TaggedRow]) -> Result<Mat> {
    let uniq = dedup(stream)?;
    let d = uniq.first().map(|r| r.dim()).unwrap_or(0);
    let rows: Vec<Vec<f64>> = uniq.into_iter().map(|r| r.row).collect();
    Ok(rows_to_matrix(&rows, d))
}

fn run_dedup_embed(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let stream = tagged_stream(cfg, seed)?;
    let exact = tagged_to_matrix(&stream)?;
    let kappa_bound = 1e9;
    let emb = dedup_subspace_embedding(&stream, cfg.p, cfg.eps, kappa_bound, seed, lib)?;
    let d = exact.ncols();
    let (lo, hi) = lp_stretch(&exact, &emb.coreset.scaled_matrix(d), cfg.p, 64, seed);

    let mut last_pos: HashMap<u64, usize> = HashMap::new();
    for (i, item) in stream.iter().enumerate() {
        last_pos.insert(item.tag, i);
    }
    let mut tags_seen: HashMap<u64, usize> = HashMap::new();
    let mut one_per_tag = true;
    let mut last_occurrence = true;
    for (entry, &pos) in emb.coreset.entries.iter().zip(&emb.positions) {
        let tag = entry.tag.expect("dedup entries are tagged");
        if *tags_seen.entry(tag).and_modify(|c| *c += 1).or_insert(1) > 1 {
            one_per_tag = false;
        }
        if last_pos.get(&tag) != Some(&pos) {
            last_occurrence = false;
        }
    }
    // Exceeding the condition-number bound is a declared warning state
    // with a best-effort result, not an invariant breach.
    let invariants = one_per_tag && last_occurrence;

    let mut m = Metrics::new();
    m.insert("samples".into(), emb.coreset.len() as f64);
    m.insert("expected_size".into(), emb.expected_size);
    m.insert("kappa_observed".into(), emb.kappa_observed);
    m.insert("stretch_lo".into(), lo);
    m.insert("stretch_hi".into(), hi);
    m.insert(
        "within_eps".into(),
        f64::from(u8::from(lo >= 1.0 - cfg.eps && hi <= 1.0 + cfg.eps)),
    );
    let mut notes = Vec::new();
    if emb.kappa_exceeded {
        notes.push(format!(
            "condition number {:.3e} exceeded the declared bound {kappa_bound:.1e}; \
             result is best-effort",
            emb.kappa_observed
        ));
    }
    Ok((m, invariants, notes))
}

fn run_online_sample(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let a = load_matrix(cfg, seed)?;
    let rows: Vec<Vec64> = (0..a.nrows()).map(|i| a.row(i).transpose()).collect();
    let coreset = online_sample_stream(&rows, cfg.p, cfg.eps, seed, lib)?;
    let (sum, bound) = online_sensitivity_sum_check(&a, cfg.p, lib)?;
    let prefixes = important_prefixes(&rows, cfg.p, seed, lib)?;
    let ratio = quarter_property_ratio(&rows, &prefixes, cfg.p, 32, seed, lib);
    let (lo, hi) = lp_stretch(&a, &coreset.scaled_matrix(a.ncols()), cfg.p, 64, seed);

    let invariants = sum <= bound + 1e-9 && ratio >= 0.25 - 1e-9;
    let mut m = Metrics::new();
    m.insert("samples".into(), coreset.len() as f64);
    m.insert("sensitivity_sum".into(), sum);
    m.insert("sensitivity_bound".into(), bound);
    m.insert("prefixes".into(), prefixes.len() as f64);
    m.insert("quarter_ratio".into(), ratio);
    m.insert("stretch_lo".into(), lo);
    m.insert("stretch_hi".into(), hi);
    Ok((m, invariants, Vec::new()))
}

fn run_linf_coreset(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let a = load_matrix(cfg, seed)?;
    let k = cfg.k.max(1);
    let mut state = RidgeCoresetState::with_fast_path(a.ncols(), k, a.nrows(), seed, lib);
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..a.nrows() {
        if state.insert(&a.row(i).transpose()) {
            kept.push(i);
        }
    }
    let sol = linf_lra_solve(&state, k)?;
    let full_cost = max_subspace_distance(&a, &sol.basis);
    let certified = sol.certificate * sol.coreset_cost;
    let invariants = full_cost <= certified * (1.0 + 1e-9) + 1e-12;

    let mut m = Metrics::new();
    m.insert("coreset_size".into(), state.len() as f64);
    m.insert("lambda".into(), state.lambda());
    m.insert("kappa".into(), state.condition_number());
    m.insert("coreset_cost".into(), sol.coreset_cost);
    m.insert("certificate".into(), sol.certificate);
    m.insert("full_cost".into(), full_cost);
    m.insert("certified_bound".into(), certified);
    let mut notes = Vec::new();
    // The per-direction distortion audit solves one LP per stored row;
    // worth its cost only at desk scale.
    if a.nrows() <= 2000 && a.ncols() <= 64 {
        match crate::distortion::measure_distortion_linf(&a, &kept) {
            Ok(rep) => {
                m.insert("distortion_phi".into(), rep.phi);
                m.insert("distortion_rows".into(), rep.rows_measured as f64);
            }
            Err(e) => notes.push(format!("distortion audit skipped: {e}")),
        }
    }
    Ok((m, invariants, notes))
}

/// Sum of p-th-power distances of the rows of `a` to the span of `basis`.
fn lp_cost(a: &Mat, basis: &Mat, p: f64) -> f64 {
    let proj = basis * basis.transpose();
    let mut total = 0.0;
    for i in 0..a.nrows() {
        let r = a.row(i).transpose();
        let residual = &r - &proj * &r;
        total += residual.norm().powf(p);
    }
    total
}

fn run_lp_approx(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let a = load_matrix(cfg, seed)?;
    let k = cfg.k.max(1).min(a.ncols());
    let sol = lp_subspace_approx(&a, k, cfg.p, seed, lib)?;

    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut svd_basis = Mat::zeros(a.ncols(), k);
    for j in 0..k.min(v_t.nrows()) {
        svd_basis.set_column(j, &v_t.row(j).transpose());
    }
    let cost = lp_cost(&a, &sol.basis, cfg.p);
    let baseline = lp_cost(&a, &svd_basis, cfg.p);
    let gram = sol.basis.transpose() * &sol.basis;
    let orthonormal = (gram - Mat::identity(k, k)).norm() < 1e-6;

    let mut m = Metrics::new();
    m.insert("coreset_size".into(), sol.coreset_size as f64);
    m.insert("scale_max".into(), sol.scales.iter().cloned().fold(0.0, f64::max));
    m.insert(
        "scale_mean".into(),
        sol.scales.iter().sum::<f64>() / sol.scales.len().max(1) as f64,
    );
    m.insert("cost".into(), cost);
    m.insert("svd_cost".into(), baseline);
    m.insert("cost_ratio".into(), if baseline > 0.0 { cost / baseline } else { 1.0 });
    Ok((m, orthonormal, Vec::new()))
}

fn run_turnstile(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let updates = turnstile_stream(cfg, seed)?;
    let result = match cfg.t_rounds {
        Some(t) => n1t_tradeoff_embedding(&updates, cfg.m_bound, cfg.p, cfg.eps, t, seed, lib)?,
        None => multipass_dedup_embedding(&updates, cfg.m_bound, cfg.p, cfg.eps, seed, lib)?,
    };
    let exact = rows_to_matrix(&dedup_turnstile(&updates)?, cfg.d);
    let (lo, hi) = lp_stretch(&exact, &result.coreset.scaled_matrix(cfg.d), cfg.p, 64, seed);

    let nested = result
        .level_support
        .windows(2)
        .all(|w| w[0].iter().all(|e| w[1].binary_search(e).is_ok()));
    let t = result.plan.t;
    let invariants = nested && result.passes <= t + 1 + result.retries;

    let mut m = Metrics::new();
    m.insert("passes".into(), result.passes as f64);
    m.insert("retries".into(), result.retries as f64);
    m.insert("rounds".into(), t as f64);
    m.insert("samples".into(), result.coreset.len() as f64);
    m.insert("memory_words".into(), result.memory_units_peak as f64);
    m.insert("distinct".into(), exact.nrows() as f64);
    m.insert("stretch_lo".into(), lo);
    m.insert("stretch_hi".into(), hi);
    m.insert(
        "within_eps".into(),
        f64::from(u8::from(lo >= 1.0 - cfg.eps && hi <= 1.0 + cfg.eps)),
    );
    Ok((m, invariants, Vec::new()))
}

fn run_bounded(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let updates = turnstile_stream(cfg, seed)?;
    let sketch = bounded_entries_sketch(&updates, cfg.m_bound, cfg.eps, seed, lib)?;
    let freqs = rowsketch::stream::turnstile_frequencies(&updates)?;

    let mut rng = row_rng(mix2(seed, 106), 0);
    let mut worst = 0.0f64;
    let mut within = 0usize;
    let mut measured = 0usize;
    let mut zero_ok = true;
    for _ in 0..cfg.queries.max(1) {
        let x: Vec<i64> = (0..cfg.d).map(|_| rng.random_range(-3..=3)).collect();
        let exact: f64 = freqs
            .iter()
            .map(|(row, f)| {
                let dot: f64 = row.iter().zip(&x).map(|(&r, &xi)| r * xi as f64).sum();
                ((*f as f64) * dot).abs().powf(cfg.p)
            })
            .sum();
        let est = sketch.query(&x, cfg.p)?.estimate;
        if exact == 0.0 {
            if est != 0.0 {
                zero_ok = false;
            }
            continue;
        }
        measured += 1;
        let rel = (est - exact).abs() / exact;
        worst = worst.max(rel);
        if rel <= cfg.eps {
            within += 1;
        }
    }
    let zero_query = vec![0i64; cfg.d];
    if sketch.query(&zero_query, cfg.p)?.estimate != 0.0 {
        zero_ok = false;
    }

    let mut m = Metrics::new();
    m.insert("support_estimate".into(), sketch.support_estimate());
    m.insert("support_exact".into(), freqs.len() as f64);
    m.insert("queries_measured".into(), measured as f64);
    m.insert("max_rel_err".into(), worst);
    m.insert(
        "frac_within_eps".into(),
        if measured > 0 { within as f64 / measured as f64 } else { 1.0 },
    );
    Ok((m, zero_ok, Vec::new()))
}

fn run_robust(cfg: &ExperimentConfig, lib: &Config, seed: u64) -> Result<WorkerOut> {
    let stream = tagged_stream(cfg, seed)?;
    let run = robust_sensitivity_stream(
        &stream,
        cfg.p,
        cfg.copies.max(2),
        cfg.switch_factor,
        seed,
        lib,
    )?;
    let finite = run.zetas.iter().all(|z| z.is_finite() && *z >= 0.0);
    let ordered = run.switch_points.windows(2).all(|w| w[0] < w[1]);

    let mut m = Metrics::new();
    m.insert("switches".into(), run.switch_points.len() as f64);
    m.insert("degraded".into(), f64::from(u8::from(run.degraded)));
    m.insert(
        "zeta_max".into(),
        run.zetas.iter().cloned().fold(0.0, f64::max),
    );
    m.insert(
        "zeta_mean".into(),
        run.zetas.iter().sum::<f64>() / run.zetas.len().max(1) as f64,
    );
    Ok((m, finite && ordered, Vec::new()))
}
