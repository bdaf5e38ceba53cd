//! One-pass ℓp subspace embeddings for tagged streams with duplicates.
//!
//! The pipeline: a tag-keyed scaling matrix turns ℓp questions into ℓ∞
//! ones, a deterministic ℓ∞ coreset compresses the scaled prefix, per-row
//! importance estimates ζ_i come from a linear program against that
//! coreset, and a delete-then-sample store keeps at most one weighted row
//! per tag, so duplicates never inflate the sample. The surviving rows
//! approximate the deduplicated matrix, not the raw stream.
//!
//! Also here: the tag-aware alternate sampler, low-rank approximation
//! front ends (ℓp and Frobenius), and the sketch-switching robust
//! variant.

use std::collections::HashMap;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hashing::{default_independence, mix2, row_rng};
use crate::linalg::{stack_rows, PinvGram};
use crate::linf_embed::{hash_scaling, ScalingAssignment};
use crate::online::OnlinePrefixState;
use crate::sensitivity::{CoresetEntry, WeightedCoreset};
use crate::solvers::{min_linf_subject_linear, SolveStatus};
use crate::stream::TaggedRow;
use crate::{Mat, Vec64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Quadform value at or above which a row enters the ℓ∞ coreset. The
/// boundary accepts (a duplicate of a stored row can sit exactly at 1);
/// the small slack keeps that tie rule stable under roundoff.
const ACCEPT_THRESHOLD: f64 = 1.0 - 1e-9;

/// Deterministic online ℓ∞ subspace-sketch coreset: a row is kept iff it
/// leaves the current rowspace or some direction x has
/// ⟨row,x⟩² ≥ ‖A_S x‖₂² (checked as a pseudoinverse quadratic form).
/// Stored rows only ever accumulate, so ‖A_S x‖_∞ ≤ ‖Ax‖_∞ ≤
/// √|S| ‖A_S x‖_∞ holds deterministically for the full stream.
#[derive(Debug, Clone)]
pub struct LinfCoresetState {
    rows: Vec<Vec64>,
    gram: Mat,
    pg: PinvGram,
    d: usize,
    version: usize,
    cutoff: f64,
}

impl LinfCoresetState {
    pub fn new(d: usize, cfg: &Config) -> Self {
        let gram = Mat::zeros(d, d);
        let pg = PinvGram::from_gram(&gram, cfg.svd_cutoff);
        LinfCoresetState { rows: Vec::new(), gram, pg, d, version: 0, cutoff: cfg.svd_cutoff }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec64] {
        &self.rows
    }

    pub fn matrix(&self) -> Mat {
        stack_rows(&self.rows, self.d)
    }

    /// Bumps on every accepted row; callers use it to key caches.
    pub fn version(&self) -> usize {
        self.version
    }

    /// max_x ⟨row,x⟩² / ‖A_S x‖₂² for rows inside the current rowspace.
    pub fn quadform(&self, row: &Vec64) -> f64 {
        self.pg.quadform(row, 0.0)
    }

    fn accepts(&self, row: &Vec64) -> bool {
        if row.norm() == 0.0 {
            return false;
        }
        if !self.pg.in_rowspace(row, 1e-8) {
            return true;
        }
        self.quadform(row) >= ACCEPT_THRESHOLD
    }

    pub fn insert(&mut self, row: &Vec64) -> bool {
        assert_eq!(row.len(), self.d, "row dimension mismatch");
        if !self.accepts(row) {
            return false;
        }
        self.rows.push(row.clone());
        self.gram += row * row.transpose();
        self.pg = PinvGram::from_gram(&self.gram, self.cutoff);
        self.version += 1;
        true
    }
}

/// Spec-facing form of [`LinfCoresetState::insert`].
pub fn linf_coreset_insert(state: &mut LinfCoresetState, row: &Vec64) -> bool {
    state.insert(row)
}

/// Exact-duplicate registry: tags must identify bit-identical rows.
#[derive(Debug, Default)]
struct TagRegistry {
    first: HashMap<u64, Vec<f64>>,
}

impl TagRegistry {
    /// Returns true when the tag is new; errors on an inconsistent reuse.
    fn check(&mut self, tag: u64, row: &Vec64, position: usize) -> Result<bool> {
        match self.first.get(&tag) {
            Some(seen) => {
                let same = seen.len() == row.len()
                    && seen
                        .iter()
                        .zip(row.iter())
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Err(Error::TagInconsistency { tag, position });
                }
                Ok(false)
            }
            None => {
                self.first.insert(tag, row.iter().cloned().collect());
                Ok(true)
            }
        }
    }
}

/// Output of [`dedup_subspace_embedding`]: the weighted sample plus the
/// run's diagnostics. `positions[j]` is the stream index at which entry
/// j was drawn (always the tag's final occurrence).
#[derive(Debug, Clone)]
pub struct DedupEmbedding {
    pub coreset: WeightedCoreset,
    pub positions: Vec<usize>,
    pub sketch_size: usize,
    pub kappa_observed: f64,
    pub kappa_exceeded: bool,
    /// Sum over tags of the survival probability at the final occurrence.
    pub expected_size: f64,
    pub p: f64,
    pub eps: f64,
    pub kappa_bound: f64,
}

impl DedupEmbedding {
    /// JSON with a header {p, eps, seed, kappa_bound} and an entry array
    /// of {tag, weight, row}.
    pub fn to_json(&self) -> Result<String> {
        let entries: Vec<serde_json::Value> = self
            .coreset
            .entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "tag": e.tag,
                    "weight": e.weight,
                    "row": e.row.iter().cloned().collect::<Vec<f64>>(),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "header": {
                "p": self.p,
                "eps": self.eps,
                "seed": self.coreset.seed,
                "kappa_bound": self.kappa_bound,
            },
            "entries": entries,
        });
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// One pass over a tagged stream. Per element: derive the tag's scale,
/// feed the scaled row to the ℓ∞ coreset, price the row by an ℓ∞ linear
/// program against that coreset (ζ), drop any earlier sample with the
/// same tag, then keep the row with probability
/// min(1, C ε⁻² s d log d) where s = ζ · `sensitivity_inflation`.
/// Only a tag's final occurrence can survive.
pub fn dedup_subspace_embedding(
    stream: &[TaggedRow],
    p: f64,
    eps: f64,
    kappa_bound: f64,
    seed: u64,
    cfg: &Config,
) -> Result<DedupEmbedding> {
    let d = stream.first().map(|r| r.dim()).unwrap_or(0);
    let n_cap = (stream.len().max(2) as u64).next_power_of_two();
    let independence = default_independence(d.max(1), n_cap, cfg.delta);
    let scaling = hash_scaling(&[], p, independence, n_cap << 10, n_cap, seed)?;

    let mut registry = TagRegistry::default();
    let mut coreset = LinfCoresetState::new(d, cfg);
    let mut zeta_cache: HashMap<u64, f64> = HashMap::new();
    let mut store: HashMap<u64, (CoresetEntry, usize)> = HashMap::new();
    let mut last_probability: HashMap<u64, f64> = HashMap::new();
    let mut dedup_tracker = OnlinePrefixState::new(d, 2.0, cfg);

    let log_d = (d.max(2) as f64).ln();
    let rate = cfg.c1 * d as f64 * log_d / (eps * eps);

    for (i, elem) in stream.iter().enumerate() {
        if elem.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} entries, stream started with {d}",
                elem.dim()
            )));
        }
        let a = elem.as_dvector();
        let new_tag = registry.check(elem.tag, &a, i)?;
        if new_tag {
            dedup_tracker.push(&a)?;
        }

        let mult = scaling.multiplier_for_tag(elem.tag)?;
        let before = coreset.version();
        coreset.insert(&(&a * mult));
        if coreset.version() != before {
            zeta_cache.clear();
        }

        let zeta = match zeta_cache.get(&elem.tag) {
            Some(&z) => z,
            None => {
                let z = zeta_against_coreset(&coreset, &a, p, cfg);
                zeta_cache.insert(elem.tag, z);
                z
            }
        };

        let s = zeta * cfg.sensitivity_inflation;
        let pi = (rate * s).min(1.0);
        store.remove(&elem.tag);
        last_probability.insert(elem.tag, pi);
        if pi <= 0.0 {
            continue;
        }
        let mut rng = row_rng(seed, i as u64);
        if rng.random::<f64>() < pi {
            let entry = CoresetEntry {
                row: a,
                tag: Some(elem.tag),
                probability: pi,
                weight: pi.powf(-1.0 / p),
            };
            store.insert(elem.tag, (entry, i));
        }
    }

    let mut kept: Vec<(CoresetEntry, usize)> = store.into_values().collect();
    kept.sort_by_key(|(_, pos)| *pos);
    let (entries, positions): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
    let kappa_observed = dedup_tracker.condition_number();
    Ok(DedupEmbedding {
        coreset: WeightedCoreset { entries, p, seed },
        positions,
        sketch_size: coreset.len(),
        kappa_observed,
        kappa_exceeded: kappa_observed > kappa_bound,
        expected_size: last_probability.values().sum(),
        p,
        eps,
        kappa_bound,
    })
}

/// ζ = 1 / (min ‖Sx‖_∞ s.t. ⟨a,x⟩ = 1)^p against the coreset matrix S.
/// Zero rows price to 0; an unsolvable or degenerate program prices to
/// infinity (the row is then kept surely).
fn zeta_against_coreset(coreset: &LinfCoresetState, a: &Vec64, p: f64, cfg: &Config) -> f64 {
    if a.norm() == 0.0 {
        return 0.0;
    }
    if coreset.is_empty() {
        return f64::INFINITY;
    }
    let m = coreset.matrix();
    let r = min_linf_subject_linear(&m, a, cfg.lp_tol);
    match r.status {
        SolveStatus::Optimal | SolveStatus::ToleranceLimited if r.value > 1e-300 => {
            r.value.powf(-p)
        }
        SolveStatus::Infeasible => 0.0,
        _ => f64::INFINITY,
    }
}

/// Tag-aware importance sampler: prices each row against the current
/// sample store (not a coreset), deletes any previous sample with the
/// same tag, then redraws. Rates are α τ with α = C d log n / ε².
pub fn alternate_dedup_embedding(
    stream: &[TaggedRow],
    p: f64,
    eps: f64,
    seed: u64,
    cfg: &Config,
) -> Result<WeightedCoreset> {
    let d = stream.first().map(|r| r.dim()).unwrap_or(0);
    let n = stream.len();
    let alpha = cfg.alternate_alpha_c * d as f64 * (n.max(2) as f64).ln() / (eps * eps);

    let mut registry = TagRegistry::default();
    let mut store: HashMap<u64, CoresetEntry> = HashMap::new();
    // Weighted Gram of the current sample, kept incrementally; rebuilt
    // periodically to cancel drift from removals.
    let mut gram = Mat::zeros(d, d);
    let mut ops = 0usize;

    for (i, elem) in stream.iter().enumerate() {
        if elem.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} entries, stream started with {d}",
                elem.dim()
            )));
        }
        let a = elem.as_dvector();
        registry.check(elem.tag, &a, i)?;

        let tau = if a.norm() == 0.0 {
            0.0
        } else if store.is_empty() {
            1.0
        } else if p == 2.0 {
            let pg = PinvGram::from_gram(&gram, cfg.svd_cutoff);
            if pg.in_rowspace(&a, 1e-8) {
                pg.quadform(&a, 0.0).min(1.0)
            } else {
                1.0
            }
        } else {
            let rows: Vec<Vec64> = store.values().map(|e| &e.row * e.weight).collect();
            let m = stack_rows(&rows, d);
            let r = crate::solvers::min_lp_subject_linear(&m, &a, p, cfg.irls_rel_acc, cfg.svd_cutoff);
            match r.status {
                SolveStatus::Optimal | SolveStatus::ToleranceLimited if r.value > 0.0 => {
                    (1.0 / r.value.powf(p)).min(1.0)
                }
                _ => 1.0,
            }
        };

        if let Some(old) = store.remove(&elem.tag) {
            let w = &old.row * old.weight;
            gram -= &w * w.transpose();
            ops += 1;
        }
        let pi = (alpha * tau).min(1.0);
        if pi > 0.0 {
            let mut rng = row_rng(seed, i as u64);
            if rng.random::<f64>() < pi {
                let weight = pi.powf(-1.0 / p);
                let w = &a * weight;
                gram += &w * w.transpose();
                ops += 1;
                store.insert(
                    elem.tag,
                    CoresetEntry { row: a, tag: Some(elem.tag), probability: pi, weight },
                );
            }
        }
        if ops >= 512 {
            gram = Mat::zeros(d, d);
            for e in store.values() {
                let w = &e.row * e.weight;
                gram += &w * w.transpose();
            }
            ops = 0;
        }
    }

    let mut entries: Vec<CoresetEntry> = store.into_values().collect();
    entries.sort_by_key(|e| e.tag);
    Ok(WeightedCoreset { entries, p, seed })
}

/// Σ_i dist(a_i, rowspan(Q))^p for an orthonormal d×k factor Q.
pub fn rank_k_cost(a: &Mat, q: &Mat, p: f64) -> f64 {
    let proj = a * q * q.transpose();
    let resid = a - proj;
    (0..a.nrows()).map(|i| resid.row(i).norm().powf(p)).sum()
}

/// Best rank-k row space of weighted rows under the ℓp residual:
/// SVD for p = 2, otherwise iteratively reweighted SVD refinement.
fn lp_rank_k_subspace(w: &Mat, k: usize, p: f64) -> Mat {
    let d = w.ncols();
    let k = k.min(d);
    let top_k = |m: &Mat| -> Mat {
        let svd = m.clone().svd(false, true);
        let v_t = svd.v_t.expect("svd requested v_t");
        let mut q = Mat::zeros(d, k);
        for j in 0..k.min(v_t.nrows()) {
            q.set_column(j, &v_t.row(j).transpose());
        }
        q
    };
    let mut q = top_k(w);
    if p == 2.0 || w.nrows() == 0 {
        return q;
    }
    let mut mu = {
        let base: f64 =
            (0..w.nrows()).map(|i| (w.row(i) - w.row(i) * &q * q.transpose()).norm_squared()).sum();
        (base / w.nrows().max(1) as f64).max(1e-12)
    };
    for round in 0..40 {
        let mut scaled = w.clone();
        for i in 0..w.nrows() {
            let r2 = (w.row(i) - w.row(i) * &q * q.transpose()).norm_squared();
            let wi = (r2 + mu).powf((p - 2.0) / 4.0);
            let row = scaled.row(i) * wi;
            scaled.set_row(i, &row);
        }
        q = top_k(&scaled);
        if round % 10 == 9 {
            mu = (mu * 0.1).max(1e-14);
        }
    }
    q
}

/// Rank-k ℓp subspace approximation of the deduplicated matrix: sketch
/// rows with a sparse ±1 embedding (4k+8 columns), run the dedup
/// subspace embedding on the sketched stream, lift the surviving tags
/// back to their full rows, and refine a rank-k row space on the lifted
/// weighted rows. Returns an orthonormal d×k factor.
pub fn dedup_lp_lra(
    stream: &[TaggedRow],
    k: usize,
    p: f64,
    seed: u64,
    cfg: &Config,
) -> Result<Mat> {
    let d = stream.first().map(|r| r.dim()).unwrap_or(0);
    if k >= d {
        return Ok(Mat::identity(d, d));
    }
    let m = 4 * k + 8;
    // One ±1 per row of the d x m embedding.
    let mut r_embed = Mat::zeros(d, m);
    let mut rng = row_rng(seed, u64::MAX - 7);
    for row in 0..d {
        let col = rng.random_range(0..m);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        r_embed[(row, col)] = sign;
    }

    let mut full_rows: HashMap<u64, Vec64> = HashMap::new();
    let mut sketched = Vec::with_capacity(stream.len());
    for elem in stream {
        let a = elem.as_dvector();
        full_rows.entry(elem.tag).or_insert_with(|| a.clone());
        let s = (a.transpose() * &r_embed).transpose();
        sketched.push(TaggedRow::new(elem.tag, s.iter().cloned().collect()));
    }

    let emb = dedup_subspace_embedding(&sketched, p, cfg.eps, f64::INFINITY, seed, cfg)?;
    let mut lifted = Vec::with_capacity(emb.coreset.len());
    for e in &emb.coreset.entries {
        let tag = e.tag.expect("dedup entries carry tags");
        let full = full_rows.get(&tag).expect("sampled tag was seen in the stream");
        lifted.push(full * e.weight);
    }
    let w = stack_rows(&lifted, d);
    Ok(lp_rank_k_subspace(&w, k, p))
}

/// Near-optimal Frobenius rank-k factor for the deduplicated matrix:
/// compress columns with a Gaussian sketch, sample first-occurrence rows
/// by online leverage of the sketched part, then solve the small
/// regression min over rank-k X of ‖B X − C‖_F and return the row space
/// of the minimizer. Output is an orthonormal d×k factor.
pub fn dedup_frobenius_lra(
    stream: &[TaggedRow],
    k: usize,
    eps: f64,
    seed: u64,
    cfg: &Config,
) -> Result<Mat> {
    let d = stream.first().map(|r| r.dim()).unwrap_or(0);
    if k >= d {
        return Ok(Mat::identity(d, d));
    }
    let d_sketch = ((cfg.frob_sketch_c * k as f64 / (eps * eps)).ceil() as usize).clamp(k + 1, d);
    let mut rng = row_rng(seed, u64::MAX - 11);
    let g = Mat::from_fn(d, d_sketch, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z / (d_sketch as f64).sqrt()
    });

    let mut registry = TagRegistry::default();
    let mut tracker = OnlinePrefixState::new(d_sketch, 2.0, cfg);
    let n = stream.len();
    let rate = cfg.c1 * (cfg.c2 * d_sketch as f64 * (d_sketch as f64).ln() + (n.max(2) as f64).ln())
        / (eps * eps);
    let mut sketched_kept: Vec<Vec64> = Vec::new();
    let mut full_kept: Vec<Vec64> = Vec::new();
    for (i, elem) in stream.iter().enumerate() {
        let a = elem.as_dvector();
        if !registry.check(elem.tag, &a, i)? {
            continue;
        }
        let ag = (a.transpose() * &g).transpose();
        let tau = tracker.push(&ag)?;
        let pi = (rate * tau).min(1.0);
        if pi <= 0.0 {
            continue;
        }
        let mut rng = row_rng(seed, i as u64);
        if rng.random::<f64>() < pi {
            let w = pi.powf(-0.5);
            sketched_kept.push(&ag * w);
            full_kept.push(&a * w);
        }
    }

    let b = stack_rows(&sketched_kept, d_sketch);
    let c = stack_rows(&full_kept, d);
    // Best rank-k X for ‖BX - C‖_F: project C onto colspace(B), truncate.
    let svd_b = b.clone().svd(true, false);
    let u = svd_b.u.expect("svd requested u");
    let rank = svd_b
        .singular_values
        .iter()
        .filter(|&&s| s > cfg.svd_cutoff * svd_b.singular_values.max())
        .count();
    let u_r = u.columns(0, rank.min(u.ncols())).into_owned();
    let projected = &u_r * (u_r.transpose() * &c);
    Ok(lp_rank_k_subspace(&projected, k, 2.0))
}

/// Result of the sketch-switching robust run.
#[derive(Debug, Clone)]
pub struct RobustRun {
    /// Importance estimate emitted for every stream element, answered by
    /// the sketch that was active at that point.
    pub zetas: Vec<f64>,
    /// Stream positions where the active sketch was retired.
    pub switch_points: Vec<usize>,
    /// True once every spare sketch was consumed.
    pub degraded: bool,
}

/// Runs `copies` independent scaling/coreset pairs over the stream. All
/// pairs ingest every element; only the active one answers, from its
/// current coreset. Its activation-time matrix is kept as a staleness
/// reference: once the standby's fresh norms outgrow that reference by
/// `switch_factor` on any stored direction, the answers the adversary
/// has seen are considered burned and the standby takes over.
pub fn robust_sensitivity_stream(
    stream: &[TaggedRow],
    p: f64,
    copies: usize,
    switch_factor: f64,
    seed: u64,
    cfg: &Config,
) -> Result<RobustRun> {
    if copies < 2 {
        return Err(Error::InvalidArgument("need at least 2 sketch copies".into()));
    }
    let d = stream.first().map(|r| r.dim()).unwrap_or(0);
    let n_cap = (stream.len().max(2) as u64).next_power_of_two();
    let independence = default_independence(d.max(1), n_cap, cfg.delta);
    let scalings: Vec<ScalingAssignment> = (0..copies)
        .map(|j| hash_scaling(&[], p, independence, n_cap << 10, n_cap, mix2(seed, j as u64)))
        .collect::<Result<_>>()?;
    let mut coresets: Vec<LinfCoresetState> =
        (0..copies).map(|_| LinfCoresetState::new(d, cfg)).collect();

    let mut registry = TagRegistry::default();
    let mut active = 0usize;
    let mut snapshot = Mat::zeros(0, d);
    let mut zetas = Vec::with_capacity(stream.len());
    let mut switch_points = Vec::new();
    let mut degraded = false;

    for (i, elem) in stream.iter().enumerate() {
        let a = elem.as_dvector();
        registry.check(elem.tag, &a, i)?;
        for (j, state) in coresets.iter_mut().enumerate() {
            let mult = scalings[j].multiplier_for_tag(elem.tag)?;
            state.insert(&(&a * mult));
        }

        if snapshot.nrows() == 0 && !coresets[active].is_empty() {
            snapshot = coresets[active].matrix();
        }
        if active + 1 < copies {
            let standby = coresets[active + 1].matrix();
            if norms_outgrew(&standby, &snapshot, switch_factor) {
                active += 1;
                snapshot = coresets[active].matrix();
                switch_points.push(i);
                if active + 1 >= copies {
                    degraded = true;
                }
            }
        }

        zetas.push(zeta_against_matrix(&coresets[active].matrix(), &a, p, cfg));
    }
    Ok(RobustRun { zetas, switch_points, degraded })
}

/// True when some stored direction x (a normalized row of either matrix)
/// has ‖standby · x‖_∞ > factor · ‖frozen · x‖_∞.
fn norms_outgrew(standby: &Mat, frozen: &Mat, factor: f64) -> bool {
    if standby.nrows() == 0 {
        return false;
    }
    if frozen.nrows() == 0 {
        return true;
    }
    let mut directions: Vec<Vec64> = Vec::with_capacity(standby.nrows() + frozen.nrows());
    for i in 0..standby.nrows() {
        directions.push(standby.row(i).transpose());
    }
    for i in 0..frozen.nrows() {
        directions.push(frozen.row(i).transpose());
    }
    for x in &directions {
        let nx = x.norm();
        if nx == 0.0 {
            continue;
        }
        let xn = x / nx;
        let grown = (standby * &xn).amax();
        let held = (frozen * &xn).amax();
        if grown > factor * held {
            return true;
        }
    }
    false
}

fn zeta_against_matrix(m: &Mat, a: &Vec64, p: f64, cfg: &Config) -> f64 {
    if a.norm() == 0.0 {
        return 0.0;
    }
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let r = min_linf_subject_linear(m, a, cfg.lp_tol);
    match r.status {
        SolveStatus::Optimal | SolveStatus::ToleranceLimited if r.value > 1e-300 => {
            r.value.powf(-p)
        }
        SolveStatus::Infeasible => 0.0,
        _ => f64::INFINITY,
    }
}
