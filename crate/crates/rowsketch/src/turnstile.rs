//! Linear sketches for turnstile streams (insertions and deletions) and the
//! multipass sensitivity-sampling embedding built on top of them.
//!
//! Rows live in `{-M,..,M}^d` and are indexed by a base-(2M+1) encoding, so
//! every sketch is a linear function of the net frequency vector over the
//! virtual index space `[N]`, `N = (2M+1)^d`. The index space is never
//! materialized; all arithmetic goes through [`RowEncoder`] on demand.
//!
//! Hash functions are seeded k-wise families standing in for the fully
//! random functions assumed by the analysis (a PRG substitute; see the
//! DESIGN notes on the individual types).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hashing::{mix2, HashFamily};
use crate::linalg::PinvGram;
use crate::{Mat, Vec64};
use crate::sensitivity::{CoresetEntry, WeightedCoreset};
use crate::solvers::{min_lp_subject_linear, SolveStatus};
use crate::stream::TurnstileUpdate;

use rand::Rng;

/// Independence used by every internal hash family.
const HASH_K: usize = 16;
/// Count-sketch rows per sparse-recovery level.
const RECOVERY_ROWS: usize = 3;
/// Sparsity of a standalone L0 sampler (per-level recoverable support).
const SAMPLER_SPARSITY: usize = 8;
/// Sparsity of the per-bucket pools used by the multipass engine.
const BUCKET_SPARSITY: usize = 64;
/// Internal accuracy of the L0 estimates driving bucket selection: the
/// sampling-probability formula consumes a (9/10, 11/10) estimate.
const EST_EPS: f64 = 0.1;
/// Occupancy fraction above which an estimator level is considered saturated.
const EST_OCCUPANCY_CAP: f64 = 0.6;
/// Fresh-seed retries on sparse-recovery overflow before giving up.
const MAX_RETRIES: usize = 3;

fn fold128(x: u128) -> u64 {
    mix2(x as u64, (x >> 64) as u64)
}

fn unit_u64(h: u64) -> f64 {
    (h as f64) / (u64::MAX as f64 + 1.0)
}

/// Bijection between `{-M,..,M}^d` and `[0, (2M+1)^d)`, little-endian in the
/// coordinates. Construction fails when the domain does not fit in `u128`.
#[derive(Debug, Clone)]
pub struct RowEncoder {
    m: i64,
    d: usize,
    base: u128,
    domain: u128,
}

impl RowEncoder {
    pub fn new(m: i64, d: usize) -> Result<Self> {
        if m < 0 || d == 0 {
            return Err(Error::InvalidArgument(
                "row encoder needs M >= 0 and d >= 1".into(),
            ));
        }
        let base = 2u128 * (m as u128) + 1;
        let mut domain: u128 = 1;
        for _ in 0..d {
            domain = domain.checked_mul(base).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "encoding domain (2*{m}+1)^{d} exceeds u128"
                ))
            })?;
        }
        Ok(RowEncoder { m, d, base, domain })
    }

    pub fn bound(&self) -> i64 {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of encodable rows, `(2M+1)^d`.
    pub fn domain(&self) -> u128 {
        self.domain
    }

    pub fn encode(&self, row: &[i64]) -> Result<u128> {
        if row.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "row has {} entries, encoder expects {}",
                row.len(),
                self.d
            )));
        }
        let mut idx: u128 = 0;
        let mut scale: u128 = 1;
        for (j, &v) in row.iter().enumerate() {
            if v < -self.m || v > self.m {
                return Err(Error::InvalidArgument(format!(
                    "entry {v} at coordinate {j} outside [-{m}, {m}]",
                    m = self.m
                )));
            }
            idx += ((v + self.m) as u128) * scale;
            if j + 1 < self.d {
                scale *= self.base;
            }
        }
        Ok(idx)
    }

    pub fn decode(&self, mut idx: u128) -> Vec<i64> {
        let mut row = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            let digit = (idx % self.base) as i64;
            row.push(digit - self.m);
            idx /= self.base;
        }
        row
    }

    /// Converts a float row from the stream types, requiring exact integers
    /// within the bound.
    pub fn row_to_ints(&self, row: &[f64]) -> Result<Vec<i64>> {
        if row.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "row has {} entries, encoder expects {}",
                row.len(),
                self.d
            )));
        }
        let mut out = Vec::with_capacity(self.d);
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "entry {v} at coordinate {j} is not an integer"
                )));
            }
            out.push(v as i64);
        }
        Ok(out)
    }
}

fn levels_for_domain(domain: u128) -> usize {
    let bits = 128 - domain.leading_zeros() as usize;
    (bits + 2).min(64).max(4)
}

/// One linear register: net count, wrapping index-weighted count and a
/// wrapping fingerprint. All three are linear in the updates mod 2^64/2^128,
/// so merging sketches is exact addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Cell {
    count: i64,
    isum: u128,
    fp: u64,
}

impl Cell {
    fn apply(&mut self, idx: u128, delta: i64, fphash: u64) {
        self.count = self.count.wrapping_add(delta);
        let du = delta as u128;
        self.isum = self.isum.wrapping_add(idx.wrapping_mul(du));
        self.fp = self.fp.wrapping_add(fphash.wrapping_mul(delta as u64));
    }

    fn merge(&mut self, other: &Cell) {
        self.count = self.count.wrapping_add(other.count);
        self.isum = self.isum.wrapping_add(other.isum);
        self.fp = self.fp.wrapping_add(other.fp);
    }

    fn is_zero(&self) -> bool {
        self.count == 0 && self.isum == 0 && self.fp == 0
    }

    /// Fingerprint-verified singleton extraction. Wrapped garbage from
    /// collisions fails the fingerprint check with high probability.
    fn singleton(&self, domain: u128, fp_hash: &HashFamily) -> Option<(u128, i64)> {
        if self.count == 0 {
            return None;
        }
        let mag = if self.count < 0 {
            self.isum.wrapping_neg()
        } else {
            self.isum
        };
        let cu = self.count.unsigned_abs() as u128;
        if cu == 0 || mag % cu != 0 {
            return None;
        }
        let cand = mag / cu;
        if cand >= domain {
            return None;
        }
        let expect = fp_hash
            .eval(fold128(cand))
            .wrapping_mul(self.count as u64);
        if expect != self.fp {
            return None;
        }
        Some((cand, self.count))
    }
}

/// s-sparse recovery: `RECOVERY_ROWS` hashed rows of linear cells with
/// fingerprints, decoded by peeling verified singletons. Returns the exact
/// frequency multiset or `None` on overflow.
#[derive(Debug, Clone)]
pub(crate) struct SparseRecovery {
    buckets: usize,
    domain: u128,
    seed: u64,
    cells: Vec<Cell>,
    row_hash: Vec<HashFamily>,
    fp_hash: HashFamily,
}

impl PartialEq for SparseRecovery {
    fn eq(&self, other: &Self) -> bool {
        self.buckets == other.buckets
            && self.domain == other.domain
            && self.seed == other.seed
            && self.cells == other.cells
    }
}

impl SparseRecovery {
    pub(crate) fn new(buckets: usize, domain: u128, seed: u64) -> Self {
        let row_hash = (0..RECOVERY_ROWS)
            .map(|r| HashFamily::new(HASH_K, mix2(seed, 0x5EC0 + r as u64)))
            .collect();
        SparseRecovery {
            buckets,
            domain,
            seed,
            cells: vec![Cell::default(); RECOVERY_ROWS * buckets],
            row_hash,
            fp_hash: HashFamily::new(HASH_K, mix2(seed, 0xF1D0)),
        }
    }

    pub(crate) fn cells_len(&self) -> usize {
        self.cells.len()
    }

    pub(crate) fn update(&mut self, idx: u128, delta: i64) {
        let f = fold128(idx);
        let fph = self.fp_hash.eval(f);
        for r in 0..RECOVERY_ROWS {
            let b = (self.row_hash[r].eval_in(f, self.buckets as u64) - 1) as usize;
            self.cells[r * self.buckets + b].apply(idx, delta, fph);
        }
    }

    pub(crate) fn merge(&mut self, other: &SparseRecovery) -> Result<()> {
        if self.buckets != other.buckets || self.domain != other.domain || self.seed != other.seed
        {
            return Err(Error::InvalidArgument(
                "cannot merge sparse recoveries with different shapes or seeds".into(),
            ));
        }
        for (c, o) in self.cells.iter_mut().zip(other.cells.iter()) {
            c.merge(o);
        }
        Ok(())
    }

    /// Peels verified singletons until the residual is empty. `None` means
    /// the support exceeded capacity (or an unlucky hash round); callers
    /// retry with a fresh seed or fall through to a sparser level.
    pub(crate) fn recover(&self) -> Option<Vec<(u128, i64)>> {
        let mut cells = self.cells.clone();
        let mut out: BTreeMap<u128, i64> = BTreeMap::new();
        let mut rounds = 0usize;
        loop {
            if cells.iter().all(Cell::is_zero) {
                return Some(out.into_iter().filter(|&(_, f)| f != 0).collect());
            }
            rounds += 1;
            if rounds > 2 * self.buckets + 8 {
                return None;
            }
            let mut progressed = false;
            for r in 0..RECOVERY_ROWS {
                for b in 0..self.buckets {
                    let cell = cells[r * self.buckets + b];
                    let Some((idx, freq)) = cell.singleton(self.domain, &self.fp_hash) else {
                        continue;
                    };
                    let f = fold128(idx);
                    let fph = self.fp_hash.eval(f);
                    for rr in 0..RECOVERY_ROWS {
                        let bb =
                            (self.row_hash[rr].eval_in(f, self.buckets as u64) - 1) as usize;
                        cells[rr * self.buckets + bb].apply(idx, -freq, fph);
                    }
                    *out.entry(idx).or_insert(0) += freq;
                    progressed = true;
                }
            }
            if !progressed {
                return None;
            }
        }
    }
}

/// Streaming distinct-row counter: geometric subsampling levels, each a row
/// of hashed registers holding (net count, fingerprint). Occupancy at the
/// first unsaturated level inverts to a (1 +/- eps) support estimate.
#[derive(Debug, Clone)]
pub struct L0EstimatorSketch {
    seed: u64,
    eps: f64,
    k_cells: usize,
    levels: usize,
    counts: Vec<i64>,
    fps: Vec<u64>,
    level_hash: HashFamily,
    cell_hash: HashFamily,
    fp_hash: HashFamily,
}

impl PartialEq for L0EstimatorSketch {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.eps == other.eps
            && self.k_cells == other.k_cells
            && self.levels == other.levels
            && self.counts == other.counts
            && self.fps == other.fps
    }
}

impl L0EstimatorSketch {
    pub fn new(eps: f64, domain: u128, seed: u64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(
                "L0 estimator needs 0 < eps < 1".into(),
            ));
        }
        let k_cells = ((16.0 / (eps * eps)).ceil() as usize).max(16);
        let levels = levels_for_domain(domain);
        Ok(L0EstimatorSketch {
            seed,
            eps,
            k_cells,
            levels,
            counts: vec![0; k_cells * levels],
            fps: vec![0; k_cells * levels],
            level_hash: HashFamily::new(HASH_K, mix2(seed, 0x11)),
            cell_hash: HashFamily::new(HASH_K, mix2(seed, 0x22)),
            fp_hash: HashFamily::new(HASH_K, mix2(seed, 0x33)),
        })
    }

    pub fn cells_len(&self) -> usize {
        self.counts.len()
    }

    pub fn update(&mut self, idx: u128, delta: i64) {
        let f = fold128(idx);
        let depth = (self.level_hash.eval(f).trailing_zeros() as usize).min(self.levels - 1);
        let fph = self.fp_hash.eval(f);
        for level in 0..=depth {
            let c =
                (self.cell_hash.eval_in(mix2(f, level as u64), self.k_cells as u64) - 1) as usize;
            let at = level * self.k_cells + c;
            self.counts[at] = self.counts[at].wrapping_add(delta);
            self.fps[at] = self.fps[at].wrapping_add(fph.wrapping_mul(delta as u64));
        }
    }

    /// Support-size estimate. Exact 0 on the empty sketch and exact 1 on a
    /// singleton support; otherwise (1 +/- eps) with the usual failure
    /// probability.
    pub fn estimate(&self) -> f64 {
        let per_cell = (1.0 - 1.0 / self.k_cells as f64).ln();
        let mut last = 0.0;
        for level in 0..self.levels {
            let occ = (0..self.k_cells)
                .filter(|&c| {
                    let at = level * self.k_cells + c;
                    self.counts[at] != 0 || self.fps[at] != 0
                })
                .count();
            if occ == 0 {
                if level == 0 {
                    return 0.0;
                }
                return last;
            }
            let m_hat = (1.0 - occ as f64 / self.k_cells as f64).ln() / per_cell;
            last = m_hat * (1u64 << level.min(63)) as f64;
            if (occ as f64) <= EST_OCCUPANCY_CAP * self.k_cells as f64 {
                return last;
            }
        }
        last
    }

    pub fn merge(&mut self, other: &L0EstimatorSketch) -> Result<()> {
        if self.seed != other.seed
            || self.k_cells != other.k_cells
            || self.levels != other.levels
        {
            return Err(Error::InvalidArgument(
                "cannot merge L0 estimators with different seeds or shapes".into(),
            ));
        }
        for (c, o) in self.counts.iter_mut().zip(other.counts.iter()) {
            *c = c.wrapping_add(*o);
        }
        for (f, o) in self.fps.iter_mut().zip(other.fps.iter()) {
            *f = f.wrapping_add(*o);
        }
        Ok(())
    }

    /// Little-endian versioned blob: magic, version, seed, eps, shape,
    /// registers. Bit-exact round trip.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 16 * self.counts.len());
        out.extend_from_slice(b"RSL0");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.eps.to_le_bytes());
        out.extend_from_slice(&(self.k_cells as u64).to_le_bytes());
        out.extend_from_slice(&(self.levels as u64).to_le_bytes());
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for f in &self.fps {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::InvalidArgument("malformed L0 estimator blob".into());
        if bytes.len() < 38 || &bytes[0..4] != b"RSL0" {
            return Err(bad());
        }
        let ver = u16::from_le_bytes(bytes[4..6].try_into().map_err(|_| bad())?);
        if ver != 1 {
            return Err(Error::InvalidArgument(format!(
                "unsupported L0 estimator blob version {ver}"
            )));
        }
        let seed = u64::from_le_bytes(bytes[6..14].try_into().map_err(|_| bad())?);
        let eps = f64::from_le_bytes(bytes[14..22].try_into().map_err(|_| bad())?);
        let k_cells = u64::from_le_bytes(bytes[22..30].try_into().map_err(|_| bad())?) as usize;
        let levels = u64::from_le_bytes(bytes[30..38].try_into().map_err(|_| bad())?) as usize;
        let n = k_cells
            .checked_mul(levels)
            .filter(|&n| n > 0 && bytes.len() == 38 + 16 * n)
            .ok_or_else(bad)?;
        let mut counts = Vec::with_capacity(n);
        let mut fps = Vec::with_capacity(n);
        let mut at = 38;
        for _ in 0..n {
            counts.push(i64::from_le_bytes(bytes[at..at + 8].try_into().map_err(|_| bad())?));
            at += 8;
        }
        for _ in 0..n {
            fps.push(u64::from_le_bytes(bytes[at..at + 8].try_into().map_err(|_| bad())?));
            at += 8;
        }
        Ok(L0EstimatorSketch {
            seed,
            eps,
            k_cells,
            levels,
            counts,
            fps,
            level_hash: HashFamily::new(HASH_K, mix2(seed, 0x11)),
            cell_hash: HashFamily::new(HASH_K, mix2(seed, 0x22)),
            fp_hash: HashFamily::new(HASH_K, mix2(seed, 0x33)),
        })
    }
}

/// Draws a near-uniform member of the support of the net frequency vector.
/// Geometric levels subsample the index space; the first level whose
/// recovery succeeds yields its minimum-rank member. Every returned index
/// carries its exact net frequency (zero relative error).
#[derive(Debug, Clone)]
pub struct L0SamplerSketch {
    seed: u64,
    domain: u128,
    levels: Vec<SparseRecovery>,
    level_hash: HashFamily,
    rank_hash: HashFamily,
}

impl PartialEq for L0SamplerSketch {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.domain == other.domain && self.levels == other.levels
    }
}

impl L0SamplerSketch {
    pub fn new(domain: u128, seed: u64) -> Self {
        Self::with_sparsity(domain, seed, SAMPLER_SPARSITY)
    }

    pub(crate) fn with_sparsity(domain: u128, seed: u64, s: usize) -> Self {
        let n_levels = levels_for_domain(domain);
        let levels = (0..n_levels)
            .map(|l| SparseRecovery::new(4 * s, domain, mix2(seed, 0xA0 + l as u64)))
            .collect();
        L0SamplerSketch {
            seed,
            domain,
            levels,
            level_hash: HashFamily::new(HASH_K, mix2(seed, 0x44)),
            rank_hash: HashFamily::new(HASH_K, mix2(seed, 0x55)),
        }
    }

    pub fn cells_len(&self) -> usize {
        self.levels.iter().map(SparseRecovery::cells_len).sum()
    }

    pub fn update(&mut self, idx: u128, delta: i64) {
        let f = fold128(idx);
        let depth =
            (self.level_hash.eval(f).trailing_zeros() as usize).min(self.levels.len() - 1);
        for level in 0..=depth {
            self.levels[level].update(idx, delta);
        }
    }

    pub fn merge(&mut self, other: &L0SamplerSketch) -> Result<()> {
        if self.seed != other.seed
            || self.domain != other.domain
            || self.levels.len() != other.levels.len()
        {
            return Err(Error::InvalidArgument(
                "cannot merge L0 samplers with different seeds or shapes".into(),
            ));
        }
        for (l, o) in self.levels.iter_mut().zip(other.levels.iter()) {
            l.merge(o)?;
        }
        Ok(())
    }

    /// Recovered items at the densest decodable level. Level 0 holds the
    /// whole support, level l a 2^-l subsample; an empty recovered level
    /// implies all sparser levels are empty too.
    pub(crate) fn recovered_pool(&self) -> Option<Vec<(u128, i64)>> {
        for level in &self.levels {
            match level.recover() {
                Some(items) => return Some(items),
                None => continue,
            }
        }
        None
    }

    /// `None` is the FAIL outcome: empty support or every level overflowed.
    pub fn sample(&self) -> Option<(u128, i64)> {
        let pool = self.recovered_pool()?;
        pool.into_iter()
            .filter(|&(_, f)| f != 0)
            .min_by_key(|&(idx, _)| (self.rank_hash.eval(fold128(idx)), idx))
    }
}

fn tau_against(m_mat: &Mat, pg: Option<&PinvGram>, row: &Vec64, p: f64, cfg: &Config) -> f64 {
    if row.norm() == 0.0 {
        return 0.0;
    }
    if m_mat.nrows() == 0 {
        return 1.0;
    }
    if p == 2.0 {
        let pg = pg.expect("gram pseudoinverse prepared for p=2");
        if !pg.in_rowspace(row, 1e-8) {
            return 1.0;
        }
        return pg.quadform(row, 0.0).min(1.0).max(0.0);
    }
    let r = min_lp_subject_linear(m_mat, row, p, cfg.irls_rel_acc, cfg.svd_cutoff);
    match r.status {
        SolveStatus::Optimal | SolveStatus::ToleranceLimited => {
            if r.value > 1e-12 {
                (1.0 / r.value.powf(p)).min(1.0)
            } else {
                1.0
            }
        }
        _ => 1.0,
    }
}

/// Result of the offline recursive sampler: the coreset, the recursion
/// depth above the base case, and the top-level scores tau^{M_S} per row
/// (empty when the call bottomed out in the base case).
#[derive(Debug, Clone)]
pub struct RecursiveSample {
    pub coreset: WeightedCoreset,
    pub depth: usize,
    pub top_scores: Vec<f64>,
}

/// Offline recursive sensitivity sampling: small inputs return verbatim,
/// larger ones score every row against a coreset of a random half and keep
/// rows with probability proportional to that score. The half-sample scores
/// dominate the true lp sensitivities, so the union bound goes through with
/// the same budget as the offline sampler.
pub fn recursive_lp_sampling(
    a: &Mat,
    p: f64,
    eps: f64,
    seed: u64,
    cfg: &Config,
) -> Result<RecursiveSample> {
    if p < 1.0 {
        return Err(Error::InvalidArgument("recursive sampler needs p >= 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("recursive sampler needs eps > 0".into()));
    }
    let indices: Vec<usize> = (0..a.nrows()).collect();
    let (entries, depth, top_scores) = recurse(a, &indices, p, eps, seed, 0, cfg)?;
    Ok(RecursiveSample {
        coreset: WeightedCoreset { entries, p, seed },
        depth,
        top_scores,
    })
}

fn recurse(
    a: &Mat,
    indices: &[usize],
    p: f64,
    eps: f64,
    seed: u64,
    depth: usize,
    cfg: &Config,
) -> Result<(Vec<CoresetEntry>, usize, Vec<f64>)> {
    let d = a.ncols();
    let n = indices.len();
    if n <= cfg.recursive_base(d) {
        let entries = indices
            .iter()
            .map(|&i| CoresetEntry {
                row: a.row(i).transpose(),
                tag: Some(i as u64),
                probability: 1.0,
                weight: 1.0,
            })
            .collect();
        return Ok((entries, 0, Vec::new()));
    }
    let mut half: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| {
            crate::hashing::row_rng(mix2(seed, 0xA1F0 ^ depth as u64), i as u64)
                .random::<f64>()
                < 0.5
        })
        .collect();
    if half.len() == n {
        half.pop();
    }
    let (sub_entries, sub_depth, _) = recurse(a, &half, p, eps, seed, depth + 1, cfg)?;
    let sub = WeightedCoreset {
        entries: sub_entries,
        p,
        seed,
    };
    let m_mat = sub.scaled_matrix(d);
    let pg = (p == 2.0).then(|| {
        PinvGram::from_gram(&(m_mat.transpose() * &m_mat), cfg.svd_cutoff)
    });
    let rate = cfg.recursive_sample_c
        * (d as f64 * (d.max(2) as f64).ln() + (n.max(2) as f64).ln())
        / (eps * eps);
    let mut entries = Vec::new();
    let mut scores = Vec::with_capacity(n);
    for &i in indices {
        let row = a.row(i).transpose();
        let tau = tau_against(&m_mat, pg.as_ref(), &row, p, cfg);
        scores.push(tau);
        let pi = (rate * tau).min(1.0);
        if pi <= 0.0 {
            continue;
        }
        let coin = crate::hashing::row_rng(mix2(seed, 0xC010 ^ depth as u64), i as u64)
            .random::<f64>();
        if coin < pi {
            entries.push(CoresetEntry {
                row,
                tag: Some(i as u64),
                probability: pi,
                weight: pi.powf(-1.0 / p),
            });
        }
    }
    Ok((entries, sub_depth + 1, scores))
}

/// Level membership for the multipass chain. A single uniform hash per row
/// realizes the nested sets: row i is in S_j iff u(i) < rho^(t-j+1), the
/// same joint law as t independent retention coins read from level t down.
#[derive(Debug, Clone)]
pub struct MultipassPlan {
    pub t: usize,
    pub rho: f64,
    pub seed: u64,
    member_hash: HashFamily,
}

impl MultipassPlan {
    fn new(t: usize, rho: f64, seed: u64) -> Self {
        MultipassPlan {
            t,
            rho,
            seed,
            member_hash: HashFamily::new(HASH_K, mix2(seed, 0x6E57)),
        }
    }

    pub fn in_level(&self, enc: u128, j: usize) -> bool {
        debug_assert!(j >= 1 && j <= self.t);
        let u = unit_u64(self.member_hash.eval(fold128(enc)));
        u < self.rho.powi((self.t - j + 1) as i32)
    }
}

/// Output of the multipass engine with its resource counters and the
/// diagnostics the chain invariants are asserted on.
#[derive(Debug, Clone)]
pub struct MultipassResult {
    pub coreset: WeightedCoreset,
    pub plan: MultipassPlan,
    /// Full passes over the update stream, including recovery retries.
    pub passes: usize,
    /// Fresh-seed recovery retries that were needed.
    pub retries: usize,
    /// Peak sketch plus row storage, in 8-byte words (diagnostic sets and
    /// the oracle-facing traces are not counted).
    pub memory_units_peak: usize,
    /// Realized level supports S_1..S_t (sorted encodings), for the
    /// nested-subset assertions.
    pub level_support: Vec<Vec<u128>>,
    /// (level j, bucket, tau) of every row sampled into an intermediate
    /// coreset, for the dyadic bucket-membership assertions.
    pub bucket_trace: Vec<(usize, usize, f64)>,
}

/// Dyadic bucket of a score: 0 holds tau = 1, bucket l >= 1 holds
/// [2^-l, 2^-l+1), and everything below the last interval is lumped there.
pub fn bucket_of(tau: f64, buckets: usize) -> usize {
    if tau >= 1.0 {
        return 0;
    }
    let l = (-tau.log2()).ceil() as usize;
    l.max(1).min(buckets - 1)
}

struct EngineState {
    mem_now: usize,
    mem_peak: usize,
}

impl EngineState {
    fn alloc(&mut self, units: usize) {
        self.mem_now += units;
        self.mem_peak = self.mem_peak.max(self.mem_now);
    }

    fn free(&mut self, units: usize) {
        self.mem_now = self.mem_now.saturating_sub(units);
    }
}

/// Multipass turnstile subspace embedding with the default level count
/// t = ceil(log2 n): recovers the first level exactly, grows coresets up
/// the nested chain with bucketed L0 draws, then threshold-samples the
/// whole stream against the last coreset.
pub fn multipass_dedup_embedding(
    updates: &[TurnstileUpdate],
    m_bound: i64,
    p: f64,
    eps: f64,
    seed: u64,
    cfg: &Config,
) -> Result<MultipassResult> {
    let n_eff = updates.len().max(2) as f64;
    let t = n_eff.log2().ceil() as usize;
    run_engine(updates, m_bound, p, eps, t.max(1), seed, cfg)
}

/// Same engine with a caller-chosen round count t: per-level retention is
/// n^(-1/t), trading passes for the memory reported in the result. t = 1
/// degenerates to a single exact-recovery pass over all distinct rows.
pub fn n1t_tradeoff_embedding(
    updates: &[TurnstileUpdate],
    m_bound: i64,
    p: f64,
    eps: f64,
    t: usize,
    seed: u64,
    cfg: &Config,
) -> Result<MultipassResult> {
    run_engine(updates, m_bound, p, eps, t, seed, cfg)
}

fn run_engine(
    updates: &[TurnstileUpdate],
    m_bound: i64,
    p: f64,
    eps: f64,
    t: usize,
    seed: u64,
    cfg: &Config,
) -> Result<MultipassResult> {
    if t == 0 {
        return Err(Error::InvalidArgument("level count t must be >= 1".into()));
    }
    if p < 1.0 || !(eps > 0.0) {
        return Err(Error::InvalidArgument(
            "multipass embedding needs p >= 1 and eps > 0".into(),
        ));
    }
    let n_eff = updates.len().max(2) as f64;
    let rho = n_eff.powf(-1.0 / t as f64);
    let plan = MultipassPlan::new(t, rho, seed);
    if updates.is_empty() {
        return Ok(MultipassResult {
            coreset: WeightedCoreset { entries: Vec::new(), p, seed },
            plan,
            passes: 0,
            retries: 0,
            memory_units_peak: 0,
            level_support: vec![Vec::new(); t],
            bucket_trace: Vec::new(),
        });
    }
    let d = updates[0].row.len();
    let encoder = RowEncoder::new(m_bound, d)?;
    let mut st = EngineState { mem_now: 0, mem_peak: 0 };
    let mut passes = 0usize;
    let mut retries = 0usize;

    // Encodings are recomputed per pass in spirit; caching them is a pure
    // CPU shortcut (one word per update, counted).
    let mut encs = Vec::with_capacity(updates.len());
    for u in updates {
        let ints = encoder.row_to_ints(&u.row)?;
        encs.push(encoder.encode(&ints)?);
    }
    st.alloc(2 * encs.len());

    let mut level_support: Vec<Vec<u128>> = Vec::with_capacity(t);
    let mut bucket_trace: Vec<(usize, usize, f64)> = Vec::new();

    if t == 1 {
        // Degenerate single pass: exact recovery of every distinct row.
        let cap = ((4 * updates.len()).next_power_of_two()).max(256);
        let mut attempt = 0usize;
        let recovered = loop {
            let mut rec = SparseRecovery::new(cap, encoder.domain(), mix2(seed, 0xE0 + attempt as u64));
            st.alloc(4 * rec.cells_len());
            let mut support = BTreeSet::new();
            for (u, &e) in updates.iter().zip(&encs) {
                rec.update(e, u.delta);
                support.insert(e);
            }
            passes += 1;
            let out = rec.recover();
            st.free(4 * rec.cells_len());
            match out {
                Some(items) => {
                    level_support.push(support.into_iter().collect());
                    break items;
                }
                None if attempt + 1 < MAX_RETRIES => {
                    attempt += 1;
                    retries += 1;
                }
                None => {
                    return Err(Error::RecoveryOverflow(
                        "distinct-row recovery overflowed on every retry".into(),
                    ))
                }
            }
        };
        let mut entries: Vec<CoresetEntry> = recovered
            .into_iter()
            .filter(|&(_, f)| f > 0)
            .map(|(e, _)| CoresetEntry {
                row: Vec64::from_iterator(d, encoder.decode(e).into_iter().map(|v| v as f64)),
                tag: Some(fold128(e)),
                probability: 1.0,
                weight: 1.0,
            })
            .collect();
        entries.sort_by_key(|e| e.tag);
        st.alloc(entries.len() * (d + 2));
        return Ok(MultipassResult {
            coreset: WeightedCoreset { entries, p, seed },
            plan,
            passes,
            retries,
            memory_units_peak: st.mem_peak,
            level_support,
            bucket_trace,
        });
    }

    // Pass 1: exact recovery of S_1, with a support estimator riding along
    // to size the final recovery structure.
    let cap1 = (4 * cfg.recursive_base(d)).next_power_of_two();
    let mut global_est = L0EstimatorSketch::new(EST_EPS, encoder.domain(), mix2(seed, 0xE57))?;
    st.alloc(2 * global_est.cells_len());
    let mut attempt = 0usize;
    let m1_items = loop {
        let mut rec = SparseRecovery::new(cap1, encoder.domain(), mix2(seed, 0xE0 + attempt as u64));
        st.alloc(4 * rec.cells_len());
        let mut support = BTreeSet::new();
        for (u, &e) in updates.iter().zip(&encs) {
            if attempt == 0 {
                global_est.update(e, u.delta);
            }
            if plan.in_level(e, 1) {
                rec.update(e, u.delta);
                support.insert(e);
            }
        }
        passes += 1;
        let out = rec.recover();
        st.free(4 * rec.cells_len());
        match out {
            Some(items) => {
                level_support.push(support.into_iter().collect());
                break items;
            }
            None if attempt + 1 < MAX_RETRIES => {
                attempt += 1;
                retries += 1;
            }
            None => {
                return Err(Error::RecoveryOverflow(
                    "level-1 sparse recovery overflowed on every retry".into(),
                ))
            }
        }
    };
    let d_hat = global_est.estimate();
    st.free(2 * global_est.cells_len());

    // Current chain coreset as weighted rows (weight 1 at level 1).
    let mut m_rows: Vec<(Vec64, f64)> = m1_items
        .into_iter()
        .filter(|&(_, f)| f != 0)
        .map(|(e, _)| {
            (
                Vec64::from_iterator(d, encoder.decode(e).into_iter().map(|v| v as f64)),
                1.0,
            )
        })
        .collect();
    st.alloc(m_rows.len() * (d + 1));

    let b = 2 * (n_eff.log2().ceil() as usize) + 8;
    let r_mid = (cfg.multipass_budget_c * d as f64 * ((d + 1) as f64).ln()).ceil() as usize;

    for j in 2..=t {
        let m_mat = {
            let mut m = Mat::zeros(m_rows.len(), d);
            for (i, (row, w)) in m_rows.iter().enumerate() {
                m.set_row(i, &(row.transpose() * *w));
            }
            m
        };
        let pg = (p == 2.0)
            .then(|| PinvGram::from_gram(&(m_mat.transpose() * &m_mat), cfg.svd_cutoff));
        let mut tau_memo: HashMap<u128, f64> = HashMap::new();
        let mut ests: Vec<L0EstimatorSketch> = Vec::with_capacity(b);
        let mut pools: Vec<L0SamplerSketch> = Vec::with_capacity(b);
        for l in 0..b {
            ests.push(L0EstimatorSketch::new(
                EST_EPS,
                encoder.domain(),
                mix2(seed, 0xE500 + (j * b + l) as u64),
            )?);
            pools.push(L0SamplerSketch::with_sparsity(
                encoder.domain(),
                mix2(seed, 0x5A00 + (j * b + l) as u64),
                BUCKET_SPARSITY,
            ));
        }
        st.alloc(ests.iter().map(L0EstimatorSketch::cells_len).sum::<usize>() * 2);
        st.alloc(pools.iter().map(L0SamplerSketch::cells_len).sum::<usize>() * 4);

        let mut support = BTreeSet::new();
        for (u, &e) in updates.iter().zip(&encs) {
            if !plan.in_level(e, j) {
                continue;
            }
            support.insert(e);
            let tau = *tau_memo.entry(e).or_insert_with(|| {
                let row = Vec64::from_iterator(d, encoder.decode(e).into_iter().map(|v| v as f64));
                tau_against(&m_mat, pg.as_ref(), &row, p, cfg)
            });
            if tau <= 0.0 {
                continue;
            }
            let l = bucket_of(tau, b);
            ests[l].update(e, u.delta);
            pools[l].update(e, u.delta);
        }
        passes += 1;
        st.alloc(tau_memo.len() * 3);
        level_support.push(support.into_iter().collect());

        // Bucket draws: Pr[bucket l] proportional to Est_l 2^-l, each draw a
        // near-uniform member of that bucket, so a row in bucket l is picked
        // per draw with probability 2^-l / sum.
        let est_vals: Vec<f64> = ests.iter().map(|e| e.estimate().max(0.0)).collect();
        let weights: Vec<f64> = est_vals
            .iter()
            .enumerate()
            .map(|(l, &v)| v * 0.5f64.powi(l as i32))
            .collect();
        let total_w: f64 = weights.iter().sum();
        let mut next_rows: Vec<(Vec64, f64)> = Vec::new();
        if total_w > 0.0 {
            let mut rng = crate::hashing::row_rng(mix2(seed, 0xD0 + j as u64), 0);
            let mut pool_cache: Vec<Option<Vec<(u128, i64)>>> = vec![None; b];
            let mut chosen: BTreeMap<u128, usize> = BTreeMap::new();
            for _ in 0..r_mid {
                let mut pick = rng.random::<f64>() * total_w;
                let mut l = b - 1;
                for (i, &w) in weights.iter().enumerate() {
                    if pick < w {
                        l = i;
                        break;
                    }
                    pick -= w;
                }
                if weights[l] == 0.0 {
                    continue;
                }
                let pool = pool_cache[l].get_or_insert_with(|| {
                    pools[l]
                        .recovered_pool()
                        .unwrap_or_default()
                        .into_iter()
                        .filter(|&(_, f)| f != 0)
                        .collect()
                });
                if pool.is_empty() {
                    continue;
                }
                let at = rng.random_range(0..pool.len());
                chosen.insert(pool[at].0, l);
            }
            for (e, l) in chosen {
                let q = 1.0 - (1.0 - (0.5f64.powi(l as i32) / total_w).min(1.0)).powi(r_mid as i32);
                let q = q.clamp(1e-12, 1.0);
                let tau = tau_memo.get(&e).copied().unwrap_or(1.0);
                bucket_trace.push((j, l, tau));
                let row = Vec64::from_iterator(d, encoder.decode(e).into_iter().map(|v| v as f64));
                next_rows.push((row, q.powf(-1.0 / p)));
            }
        }
        st.free(ests.iter().map(L0EstimatorSketch::cells_len).sum::<usize>() * 2);
        st.free(pools.iter().map(L0SamplerSketch::cells_len).sum::<usize>() * 4);
        st.free(tau_memo.len() * 3);
        st.free(m_rows.len() * (d + 1));
        m_rows = next_rows;
        st.alloc(m_rows.len() * (d + 1));
    }

    // Final pass: threshold sample every row against the last coreset at
    // the epsilon rate, recover the kept rows exactly.
    let m_mat = {
        let mut m = Mat::zeros(m_rows.len(), d);
        for (i, (row, w)) in m_rows.iter().enumerate() {
            m.set_row(i, &(row.transpose() * *w));
        }
        m
    };
    let pg =
        (p == 2.0).then(|| PinvGram::from_gram(&(m_mat.transpose() * &m_mat), cfg.svd_cutoff));
    let rate = cfg.c1 * (cfg.c2 * d as f64 * (d.max(2) as f64).ln() + n_eff.ln()) / (eps * eps);
    let final_hash = HashFamily::new(HASH_K, mix2(seed, 0xFE));
    let cap_fin = ((8.0 * d_hat.max(1.0)) as usize).next_power_of_two().max(512);
    let mut q_memo: HashMap<u128, f64> = HashMap::new();
    let mut attempt = 0usize;
    let kept = loop {
        let mut rec =
            SparseRecovery::new(cap_fin, encoder.domain(), mix2(seed, 0xF1A7 + attempt as u64));
        st.alloc(4 * rec.cells_len());
        for (u, &e) in updates.iter().zip(&encs) {
            let q = *q_memo.entry(e).or_insert_with(|| {
                let row = Vec64::from_iterator(d, encoder.decode(e).into_iter().map(|v| v as f64));
                let tau = tau_against(&m_mat, pg.as_ref(), &row, p, cfg);
                (rate * tau).min(1.0)
            });
            if unit_u64(final_hash.eval(fold128(e))) < q {
                rec.update(e, u.delta);
            }
        }
        passes += 1;
        st.alloc(q_memo.len() * 3);
        let out = rec.recover();
        st.free(4 * rec.cells_len());
        match out {
            Some(items) => break items,
            None if attempt + 1 < MAX_RETRIES => {
                attempt += 1;
                retries += 1;
            }
            None => {
                return Err(Error::RecoveryOverflow(
                    "final-pass sample recovery overflowed on every retry".into(),
                ))
            }
        }
    };
    let mut entries: Vec<CoresetEntry> = kept
        .into_iter()
        .filter(|&(_, f)| f > 0)
        .map(|(e, _)| {
            let q = q_memo.get(&e).copied().unwrap_or(1.0);
            CoresetEntry {
                row: Vec64::from_iterator(d, encoder.decode(e).into_iter().map(|v| v as f64)),
                tag: Some(fold128(e)),
                probability: q,
                weight: q.powf(-1.0 / p),
            }
        })
        .collect();
    entries.sort_by_key(|e| e.tag);
    st.alloc(entries.len() * (d + 2));
    Ok(MultipassResult {
        coreset: WeightedCoreset { entries, p, seed },
        plan,
        passes,
        retries,
        memory_units_peak: st.mem_peak,
        level_support,
        bucket_trace,
    })
}

/// Norm estimate from one query against a bounded-entries sketch.
#[derive(Debug, Clone, Copy)]
pub struct BoundedQueryResult {
    pub estimate: f64,
    /// Set when more than half the sampler copies failed and the stated
    /// confidence no longer applies.
    pub widened: bool,
    pub samples_used: usize,
}

/// One-pass structure for integer-bounded turnstile streams answering
/// ||Vx||_p^p queries, V the net-frequency-scaled distinct rows: a support
/// estimator plus many independent L0 sampler copies, each contributing one
/// |freq * <row, x>|^p term at query time.
#[derive(Debug)]
pub struct BoundedEntriesSketch {
    encoder: RowEncoder,
    eps: f64,
    estimator: L0EstimatorSketch,
    draws: Vec<(u128, i64)>,
    samplers_total: usize,
}

/// Builds the sketch in one pass and freezes the sampler draws. Draw
/// redundancy comes from `cfg.bounded_samplers` independent copies; the
/// copies themselves are dropped once drawn.
pub fn bounded_entries_sketch(
    updates: &[TurnstileUpdate],
    m_bound: i64,
    eps: f64,
    seed: u64,
    cfg: &Config,
) -> Result<BoundedEntriesSketch> {
    if updates.is_empty() {
        return Err(Error::InvalidArgument(
            "bounded-entries sketch needs a nonempty update stream".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("bounded-entries sketch needs eps > 0".into()));
    }
    let d = updates[0].row.len();
    let encoder = RowEncoder::new(m_bound, d)?;
    let mut estimator = L0EstimatorSketch::new(EST_EPS.min(eps), encoder.domain(), mix2(seed, 0xB0))?;
    let mut samplers: Vec<L0SamplerSketch> = (0..cfg.bounded_samplers)
        .map(|i| L0SamplerSketch::new(encoder.domain(), mix2(seed, 0xB100 + i as u64)))
        .collect();
    for u in updates {
        let ints = encoder.row_to_ints(&u.row)?;
        let e = encoder.encode(&ints)?;
        estimator.update(e, u.delta);
        for s in samplers.iter_mut() {
            s.update(e, u.delta);
        }
    }
    let draws = samplers.iter().filter_map(L0SamplerSketch::sample).collect();
    Ok(BoundedEntriesSketch {
        encoder,
        eps,
        estimator,
        draws,
        samplers_total: cfg.bounded_samplers,
    })
}

impl BoundedEntriesSketch {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Support-size estimate of the sketched frequency vector.
    pub fn support_estimate(&self) -> f64 {
        self.estimator.estimate()
    }

    /// Estimates ||Vx||_p^p as (support count) x (mean sampled coordinate
    /// power). Coordinates are sampled from the row support, so terms that
    /// x annihilates contribute exact zeros and an all-orthogonal query
    /// returns exactly 0.
    pub fn query(&self, x: &[i64], p: f64) -> Result<BoundedQueryResult> {
        if x.len() != self.encoder.dim() {
            return Err(Error::InvalidArgument(format!(
                "query has {} entries, sketch expects {}",
                x.len(),
                self.encoder.dim()
            )));
        }
        if p < 1.0 {
            return Err(Error::InvalidArgument("query needs p >= 1".into()));
        }
        for &v in x {
            if v < -self.encoder.bound() || v > self.encoder.bound() {
                return Err(Error::InvalidArgument(format!(
                    "query entry {v} outside [-{m}, {m}]",
                    m = self.encoder.bound()
                )));
            }
        }
        let count = self.estimator.estimate();
        let widened = self.draws.len() * 2 < self.samplers_total;
        if count <= 0.0 || self.draws.is_empty() {
            return Ok(BoundedQueryResult {
                estimate: 0.0,
                widened: widened || count > 0.0,
                samples_used: self.draws.len(),
            });
        }
        let mut total = 0.0;
        for &(e, freq) in &self.draws {
            let row = self.encoder.decode(e);
            let dot: i128 = row
                .iter()
                .zip(x.iter())
                .map(|(&r, &xi)| (r as i128) * (xi as i128))
                .sum();
            total += ((freq as f64) * (dot as f64)).abs().powf(p);
        }
        Ok(BoundedQueryResult {
            estimate: count * total / self.draws.len() as f64,
            widened,
            samples_used: self.draws.len(),
        })
    }
}
