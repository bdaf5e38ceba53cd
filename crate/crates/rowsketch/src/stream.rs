//! Stream item types and the reference deduplication semantics.
//!
//! A tagged stream carries rows labeled by a u64 tag; duplicates of a row
//! repeat the same tag with a bit-identical row. A turnstile stream carries
//! signed multiplicity updates to rows; the implicit matrix consists of the
//! distinct rows whose net frequency is positive, each counted once no
//! matter how large its frequency.

use crate::error::{Error, Result};
use crate::{Mat, Vec64};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A row with its identity tag. Two items with equal tags must carry
/// bit-identical rows; anything else is stream corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRow {
    pub tag: u64,
    pub row: Vec<f64>,
}

impl TaggedRow {
    pub fn new(tag: u64, row: Vec<f64>) -> Self {
        TaggedRow { tag, row }
    }

    pub fn dim(&self) -> usize {
        self.row.len()
    }

    pub fn as_dvector(&self) -> Vec64 {
        Vec64::from_column_slice(&self.row)
    }
}

/// A signed multiplicity update in a turnstile stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnstileUpdate {
    pub row: Vec<f64>,
    pub delta: i64,
}

impl TurnstileUpdate {
    pub fn new(row: Vec<f64>, delta: i64) -> Self {
        TurnstileUpdate { row, delta }
    }
}

fn bits_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Reference deduplication of a tagged stream: one row per distinct tag, in
/// order of first appearance. Fails on a tag reuse with different row bits.
pub fn dedup(items: &[TaggedRow]) -> Result<Vec<TaggedRow>> {
    let mut seen: HashMap<u64, Vec<u64>> = HashMap::new();
    let mut out = Vec::new();
    for (position, item) in items.iter().enumerate() {
        let key = bits_key(&item.row);
        match seen.get(&item.tag) {
            Some(prev) => {
                if *prev != key {
                    return Err(Error::TagInconsistency { tag: item.tag, position });
                }
            }
            None => {
                seen.insert(item.tag, key);
                out.push(item.clone());
            }
        }
    }
    Ok(out)
}

/// Reference deduplication of a turnstile stream: net frequencies are
/// accumulated exactly; rows with positive net frequency survive, each
/// once, sorted lexicographically by entry bits so the output order does
/// not depend on update order. Fails if any net frequency goes negative
/// at the end of the stream.
pub fn dedup_turnstile(updates: &[TurnstileUpdate]) -> Result<Vec<Vec<f64>>> {
    let mut freq: HashMap<Vec<u64>, (i64, usize)> = HashMap::new();
    for (position, u) in updates.iter().enumerate() {
        let e = freq.entry(bits_key(&u.row)).or_insert((0, position));
        e.0 += u.delta;
    }
    let mut rows: Vec<(Vec<u64>, i64, usize)> = Vec::new();
    for (k, (f, pos)) in freq {
        if f < 0 {
            return Err(Error::NegativeFrequency { position: pos });
        }
        if f > 0 {
            rows.push((k, f, pos));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows
        .into_iter()
        .map(|(k, _, _)| k.into_iter().map(f64::from_bits).collect())
        .collect())
}

/// Net frequency per distinct row (positive entries only), same ordering
/// contract as [`dedup_turnstile`].
pub fn turnstile_frequencies(updates: &[TurnstileUpdate]) -> Result<Vec<(Vec<f64>, i64)>> {
    let mut freq: HashMap<Vec<u64>, (i64, usize)> = HashMap::new();
    for (position, u) in updates.iter().enumerate() {
        let e = freq.entry(bits_key(&u.row)).or_insert((0, position));
        e.0 += u.delta;
    }
    let mut rows: Vec<(Vec<u64>, i64)> = Vec::new();
    for (k, (f, pos)) in freq {
        if f < 0 {
            return Err(Error::NegativeFrequency { position: pos });
        }
        if f > 0 {
            rows.push((k, f));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows
        .into_iter()
        .map(|(k, f)| (k.into_iter().map(f64::from_bits).collect(), f))
        .collect())
}

/// Stacks rows into a matrix. `d` disambiguates the empty case.
pub fn rows_to_matrix(rows: &[Vec<f64>], d: usize) -> Mat {
    let n = rows.len();
    let mut m = Mat::zeros(n, d);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), d, "row {i} has length {} != {d}", r.len());
        for (j, &v) in r.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

/// Stacks the rows of tagged items into a matrix.
pub fn tagged_to_matrix(items: &[TaggedRow], d: usize) -> Mat {
    let rows: Vec<Vec<f64>> = items.iter().map(|t| t.row.clone()).collect();
    rows_to_matrix(&rows, d)
}
