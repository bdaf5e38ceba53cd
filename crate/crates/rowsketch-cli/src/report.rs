//! Experiment configuration and machine-readable reports.
//!
//! Reports are deterministic for a fixed config and seed list: seed results
//! are keyed by position, every map is ordered, and wall-clock timings are
//! only recorded when explicitly requested (they are the one field that
//! cannot be reproducible).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rowsketch::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?}, expected json or csv")),
        }
    }
}

/// Everything a run needs; unknown fields in config files are rejected so
/// typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub algorithm: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    /// Synthetic generator: coefficient and noise entry ranges.
    pub coeff_range: i64,
    pub noise_range: i64,
    /// Stream experiments: total updates and distinct rows/tags.
    pub updates: usize,
    pub distinct: usize,
    /// Turnstile/bounded: entry bound M.
    pub m_bound: i64,
    /// Turnstile: explicit round count (None = ceil(log2 n) default).
    pub t_rounds: Option<usize>,
    /// Robust variant: sketch copies and switch factor.
    pub copies: usize,
    pub switch_factor: f64,
    /// Bounded structure: queries per seed.
    pub queries: usize,
    /// Optional input matrix (PGM or CSV) replacing the synthetic source.
    pub input: Option<String>,
    pub format: ReportFormat,
    /// Record wall-clock times (breaks byte-for-byte determinism).
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: String::new(),
            n: 500,
            d: 6,
            k: 4,
            p: 2.0,
            eps: 0.5,
            delta: 0.01,
            seeds: vec![0],
            coeff_range: 100,
            noise_range: 5000,
            updates: 2000,
            distinct: 100,
            m_bound: 7,
            t_rounds: None,
            copies: 3,
            switch_factor: 4.0,
            queries: 50,
            input: None,
            format: ReportFormat::Json,
            timings: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithm.is_empty() {
            return Err(Error::InvalidArgument("missing algorithm id".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one seed".into()));
        }
        if !(self.p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.eps > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(
                "need eps > 0 and delta in (0, 1)".into(),
            ));
        }
        if let Some(path) = &self.input {
            if !Path::new(path).exists() {
                return Err(Error::InvalidArgument(format!("input file {path} does not exist")));
            }
        }
        Ok(())
    }
}

/// Outcome of one seed: flat metric map plus invariant verdict. Errors are
/// carried, not thrown, so the report is still written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub invariants_held: bool,
    pub notes: Vec<String>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

impl SeedOutcome {
    pub fn failed(seed: u64, err: String) -> Self {
        SeedOutcome {
            seed,
            metrics: BTreeMap::new(),
            invariants_held: false,
            notes: Vec::new(),
            error: Some(err),
            runtime_ms: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| -> f64 {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        v[lo] * (1.0 - frac) + v[hi] * frac
    };
    Some(Quantiles {
        min: v[0],
        q25: at(0.25),
        median: at(0.5),
        q75: at(0.75),
        max: v[v.len() - 1],
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub seed_results: Vec<SeedOutcome>,
    pub aggregate: BTreeMap<String, Quantiles>,
    pub all_invariants_held: bool,
}

impl Report {
    pub fn assemble(config: ExperimentConfig, seed_results: Vec<SeedOutcome>) -> Report {
        let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &seed_results {
            for (k, v) in &r.metrics {
                by_metric.entry(k.clone()).or_default().push(*v);
            }
        }
        let aggregate = by_metric
            .into_iter()
            .filter_map(|(k, vals)| quantiles(&vals).map(|q| (k, q)))
            .collect();
        let all_invariants_held = seed_results
            .iter()
            .all(|r| r.invariants_held && r.error.is_none());
        Report {
            config,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed_results,
            aggregate,
            all_invariants_held,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail") + "\n"
    }

    /// Flat table: one row per (seed, metric) plus aggregate rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,seed,key,value\n");
        for r in &self.seed_results {
            for (k, v) in &r.metrics {
                out.push_str(&format!("seed,{},{},{}\n", r.seed, k, v));
            }
            out.push_str(&format!(
                "seed,{},invariants_held,{}\n",
                r.seed,
                if r.invariants_held { 1 } else { 0 }
            ));
            if let Some(e) = &r.error {
                out.push_str(&format!("seed,{},error,{}\n", r.seed, e.replace(',', ";")));
            }
        }
        for (k, q) in &self.aggregate {
            out.push_str(&format!("aggregate,,{k}.min,{}\n", q.min));
            out.push_str(&format!("aggregate,,{k}.median,{}\n", q.median));
            out.push_str(&format!("aggregate,,{k}.max,{}\n", q.max));
            out.push_str(&format!("aggregate,,{k}.mean,{}\n", q.mean));
        }
        out.push_str(&format!(
            "aggregate,,all_invariants_held,{}\n",
            if self.all_invariants_held { 1 } else { 0 }
        ));
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}
