//! Command-line experiment harness. Each subcommand drives one algorithm
//! family over a list of seeds and emits a machine-readable report; the
//! `acceptance` subcommand runs the full criteria suite.
//!
//! Exit codes: 0 when every hard invariant held (or every criterion
//! passed), 1 otherwise, 2 on usage errors.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rowsketch::config::Config;
use rowsketch_cli::acceptance;
use rowsketch_cli::experiments::run_experiment;
use rowsketch_cli::report::{ExperimentConfig, ReportFormat};

#[derive(Parser)]
#[command(
    name = "rowsketch",
    version,
    about = "Streaming row-sampling experiments: subspace embeddings and \
             max-distance coresets over tagged and turnstile streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Norm exponent p >= 1.
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Target relative accuracy.
    #[arg(long, global = true, default_value_t = 0.5)]
    eps: f64,
    /// Failure probability budget.
    #[arg(long, global = true, default_value_t = 0.01)]
    delta: f64,
    /// Target rank for subspace approximation.
    #[arg(long, global = true, default_value_t = 4)]
    k: usize,
    /// Single seed (ignored when --seeds is given).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Comma-separated seed list.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Input matrix file (PGM grayscale) replacing the synthetic source.
    #[arg(long, global = true)]
    input: Option<String>,
    /// Report destination (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Report format.
    #[arg(long, global = true, default_value = "json")]
    format: ReportFormat,
    /// Record per-seed wall-clock times (breaks byte determinism).
    #[arg(long, global = true)]
    timings: bool,

    /// Synthetic rows.
    #[arg(long, global = true, default_value_t = 500)]
    n: usize,
    /// Synthetic columns / stream row dimension.
    #[arg(long, global = true, default_value_t = 6)]
    d: usize,
    /// Synthetic factor entry range.
    #[arg(long, global = true, default_value_t = 100)]
    coeff_range: i64,
    /// Synthetic additive noise range.
    #[arg(long, global = true, default_value_t = 5000)]
    noise_range: i64,
    /// Stream length (tagged or turnstile updates).
    #[arg(long, global = true, default_value_t = 2000)]
    updates: usize,
    /// Distinct tags or distinct turnstile rows.
    #[arg(long, global = true, default_value_t = 100)]
    distinct: usize,
    /// Turnstile entry bound M.
    #[arg(long, global = true, default_value_t = 7)]
    m_bound: i64,
    /// Explicit turnstile round count t (default: ceil(log2 n)).
    #[arg(long, global = true)]
    t_rounds: Option<usize>,
    /// Sketch copies of the robust variant.
    #[arg(long, global = true, default_value_t = 3)]
    copies: usize,
    /// Staleness switch factor of the robust variant.
    #[arg(long, global = true, default_value_t = 8.0)]
    switch_factor: f64,
    /// Queries per seed for the bounded-entries structure.
    #[arg(long, global = true, default_value_t = 50)]
    queries: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// One-pass subspace embedding of a duplicate-rich tagged stream.
    DedupEmbed,
    /// Online sensitivity sampling with prefix partition diagnostics.
    OnlineSample,
    /// Deterministic max-distance (ridge leverage) coreset and solve.
    LinfCoreset,
    /// Rank-k lp subspace approximation via exponential scaling.
    LpApprox,
    /// Multipass embedding of a turnstile stream with deletions.
    Turnstile,
    /// One-pass bounded-entries norm-query structure.
    Bounded,
    /// Adversarially robust importance stream with sketch switching.
    Robust,
    /// Run the acceptance criteria suite, one line per criterion.
    Acceptance,
}

impl Cmd {
    fn algorithm(&self) -> &'static str {
        match self {
            Cmd::DedupEmbed => "dedup-embed",
            Cmd::OnlineSample => "online-sample",
            Cmd::LinfCoreset => "linf-coreset",
            Cmd::LpApprox => "lp-approx",
            Cmd::Turnstile => "turnstile",
            Cmd::Bounded => "bounded",
            Cmd::Robust => "robust",
            Cmd::Acceptance => "acceptance",
        }
    }
}

fn run_acceptance() -> ExitCode {
    let results = acceptance::run_all();
    let mut all_ok = true;
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {:2} ({}): {}", r.id, r.name, r.details);
        all_ok &= r.passed;
    }
    println!(
        "{}/{} criteria passed",
        results.iter().filter(|r| r.passed).count(),
        results.len()
    );
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if matches!(cli.command, Cmd::Acceptance) {
        return run_acceptance();
    }

    let cfg = ExperimentConfig {
        algorithm: cli.command.algorithm().to_string(),
        n: cli.n,
        d: cli.d,
        k: cli.k,
        p: cli.p,
        eps: cli.eps,
        delta: cli.delta,
        seeds: if cli.seeds.is_empty() { vec![cli.seed] } else { cli.seeds.clone() },
        coeff_range: cli.coeff_range,
        noise_range: cli.noise_range,
        updates: cli.updates,
        distinct: cli.distinct,
        m_bound: cli.m_bound,
        t_rounds: cli.t_rounds,
        copies: cli.copies,
        switch_factor: cli.switch_factor,
        queries: cli.queries,
        input: cli.input.clone(),
        format: cli.format,
        timings: cli.timings,
    };
    let lib = Config {
        p: cli.p,
        eps: cli.eps,
        delta: cli.delta,
        ..Config::default()
    };

    let report = match run_experiment(&cfg, &lib) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let rendered = report.render(cfg.format);
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, rendered) {
                eprintln!("error: cannot write report to {path}: {e}");
                return ExitCode::FAILURE;
            }
        }
        None => print!("{rendered}"),
    }
    if report.all_invariants_held {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
