//! Harness-level integration tests: synthetic generator contracts, the LP
//! distortion oracle, report determinism, exit codes and the PGM reader.

use std::io::Write;
use std::process::Command;

use rowsketch::config::Config;
use rowsketch::linf_lra::RidgeCoresetState;
use rowsketch::Mat;
use rowsketch_cli::experiments::run_experiment;
use rowsketch_cli::pgm::{parse_pgm, read_pgm};
use rowsketch_cli::report::ExperimentConfig;
use rowsketch_cli::{gen_synthetic, measure_distortion_linf};

#[test]
fn synthetic_without_noise_has_rank_at_most_k() {
    let k = 4;
    let a = gen_synthetic(60, 12, k, 9, 0, 7).unwrap();
    assert_eq!((a.nrows(), a.ncols()), (60, 12));
    let rank = a.svd(false, false).rank(1e-6);
    assert!(rank <= k, "rank {rank} exceeds k = {k}");
}

#[test]
fn synthetic_rejects_invalid_rank() {
    assert!(gen_synthetic(10, 5, 6, 9, 9, 0).is_err());
    assert!(gen_synthetic(0, 5, 1, 9, 9, 0).is_err());
}

#[test]
fn synthetic_generates_reduced_scale_image_shape() {
    // Same construction as the full-size image experiments, at 1/100 scale.
    let a = gen_synthetic(400, 100, 20, 100, 5000, 3).unwrap();
    assert_eq!((a.nrows(), a.ncols()), (400, 100));
    assert!(a.iter().any(|&v| v != 0.0));
}

#[test]
fn distortion_of_full_index_set_is_one() {
    let a = gen_synthetic(40, 5, 3, 8, 20, 11).unwrap();
    let s: Vec<usize> = (0..40).collect();
    let rep = measure_distortion_linf(&a, &s).unwrap();
    assert!((rep.phi - 1.0).abs() < 1e-6, "phi = {}", rep.phi);
    assert_eq!(rep.rows_measured, 40);
}

#[test]
fn distortion_detects_doubled_row_outside_subset() {
    // Row 2 is exactly twice row 0; keeping only rows 0 and 1 forces
    // distortion at least 2 along the doubled direction.
    let a = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
    let rep = measure_distortion_linf(&a, &[0, 1]).unwrap();
    assert!(rep.phi >= 2.0 - 1e-9, "phi = {}", rep.phi);
}

#[test]
fn distortion_matches_direction_grid_in_two_dimensions() {
    let a = gen_synthetic(30, 2, 2, 7, 3, 13).unwrap();
    let s = [0usize, 3, 9, 17];
    let rep = measure_distortion_linf(&a, &s).unwrap();

    let a_s = Mat::from_fn(s.len(), 2, |r, c| a[(s[r], c)]);
    let mut grid_max = 0.0f64;
    let steps = 200_000;
    for i in 0..steps {
        let theta = std::f64::consts::PI * i as f64 / steps as f64;
        let x = nalgebra::DVector::from_column_slice(&[theta.cos(), theta.sin()]);
        let denom = (&a_s * &x).amax();
        if denom < 1e-12 {
            continue;
        }
        grid_max = grid_max.max((&a * &x).amax() / denom);
    }
    let rel = (rep.phi - grid_max).abs() / grid_max;
    assert!(rel < 0.01, "LP phi {} vs grid {} (rel {:.4})", rep.phi, grid_max, rel);
}

#[test]
fn distortion_requires_nonzero_coreset_rows() {
    let a = Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
    assert!(measure_distortion_linf(&a, &[0]).is_err());
    assert!(measure_distortion_linf(&a, &[]).is_err());
    assert!(measure_distortion_linf(&a, &[5]).is_err());
}

fn small_config(algorithm: &str) -> ExperimentConfig {
    ExperimentConfig {
        algorithm: algorithm.into(),
        n: 60,
        d: 4,
        k: 2,
        eps: 0.5,
        coeff_range: 9,
        noise_range: 20,
        updates: 300,
        distinct: 30,
        seeds: vec![1, 2, 3],
        ..ExperimentConfig::default()
    }
}

#[test]
fn reports_are_byte_identical_for_fixed_seeds() {
    for algorithm in ["dedup-embed", "online-sample", "turnstile", "bounded", "robust"] {
        let cfg = small_config(algorithm);
        let lib = Config::default();
        let a = run_experiment(&cfg, &lib).unwrap();
        let b = run_experiment(&cfg, &lib).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{algorithm} report not deterministic");
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.all_invariants_held, "{algorithm} hard invariants failed");
    }
}

#[test]
fn unknown_algorithm_is_rejected() {
    let cfg = small_config("does-not-exist");
    assert!(run_experiment(&cfg, &Config::default()).is_err());
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_rowsketch"))
        .arg("does-not-exist")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2), "usage errors must exit 2");
}

#[test]
fn reported_linf_distortion_matches_recomputation() {
    // The linf-coreset driver reports distortion_phi; rebuild the same
    // instance and coreset and recompute it independently.
    let cfg = ExperimentConfig {
        algorithm: "linf-coreset".into(),
        n: 120,
        d: 6,
        k: 3,
        coeff_range: 9,
        noise_range: 25,
        seeds: vec![5],
        ..ExperimentConfig::default()
    };
    let lib = Config::default();
    let report = run_experiment(&cfg, &lib).unwrap();
    let reported = report.seed_results[0].metrics["distortion_phi"];

    let a = gen_synthetic(cfg.n, cfg.d, cfg.k, cfg.coeff_range, cfg.noise_range, 5).unwrap();
    let mut state = RidgeCoresetState::with_fast_path(cfg.d, cfg.k, cfg.n, 5, &lib);
    let mut kept = Vec::new();
    for i in 0..a.nrows() {
        if state.insert(&a.row(i).transpose()) {
            kept.push(i);
        }
    }
    let rep = measure_distortion_linf(&a, &kept).unwrap();
    assert_eq!(rep.phi, reported, "reported distortion must match recomputation");
}

#[test]
fn pgm_binary_and_ascii_agree() {
    let (w, h) = (4usize, 3usize);
    let pixels: Vec<u8> = (0..w * h).map(|i| (i * 17 % 256) as u8).collect();
    let mut p5 = format!("P5\n# binary comment\n{w} {h}\n255\n").into_bytes();
    p5.extend_from_slice(&pixels);
    let mut p2 = format!("P2\n{w} {h}\n# ascii comment\n255\n").into_bytes();
    for v in &pixels {
        p2.extend_from_slice(format!("{v} ").as_bytes());
    }
    let a = parse_pgm(&p5).unwrap();
    let b = parse_pgm(&p2).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.nrows(), a.ncols()), (h, w));
    assert_eq!(a[(1, 2)], f64::from(pixels[w + 2]));
}

#[test]
fn pgm_reads_from_file_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.pgm");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(b"P5 2 2 255\n\x01\x02\x03\x04").unwrap();
    drop(f);
    let m = read_pgm(&path).unwrap();
    assert_eq!(m, Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));

    assert!(parse_pgm(b"P6 2 2 255 junk").is_err(), "non-graymap magic");
    assert!(parse_pgm(b"P5 2 2 65535\n").is_err(), "16-bit depth");
    assert!(parse_pgm(b"P5 2 2 255\n\x01\x02").is_err(), "truncated data");
    assert!(parse_pgm(b"P2 2 2 9\n1 2 3 10").is_err(), "pixel above maxval");
}

#[test]
fn experiment_uses_pgm_input_when_given() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.pgm");
    // 24 rows of 6 pixels with two dominant directions plus texture.
    let (w, h) = (6usize, 24usize);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            bytes.push(((r * 11 + c * 37 + (r % 3) * 50) % 251) as u8);
        }
    }
    std::fs::write(&path, &bytes).unwrap();

    let cfg = ExperimentConfig {
        algorithm: "linf-coreset".into(),
        k: 2,
        seeds: vec![1],
        input: Some(path.to_string_lossy().into_owned()),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg, &Config::default()).unwrap();
    assert!(report.all_invariants_held);
    assert!(report.seed_results[0].metrics["coreset_size"] >= 2.0);
}

#[test]
fn config_validation_rejects_bad_input() {
    let mut cfg = small_config("dedup-embed");
    cfg.input = Some("/definitely/not/a/file.pgm".into());
    assert!(cfg.validate().is_err());
    let mut cfg = small_config("dedup-embed");
    cfg.seeds.clear();
    assert!(cfg.validate().is_err());
    let mut cfg = small_config("dedup-embed");
    cfg.p = 0.5;
    assert!(cfg.validate().is_err());
}
