//! Synthetic low-rank-plus-noise instances: A = L R + G with i.i.d. uniform
//! integer entries, L n-by-k in [-coeff, coeff], R k-by-d in [-coeff, coeff]
//! and G n-by-d in [-noise, noise].

use rand::Rng;
use rowsketch::error::{Error, Result};
use rowsketch::hashing::row_rng;
use rowsketch::Mat;

pub fn gen_synthetic(
    n: usize,
    d: usize,
    k: usize,
    coeff_range: i64,
    noise_range: i64,
    seed: u64,
) -> Result<Mat> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
    }
    if k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank parameter k = {k} exceeds min(n, d) = {}",
            n.min(d)
        )));
    }
    if coeff_range < 0 || noise_range < 0 {
        return Err(Error::InvalidArgument("entry ranges must be nonnegative".into()));
    }
    let mut rng = row_rng(seed, 0);
    let mut unif = |r: i64| -> f64 {
        if r == 0 {
            0.0
        } else {
            rng.random_range(-r..=r) as f64
        }
    };
    let l = Mat::from_fn(n, k, |_, _| unif(coeff_range));
    let r = Mat::from_fn(k, d, |_, _| unif(coeff_range));
    let g = Mat::from_fn(n, d, |_, _| unif(noise_range));
    Ok(&l * &r + g)
}

/// Standard normal matrix, seeded.
pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Mat {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = row_rng(seed, 1);
    Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

/// Random integer rows in [-m, m]^d, all distinct when the domain allows.
pub fn distinct_int_rows(count: usize, d: usize, m: i64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = row_rng(seed, 2);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let domain = (2 * m as u128 + 1).pow(d as u32);
    while out.len() < count {
        let row: Vec<i64> = (0..d).map(|_| rng.random_range(-m..=m)).collect();
        if seen.len() as u128 >= domain || seen.insert(row.clone()) {
            out.push(row.into_iter().map(|v| v as f64).collect());
        }
    }
    out
}
