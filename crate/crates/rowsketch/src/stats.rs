//! Small statistics helpers used by tests and the experiment harness:
//! one-sample Kolmogorov-Smirnov, chi-square goodness of fit, and moment
//! summaries.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One-sample KS statistic sup_x |F_emp(x) - F(x)| against the CDF `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic p-value of the KS statistic for sample size n, via the
/// Kolmogorov distribution with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    kolmogorov_survival(lambda)
}

/// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test p-value against `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    let d = ks_statistic(&mut s, cdf);
    ks_pvalue(d, samples.len())
}

/// Two-sample KS test p-value; the effective sample size is
/// n1 n2 / (n1 + n2) in the asymptotic Kolmogorov law.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).unwrap());
    b.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n1, n2) = (a.len(), b.len());
    assert!(n1 > 0 && n2 > 0);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n1 && j < n2 {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 as f64 + n2 as f64);
    let sqrt_ne = ne.sqrt();
    kolmogorov_survival((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d)
}

/// Pearson chi-square statistic for observed counts against expected counts.
pub fn chi_square_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            assert!(e > 0.0, "expected counts must be positive");
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum()
}

/// Upper-tail p-value of a chi-square statistic with `dof` degrees of freedom.
pub fn chi_square_pvalue(stat: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("dof must be positive");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Chi-square goodness-of-fit p-value for uniform expected counts.
pub fn chi_square_uniform_pvalue(observed: &[u64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let e = total as f64 / observed.len() as f64;
    let expected = vec![e; observed.len()];
    let stat = chi_square_statistic(observed, &expected);
    chi_square_pvalue(stat, observed.len() - 1)
}

/// (mean, sample standard deviation).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_accepts_true_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let p = ks_test(&samples, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_rejects_wrong_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Squared uniforms against the uniform CDF.
        let samples: Vec<f64> = (0..5000).map(|_| rng.random::<f64>().powi(2)).collect();
        let p = ks_test(&samples, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn chi_square_uniform_behaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut counts = vec![0u64; 16];
        for _ in 0..16_000 {
            counts[rng.random_range(0..16)] += 1;
        }
        assert!(chi_square_uniform_pvalue(&counts) > 0.01);
        let mut skewed = vec![1000u64; 16];
        skewed[0] = 2000;
        assert!(chi_square_uniform_pvalue(&skewed) < 1e-6);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        // Sample variance of 1..4 is 5/3.
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
