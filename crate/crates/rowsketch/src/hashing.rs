//! Deterministic hashing utilities: splitmix64 mixing, k-wise independent
//! polynomial hash families over a Mersenne prime, the power-of-two scale
//! law used by tag-keyed embeddings, and counter-based per-row RNGs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mersenne prime 2^61 - 1. Field size of every polynomial hash family here;
/// large enough for the row-index domains we hash directly, and digests are
/// folded into it when the exact domain would not fit.
pub const MERSENNE_P: u64 = (1u64 << 61) - 1;

/// splitmix64 finalizer. Bijective on u64, used for digests and seed mixing.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Order-independent-free two-input mix (mix(a,b) != mix(b,a) in general).
pub fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b ^ 0xA5A5_5A5A_C3C3_3C3C))
}

/// Digest of a row's exact bit pattern. Rows are compared bit-for-bit, so
/// the digest keys caches and fallback encodings without tolerance issues.
pub fn digest_row(seed: u64, row: &[f64]) -> u64 {
    let mut state = splitmix64(seed ^ 0xD1B5_4A32_D192_ED03);
    for &v in row {
        state = splitmix64(state ^ v.to_bits());
    }
    state
}

/// Counter-based per-item RNG: independent streams for the same seed and
/// different counters, reproducible across runs and platforms.
pub fn row_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix2(seed, counter))
}

fn mersenne_reduce(x: u128) -> u64 {
    let lo = (x & (MERSENNE_P as u128)) as u64;
    let hi = (x >> 61) as u64;
    let mut s = lo.wrapping_add(hi);
    // hi < 2^67 / 2^61 bound does not hold in general for u128 inputs, so
    // callers keep factors below 2^61; then lo + hi < 2^62 and one fold
    // plus one conditional subtract suffice.
    if s >= MERSENNE_P {
        s -= MERSENNE_P;
        if s >= MERSENNE_P {
            s -= MERSENNE_P;
        }
    }
    s
}

fn mul_mod(a: u64, b: u64) -> u64 {
    mersenne_reduce((a as u128) * (b as u128))
}

fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_P {
        s - MERSENNE_P
    } else {
        s
    }
}

/// k-wise independent hash family: a random polynomial of degree k-1 over
/// GF(2^61 - 1), evaluated by Horner's rule. Outputs are uniform on
/// [0, 2^61 - 1) and k-wise independent across inputs.
#[derive(Debug, Clone)]
pub struct HashFamily {
    coeffs: Vec<u64>,
}

impl HashFamily {
    /// Draws the k coefficients deterministically from `seed`.
    pub fn new(k: usize, seed: u64) -> Self {
        let k = k.max(1);
        let mut state = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
        let mut coeffs = Vec::with_capacity(k);
        for _ in 0..k {
            // Rejection-free: the bias of reducing a 64-bit value mod a
            // 61-bit prime is ~2^-3 per draw, too coarse. Draw 61 bits and
            // reject the negligible slice at the top instead.
            loop {
                state = splitmix64(state);
                let v = state & ((1u64 << 61) - 1);
                if v < MERSENNE_P {
                    coeffs.push(v);
                    break;
                }
            }
        }
        HashFamily { coeffs }
    }

    pub fn independence(&self) -> usize {
        self.coeffs.len()
    }

    /// Evaluates the polynomial at `x` (reduced into the field first).
    pub fn eval(&self, x: u64) -> u64 {
        let x = x % MERSENNE_P;
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = add_mod(mul_mod(acc, x), c);
        }
        acc
    }

    /// Uniform value in {1, ..., m}. Bias is O(m / 2^61), negligible for
    /// the domain sizes used here.
    pub fn eval_in(&self, x: u64, m: u64) -> u64 {
        debug_assert!(m >= 1);
        self.eval(x) % m + 1
    }
}

/// Power-of-two scale drawn from a tag: min(round(N / h(t)), n) with
/// round(x) = 2^floor(log2 x) and h uniform on {1, ..., N}. For n = 2^r
/// and N a multiple of n this gives Pr[g = 2^q] = 2^-(q+1) for q < r and
/// Pr[g = n] = 2^-r, so E[g] = (log2 n)/2 + 1.
pub fn tag_scale(h: &HashFamily, tag: u64, domain: u64, n_cap: u64) -> u64 {
    debug_assert!(n_cap >= 1 && domain >= 1);
    let hv = h.eval_in(tag, domain);
    let ratio = domain / hv;
    debug_assert!(ratio >= 1);
    let pow = 1u64 << ratio.ilog2();
    pow.min(n_cap)
}

/// Default independence for tag-keyed hashing: 4 (d log2 n + log2 1/delta),
/// enough for every concentration step downstream.
pub fn default_independence(d: usize, n: u64, delta: f64) -> usize {
    let log_n = 64 - n.saturating_sub(1).leading_zeros() as usize;
    let log_inv_delta = (1.0 / delta).log2().ceil().max(1.0) as usize;
    4 * (d * log_n.max(1) + log_inv_delta)
}
