//! Seed derivation and Gaussian sampling.
//!
//! All randomness in the library flows from explicit `u64` seeds. Sub-seeds
//! are derived by XOR-ing the base seed with a stable FNV-1a hash of a label,
//! so every random stream is named and reproducible across runs and builds.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Stable 64-bit FNV-1a hash; used instead of `DefaultHasher` so derived
/// seeds do not change across Rust releases.
pub fn fnv1a64(data: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in data.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a named sub-seed from a base seed.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    base ^ fnv1a64(label)
}

/// Deterministic RNG for a named stream.
pub fn stream(base: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(base, label))
}

pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// One pair of independent standard-normal samples (Box-Muller).
pub fn normal_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// A single standard-normal sample. Discards the spare Box-Muller value to
/// keep call sites stateless.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    normal_pair(rng).0
}

/// Circularly-symmetric complex Gaussian with total variance `variance`
/// (variance/2 per real component).
pub fn complex_normal<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let (re, im) = normal_pair(rng);
    let s = (variance / 2.0).sqrt();
    Complex64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable() {
        assert_eq!(derive_seed(7, "train-shuffle"), derive_seed(7, "train-shuffle"));
        assert_ne!(derive_seed(7, "train-shuffle"), derive_seed(7, "split"));
        assert_ne!(derive_seed(7, "x"), derive_seed(8, "x"));
    }

    #[test]
    fn complex_normal_variance() {
        let mut rng = rng_from_seed(42);
        let n = 200_000;
        let var = 2.5;
        let mean_sq: f64 =
            (0..n).map(|_| complex_normal(&mut rng, var).norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean_sq - var).abs() / var < 0.02, "empirical variance {mean_sq}");
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<f64> = {
            let mut r = stream(3, "noise");
            (0..8).map(|_| r.gen::<f64>()).collect()
        };
        let b: Vec<f64> = {
            let mut r = stream(3, "noise");
            (0..8).map(|_| r.gen::<f64>()).collect()
        };
        assert_eq!(a, b);
    }
}
