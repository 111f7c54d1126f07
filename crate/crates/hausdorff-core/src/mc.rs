//! Deterministic Monte-Carlo harness.
//!
//! All randomness in the library flows through [`ChaCha8Rng`], a seedable
//! counter-based generator: a sample stream is identified by `(seed, stream)`
//! and is reproducible across platforms and thread counts. Estimators split
//! work into fixed-size blocks, give block `i` the stream `i`, and reduce the
//! per-block partial sums in block order, so parallel execution returns
//! bit-identical results to the sequential one.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default number of samples per block.
pub const BLOCK_SIZE: usize = 4096;

/// RNG for block `stream` of the experiment identified by `seed`.
///
/// Distinct `(seed, stream)` pairs give statistically independent streams.
pub fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent sub-seed, so concurrent estimators inside one
/// experiment do not share block streams. Splitmix64 finalizer.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(tag.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    /// One standard error of the mean (0 for exact values).
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        McEstimate {
            value,
            std_error: 0.0,
            samples: 0,
        }
    }

    /// Half-width of the `z`-sigma confidence interval.
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.std_error
    }

    /// Combined standard error of the difference of two independent estimates.
    pub fn combined_sigma(&self, other: &McEstimate) -> f64 {
        (self.std_error * self.std_error + other.std_error * other.std_error).sqrt()
    }
}

/// Mean and standard error of `f` over `n` draws, evaluated block-parallel.
///
/// `f` receives a block-local RNG and must draw exactly what it consumes;
/// results depend only on `(seed, n)` and the fixed block size.
pub fn estimate_mean<F>(seed: u64, n: usize, f: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    assert!(n >= 1, "estimate_mean needs at least one sample");
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    let partials: Vec<(f64, f64, usize)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b as u64);
            let lo = b * BLOCK_SIZE;
            let hi = ((b + 1) * BLOCK_SIZE).min(n);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in lo..hi {
                let v = f(&mut rng);
                sum += v;
                sumsq += v * v;
            }
            (sum, sumsq, hi - lo)
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for (s, s2, _) in &partials {
        sum += s;
        sumsq += s2;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    McEstimate {
        value: mean,
        std_error: (var / nf).sqrt(),
        samples: n,
    }
}

/// Draw `n` values of `f`, block-parallel, concatenated in block order.
pub fn sample_stream<T, F>(seed: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b as u64);
            let lo = b * BLOCK_SIZE;
            let hi = ((b + 1) * BLOCK_SIZE).min(n);
            (lo..hi).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}
