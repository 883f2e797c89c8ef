//! Seed-derived deterministic random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream addressed by
//! (seed, domain, index), so parallel or reordered work sees the same
//! numbers as a serial run.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::fmath;

pub type Rng = ChaCha8Rng;

/// Independent stream families. The discriminant is baked into the stream
/// id, so adding a variant never shifts existing streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Init = 1,
    Scene = 2,
    Shuffle = 3,
    Split = 4,
    Bootstrap = 5,
    Check = 6,
    Data = 7,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}

/// Uniform draw from [0, 1) with 53 bits of precision.
#[inline]
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from [lo, hi).
#[inline]
pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Unbiased uniform index in [0, n). n must be nonzero.
pub fn index(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % n) as usize;
        }
    }
}

/// Standard normal deviate via Box-Muller (one draw per call; the paired
/// deviate is discarded to keep call sites stateless).
pub fn normal(rng: &mut Rng) -> f64 {
    let u1 = (unit(rng)).max(1e-300);
    let u2 = unit(rng);
    fmath::sqrt(-2.0 * fmath::ln(u1)) * fmath::cos(2.0 * core::f64::consts::PI * u2)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
