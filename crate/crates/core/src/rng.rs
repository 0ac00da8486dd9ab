//! Seeded, splittable random streams.
//!
//! A stream is ChaCha8 keyed with `SeedableRng::seed_from_u64(seed)`; substream
//! `k` is the same key with the ChaCha stream id set to `k`. Substream `k`
//! therefore depends only on `(seed, k)` and never on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

pub fn substream(seed: u64, k: u64) -> DetRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Uniform on `(0, 1]`.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Exponential with the given mean by inverse transform, `-mean * ln(U)`, `U` uniform on `(0, 1]`.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    -mean * open_unit(rng).ln()
}
