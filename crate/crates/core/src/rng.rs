//! Random number streams.
//!
//! Every replica owns one ChaCha8 stream seeded from a 64-bit value. ChaCha is
//! counter based and platform independent, so a seed fully determines a run.
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat), which
//! consumes the stream deterministically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::Point;

pub type SimRng = ChaCha8Rng;

pub fn stream(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal vector in the first `dim` components, zeros elsewhere.
pub fn normal_vector(rng: &mut SimRng, dim: usize) -> Point {
    let mut z = [0.0; 3];
    for c in z.iter_mut().take(dim) {
        *c = rng.sample(StandardNormal);
    }
    z
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}
