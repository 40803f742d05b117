//! Seeded, splittable random streams.
//!
//! A run is driven by a single 64-bit seed. Every consumer derives its own
//! ChaCha8 stream from a [`StreamFamily`] keyed by a purpose tag and a worker
//! (chunk) index, so results never depend on thread count or scheduling.
//! Families nest: `family.child(Purpose::Replicate, r)` yields an independent
//! family for replicate `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Generator used by every stochastic routine in the crate.
pub type SimRng = ChaCha8Rng;

/// Tags separating the streams consumed by different parts of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Ray generation for plain MC and MC-SOME; worker = chunk index.
    Rays = 1,
    /// Initial cone directions used for rotation replication.
    Rotations = 2,
    /// Metropolis-Hastings chain moves.
    Chain = 3,
    /// Replicate runs of an estimator.
    Replicate = 4,
    /// Descent iterations of the inverse solver.
    Descent = 5,
    /// Synthetic measurement generation.
    Measurements = 6,
    /// Sensitivity scan grid points.
    Scan = 7,
    /// Finite-difference and auxiliary runs.
    Auxiliary = 8,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn combine(a: u64, b: u64, c: u64) -> u64 {
    mix64(mix64(mix64(a) ^ b.rotate_left(17)) ^ c.rotate_left(41))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamFamily {
    key: u64,
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        Self { key: seed }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Independent sub-family, e.g. one per replicate or descent iteration.
    pub fn child(&self, purpose: Purpose, index: u64) -> Self {
        Self {
            key: combine(self.key, purpose as u64, index),
        }
    }

    /// The stream for `(purpose, worker)` within this family.
    pub fn rng(&self, purpose: Purpose, worker: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.key));
        rng.set_stream(combine(purpose as u64, worker, 0x5EED));
        rng
    }
}

/// Uniform sample on `[0, 1)` converted to `T`, never rounding up to 1.
#[inline]
pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u = T::lit(rng.gen::<f64>());
    if u < T::one() {
        u
    } else {
        T::one() - T::epsilon()
    }
}

/// Uniform sample on `(0, 1]`.
#[inline]
pub fn uniform_open0<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u = T::one() - uniform::<T, R>(rng);
    if u > T::zero() {
        u
    } else {
        T::min_positive_value()
    }
}
