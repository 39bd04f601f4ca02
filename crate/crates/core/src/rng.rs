//! Deterministic, stream-indexed Gaussian draws.
//!
//! Every draw is a pure function of `(seed, stream)`: a `ChaCha8Rng` is seeded
//! from `seed` (via `SeedableRng::seed_from_u64`) and switched to the 64-bit
//! ChaCha stream `stream`; standard normals are then sampled with
//! `rand_distr::StandardNormal` (ziggurat). Simulations index streams by
//! `(trial, time)` so any prefix of any trial is reproducible on its own,
//! independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Vector;

/// Independent purposes get disjoint seeds derived from the user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Similarity = 1,
    Noise = 2,
    Initial = 3,
    Baseline = 4,
    Matrix = 5,
    Perturbation = 6,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, domain: Domain) -> u64 {
    mix(seed ^ mix(domain as u64))
}

/// Stream id for draw `time` of trial `trial`.
pub fn stream_id(trial: u64, time: u64) -> u64 {
    assert!(
        trial < 1 << 32 && time < 1 << 32,
        "stream index out of range"
    );
    (trial << 32) | time
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal vector determined by `(seed, stream)`.
pub fn gaussian_vector(dim: usize, seed: u64, stream: u64) -> Vector {
    let mut rng = stream_rng(seed, stream);
    Vector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut rng)))
}
