//! Random streams. Every chain owns a `Pcg32` (PCG-XSH-RR, 64-bit state,
//! 32-bit output) whose stream selector is the chain index, so chains that
//! share a seed still draw from disjoint sequences.

use rand::{Rng, RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg32;

pub type ChainRng = Pcg32;

/// Generator for chain `stream` under `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    Pcg32::new(seed ^ 0x853c_49e6_748f_ea9b, stream)
}

/// Generator seeded from a single value, for one-off draws.
pub fn seeded(seed: u64) -> ChainRng {
    Pcg32::seed_from_u64(seed)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Uniform draw on `[0, 1)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
