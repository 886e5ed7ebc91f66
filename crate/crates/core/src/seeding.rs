//! Deterministic seed derivation.
//!
//! Every stochastic component draws from a [`rand_chacha::ChaCha8Rng`] whose
//! seed is derived from a user-facing base seed plus a list of integer tags
//! (iteration, particle, episode, purpose). Seeds therefore never depend on
//! thread scheduling, which is what makes results identical at any worker
//! count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag for population objective evaluations.
pub const PURPOSE_EVAL: u64 = 1;
/// Purpose tag for annealing proposal evaluations.
pub const PURPOSE_ANNEAL: u64 = 2;
/// Purpose tag for validation rollouts.
pub const PURPOSE_VALIDATE: u64 = 3;
/// Purpose tag for ad hoc rollouts (CLI `rollout`, latency probes).
pub const PURPOSE_ROLLOUT: u64 = 4;
/// Purpose tag for the optimizer's own move and proposal draws.
pub const PURPOSE_SWARM: u64 = 5;

/// Mixes a base seed with tags into a new 64-bit seed.
///
/// Uses iterated splitmix64 finalisation, so nearby tag values produce
/// uncorrelated seeds.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix(base);
    for &t in tags {
        acc = splitmix(acc ^ splitmix(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    acc
}

/// Creates the RNG for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(v: u64) -> u64 {
    let mut z = v.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
