//! Replayable seeding.
//!
//! Every random stream is a ChaCha8 generator keyed by a seed derived from
//! the master seed, a stream tag and an index (path number, day, ...). The
//! derivation is a chain of SplitMix64 finalizers, so any single path or
//! decision can be regenerated in isolation on any machine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Consumption noise of scenario paths.
pub const STREAM_NOISE: u64 = 1;
/// DR event sequences of scenario paths.
pub const STREAM_DR: u64 = 2;
/// Futures sampled for rollout payoff-to-go estimates.
pub const STREAM_ROLLOUT: u64 = 3;
/// Paths used to fit the heuristic parameter.
pub const STREAM_FIT: u64 = 4;
/// Utility-scale draws of model-generated paths.
pub const STREAM_Z: u64 = 5;
/// Randomized property checks.
pub const STREAM_CHECK: u64 = 6;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-stream `indices` of `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, indices: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ splitmix64(stream));
    for i in indices {
        s = splitmix64(s ^ splitmix64(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    s
}

pub fn stream_rng(master: u64, stream: u64, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, indices))
}
