//! Random streams and the seed-derivation contract.
//!
//! Every chain owns a single [`RngStream`]. Streams for parallel chains are
//! derived from a root seed and the chain index with [`derive_seed`], so a
//! run with four chains produces the same per-chain traces as four
//! single-chain runs seeded with the derived values.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type RngStream = ChaCha20Rng;

pub fn stream(seed: u64) -> RngStream {
    ChaCha20Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of chain `chain_index` under `root_seed`:
/// `splitmix64(root_seed ^ splitmix64(chain_index))`.
///
/// This function is part of the external contract of the CLI; changing it
/// invalidates every stored trace hash.
pub fn derive_seed(root_seed: u64, chain_index: u64) -> u64 {
    splitmix64(root_seed ^ splitmix64(chain_index))
}
