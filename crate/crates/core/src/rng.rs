//! Deterministic seed derivation.
//!
//! Every random stream in the simulator is derived from the single master
//! seed plus a role tag (and indices like domain or client id), so that
//! reordering or parallelizing work cannot perturb any stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag: model initialization.
pub const TAG_INIT: u64 = 1;
/// Stream tag: synthetic data generation (combined with the domain id).
pub const TAG_DATA: u64 = 2;
/// Stream tag: client partitioning (combined with the domain id).
pub const TAG_PARTITION: u64 = 3;
/// Stream tag: per-client local training (combined with client id and round).
pub const TAG_CLIENT: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of tags into a derived stream seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t));
    }
    h
}

/// A seeded generator for the stream identified by `tags`.
pub fn rng_from(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
