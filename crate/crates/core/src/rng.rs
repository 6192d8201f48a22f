//! Seed derivation for independent, reproducible random streams.
//!
//! Every consumer of randomness (model init, initial mask, client sampling,
//! each client's local shuffles, partitioning) draws from its own stream
//! derived from the experiment seed, so the order in which streams are used
//! never changes what any one of them produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keep streams for different roles disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ModelInit = 1,
    InitialMask = 2,
    ClientSampling = 3,
    ClientTraining = 4,
    Partition = 5,
    Data = 6,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes the experiment seed with a stream tag and up to two indices
/// (typically round and client id).
pub fn derive_seed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(17))
}

pub fn stream_rng(seed: u64, stream: Stream, a: u64, b: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, a, b))
}
