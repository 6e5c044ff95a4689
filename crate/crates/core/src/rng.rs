//! Seed derivation and named random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator whose key is
//! derived from a (seed, index) pair and whose stream id names the kind of
//! draw. Adding draws to one stream never shifts the values of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids. The discriminants are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Germs = 1,
    Lengths = 2,
    Directions = 3,
    Field = 4,
    Resample = 5,
    Discretize = 6,
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for replicate or fiber `index` of a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
