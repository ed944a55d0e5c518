//! Seed splitting. Every random stream in a run is derived from the run
//! seed, a purpose tag and an index, so streams never overlap and each batch
//! can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for [`derive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Permutation = 2,
    TrainBatch = 3,
    EvalBatch = 4,
    ProbeBatch = 5,
    PixelPermutation = 6,
    Shuffle = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(seed ⊕ tag·φ) ⊕ index)`.
pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    let tagged = seed ^ (stream as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(splitmix64(tagged) ^ index)
}

pub fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
