//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// Labels for the independent streams carved out of one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Episode,
    Evaluation,
    Exploration,
    Replay,
    Mutation,
    Init,
    Sweep,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Episode => 0x45_50_49_53,
            Stream::Evaluation => 0x45_56_41_4c,
            Stream::Exploration => 0x45_58_50_4c,
            Stream::Replay => 0x52_45_50_4c,
            Stream::Mutation => 0x4d_55_54_41,
            Stream::Init => 0x49_4e_49_54,
            Stream::Sweep => 0x53_57_45_45,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed, a stream label and an index into a fresh 64-bit seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream.tag()) ^ index)
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, index))
}
