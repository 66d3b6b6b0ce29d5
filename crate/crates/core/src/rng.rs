//! Counter-based random streams so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when neither a flag nor `PERMTEST_SEED` supplies one.
pub const DEFAULT_SEED: u64 = 20_190_917;

/// Independent purposes that draw randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Simulation,
    Sampling,
    Partition,
}

impl Stream {
    fn salt(self) -> u64 {
        match self {
            Stream::Simulation => 0x243F_6A88_85A3_08D3,
            Stream::Sampling => 0x1319_8A2E_0370_7344,
            Stream::Partition => 0xA409_3822_299F_31D0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replicate `index` of `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ stream.salt()));
    rng.set_stream(index);
    rng
}
