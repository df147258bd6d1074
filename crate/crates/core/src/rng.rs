//! Seeded generators. Every consumer of a user seed draws from its own
//! ChaCha20 stream so that, e.g., a subject and a start embedding built from
//! the same seed are independent.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    Embedding = 0,
    Subject = 1,
    Stimuli = 2,
    Noise = 3,
    ModelInit = 4,
    Shuffle = 5,
    Pool = 6,
}

pub(crate) fn seeded(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
