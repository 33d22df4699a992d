//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MlrRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> MlrRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`. Substreams of the same seed
/// never overlap, so chunked or concurrent work stays seed-deterministic.
pub fn substream(seed: u64, stream: u64) -> MlrRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
