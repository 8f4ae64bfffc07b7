//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit generator. Independent work
//! items (augmentation sample `k`, phantom realisations) draw from their own
//! ChaCha8 stream: the 256-bit key is expanded from the 64-bit seed with
//! `seed_from_u64`, and the 64-bit ChaCha stream id is set to the item index.
//! Sample `k` therefore depends only on `(seed, k)`, never on scheduling or on
//! how many other samples were produced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for stream 0 of `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for work item `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
