//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so adding or skipping one consumer never shifts the
//! numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_THETA: u64 = 2;
pub const STREAM_BETA: u64 = 3;
pub const STREAM_USERS: u64 = 4;
pub const STREAM_ITEMS: u64 = 5;
pub const STREAM_SOCIAL: u64 = 6;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
