//! Seeded random streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream so
//! that, for example, the edge classifier's initialization never shifts the
//! node model's dropout masks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    NodeInit = 1,
    EdgeInit = 2,
    Dropout = 3,
    Structure = 4,
    Split = 5,
    Graph = 6,
    Features = 7,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
