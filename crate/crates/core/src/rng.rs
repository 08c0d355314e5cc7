//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! `(seed, stream)` pair, so each `(iteration, replica)` owns an independent
//! stream and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const REPLICA_BITS: u32 = 24;
const OBJECTIVE_TAG: u64 = 1 << 63;
const INIT_TAG: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

impl StreamId {
    pub fn new(seed: u64, stream: u64) -> Self {
        StreamId { seed, stream }
    }

    /// Stream for replica `replica` of gradient draw `iteration`.
    pub fn replica(seed: u64, iteration: u64, replica: u64) -> Self {
        debug_assert!(replica < 1 << REPLICA_BITS);
        StreamId::new(seed, (iteration << REPLICA_BITS) | replica)
    }

    /// Stream reserved for objective estimates at `iteration`.
    pub fn objective(seed: u64, iteration: u64) -> Self {
        StreamId::new(seed, OBJECTIVE_TAG | iteration)
    }

    /// Stream reserved for drawing a random starting point.
    pub fn init(seed: u64) -> Self {
        StreamId::new(seed, INIT_TAG)
    }

    /// Sub-stream `index` of this stream, e.g. one per replica in a batch.
    pub fn child(self, index: u64) -> Self {
        StreamId::new(self.seed, self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index + 1))
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
