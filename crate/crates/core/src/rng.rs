//! Seeded random streams.
//!
//! Every random quantity derives from one 64-bit master seed. Independent
//! substreams are ChaCha streams keyed by the master seed and selected by a
//! 64-bit stream id built from a stage tag and a substream index, so parallel
//! work can be split without sharing generator state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Returns the generator for `(stage, index)` under `master`.
pub fn substream(master: u64, stage: u32, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(((stage as u64) << 40) ^ index);
    rng
}

/// A master seed plus stage tag from which numbered substreams are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    pub master: u64,
    pub stage: u32,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master, stage: 0 }
    }

    /// Draws a fresh master seed from `rng`, so callers holding a generator
    /// can fan out deterministic parallel work.
    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(rng.random())
    }

    pub fn stage(self, stage: u32) -> Self {
        Self { stage, ..self }
    }

    pub fn stream(&self, index: u64) -> StreamRng {
        substream(self.master, self.stage, index)
    }
}
