// SPDX-License-Identifier: Apache-2.0
//! Counter-addressed random streams.
//!
//! A stream is ChaCha8 keyed by `seed` with the ChaCha stream id set to
//! `stream_index`, so trajectory `i` of an ensemble always sees the same
//! numbers no matter which worker thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stream index reserved for centering pre-runs.
pub const PRERUN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}
