//! Master-seed splitting.
//!
//! A run has one master seed. Every random stream (initialisation, pre-training
//! shuffles, task order, dropout masks, random similarity, fine-tuning shuffles)
//! is a ChaCha8 generator keyed by the master seed and separated by a fixed
//! stream id, so two runs that share a master seed share e.g. their task order
//! no matter which similarity metric consumes the other streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init,
    PretrainShuffle,
    TaskOrder,
    SimilarityDraw,
    FinetuneShuffle,
    /// Dropout masks of trunk block `n`.
    Dropout(u32),
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::PretrainShuffle => 2,
            Stream::TaskOrder => 3,
            Stream::SimilarityDraw => 4,
            Stream::FinetuneShuffle => 5,
            Stream::Dropout(n) => 100 + n as u64,
        }
    }
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.id());
    rng
}
