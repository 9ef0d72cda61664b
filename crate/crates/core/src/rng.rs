//! Seeded random source with independent named substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Component that owns a substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Init,
    Mating,
    Sbx,
    Mutation,
    LlmSampling,
    LlmFallback,
    Metrics,
}

impl Stream {
    pub const ALL: [Stream; 7] = [
        Stream::Init,
        Stream::Mating,
        Stream::Sbx,
        Stream::Mutation,
        Stream::LlmSampling,
        Stream::LlmFallback,
        Stream::Metrics,
    ];

    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Mating => 2,
            Stream::Sbx => 3,
            Stream::Mutation => 4,
            Stream::LlmSampling => 5,
            Stream::LlmFallback => 6,
            Stream::Metrics => 7,
        }
    }
}

/// One ChaCha8 generator per [`Stream`], all keyed by the same seed but on
/// distinct stream ids, so drawing from one never shifts another.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    streams: Vec<ChaCha8Rng>,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        let streams = Stream::ALL
            .iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s.id());
                rng
            })
            .collect();
        Self { seed, streams }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, stream: Stream) -> &mut ChaCha8Rng {
        &mut self.streams[stream.id() as usize - 1]
    }
}
