//! Named random streams. Every consumer of randomness draws from its own
//! ChaCha stream derived from the run seed, so switching a component off
//! never shifts the draws seen by the others.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Parameter initialisation.
    Init,
    /// Minibatch order and augmentation.
    Data,
    /// Monte-Carlo noise for head weight draws.
    HeadNoise,
    /// Generator input noise.
    GenNoise,
    /// Post-mixup coefficients and amplitude-mixup partners.
    Mixup,
    /// Sampled-head metrics and evaluation.
    Eval,
    /// Dataset synthesis.
    Dataset,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Data => 2,
            Stream::HeadNoise => 3,
            Stream::GenNoise => 4,
            Stream::Mixup => 5,
            Stream::Eval => 6,
            Stream::Dataset => 7,
        }
    }
}

/// The generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

pub fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
