//! Seeded RNG streams.
//!
//! One master seed fans out into named ChaCha streams so that a change in how
//! one subsystem draws randomness (say, the environment) does not perturb the
//! draws seen by another (say, the Homeostasis trigger).

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Named random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Environment dynamics: slips, episode resets.
    Env = 1,
    /// Action sampling from policies.
    Policy = 2,
    /// Homeostasis Bernoulli decisions.
    Homeo = 3,
    /// Replay-buffer batch sampling.
    Sampler = 4,
    /// Evaluation rollouts (isolated so evals never perturb training).
    Eval = 5,
    /// Offline dataset generation.
    Data = 6,
}

/// An independently seeded RNG for the given stream.
pub fn stream_rng(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// The set of streams one training loop owns.
pub struct RngSet {
    pub env: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub homeo: ChaCha8Rng,
    pub sampler: ChaCha8Rng,
}

impl RngSet {
    pub fn new(master_seed: u64) -> Self {
        RngSet {
            env: stream_rng(master_seed, Stream::Env),
            policy: stream_rng(master_seed, Stream::Policy),
            homeo: stream_rng(master_seed, Stream::Homeo),
            sampler: stream_rng(master_seed, Stream::Sampler),
        }
    }
}

/// RNG for the n-th evaluation pass of a run. Each eval gets a fresh stream
/// so evaluation cost never shifts the training trajectory.
pub fn eval_rng(master_seed: u64, eval_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ 0x5eed_0e0a_1d00_0000);
    rng.set_stream(Stream::Eval as u64 + (eval_index << 8));
    rng
}
