//! Seeded random streams.
//!
//! Every source of randomness in a simulation is a ChaCha stream keyed by the
//! run seed and selected by a [`StreamRole`]. ChaCha is counter based, so two
//! roles never share state and a stream can be rebuilt from `(seed, role)`
//! alone, independent of thread scheduling or draw order in other streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamRole {
    /// Reward totals and delay draws of the reward channel.
    Rewards = 1,
    /// Next-state draws of the environment.
    Transitions = 2,
    /// Random model generation (e.g. Dirichlet transition tables).
    ModelGeneration = 3,
    /// Offline channel certification sampling.
    Certification = 4,
}

/// Builds the stream for `(seed, role)`.
pub fn stream(seed: u64, role: StreamRole) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}
