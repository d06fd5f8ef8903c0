//! Tabular reinforcement learning with action persistence.
//!
//! An agent picks a *persistence option* `(a, k)`: repeat primitive action
//! `a` for `k` steps. This crate provides the finite-MDP substrate, the
//! k-persistent models and the all-persistence Bellman operator, the
//! persistent Q-learning family of agents, replay-buffer decomposition of
//! option executions, and Markov-chain diagnostics (Kemeny constant, entropy
//! rate, visitation heatmaps) for persistent policies.

pub mod agents;
pub mod analysis;
pub mod environments;
pub mod mdp;
pub mod operators;
pub mod replay;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The random generator used throughout; reproducible across platforms.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`, e.g. one per episode.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
