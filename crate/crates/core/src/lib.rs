//! Reward-trail test environments on directed graphs.
//!
//! A session places one or more evaluable agents in a [`Space`] together
//! with two generator agents, Good and Evil, that drop positive and negative
//! reward trails. Trails halve every interaction and are eaten by whoever
//! stands on them. Agents are scored by their average reward.
//!
//! * [`space`]: the graph, its textual description and connectivity.
//! * [`generation`]: random spaces with connectivity rejection.
//! * [`agents`]: policies and interaction histories.
//! * [`observation`]: reward-free snapshots handed to agents.
//! * [`engine`]: the interaction loop.
//! * [`evaluation`]: scores, balance estimates, reward sensitivity and
//!   experiment suites.

pub mod agents;
pub mod engine;
pub mod evaluation;
pub mod generation;
pub mod observation;
pub mod space;
pub mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use agents::{
    AgentId, AgentIdentity, AgentSpec, GeneratorBehavior, GeneratorMode, HistoryBuffer,
    InteractionRecord, Policy, Role, TimeBounds,
};
pub use engine::{
    run_session, AgentScore, CollisionRule, ExternalMove, ObjectSpec, Placement, Relocation,
    Session, SessionConfig, SessionError, SessionResult, SpaceSource, StopCondition,
};
pub use generation::{GeneratedSpace, GenerationError, GenerationLimits};
pub use observation::{Observation, Occupant, Perspective, Snapshot};
pub use space::{Action, Cell, Connectivity, Space, SpaceError, SpaceObject};

/// The random stream type used everywhere in the crate.
pub type SessionRng = ChaCha8Rng;

/// A stream seeded from `seed` alone.
pub fn seeded_rng(seed: u64) -> SessionRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SessionRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a master seed with a path of counters into a child seed
/// (SplitMix64 finaliser over each component).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &part| {
        mix(acc
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(mix(part)))
    })
}
