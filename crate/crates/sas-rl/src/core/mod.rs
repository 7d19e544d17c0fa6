//! Shared vocabulary: states, action sets, trajectories, the environment
//! trait, and deterministic RNG streams.

mod action_set;
mod env;
mod rng;
mod state;
mod trajectory;

pub use action_set::{sample_bernoulli_subset, ActionSet};
pub use env::{rollout, ActionSelector, SasEnv, SasMdpSpec};
pub use rng::RngHandle;
pub use state::{State, StateId};
pub use trajectory::{discounted_return, Trajectory, Transition};
