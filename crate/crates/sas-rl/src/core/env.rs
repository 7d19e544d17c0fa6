use crate::core::action_set::{sample_bernoulli_subset, ActionSet};
use crate::core::rng::RngHandle;
use crate::core::state::State;
use crate::core::trajectory::{Trajectory, Transition};

/// Static description of a stochastic-action-set decision process: the base
/// action count, discount, episode cap, and the availability probability of
/// the independent-inclusion action-set model.
#[derive(Clone, Debug, PartialEq)]
pub struct SasMdpSpec {
    pub num_base_actions: usize,
    pub gamma: f64,
    pub horizon: usize,
    /// Per-action inclusion probability of the action-set distribution,
    /// conditioned on the realized set being non-empty.
    pub availability: f64,
}

impl SasMdpSpec {
    pub fn validate(&self) {
        assert!(self.num_base_actions > 0, "need at least one base action");
        assert!(
            (0.0..=1.0).contains(&self.gamma),
            "discount {} outside [0, 1]",
            self.gamma
        );
        assert!(self.horizon > 0, "horizon must be positive");
        assert!(
            self.availability > 0.0 && self.availability <= 1.0,
            "availability {} outside (0, 1]",
            self.availability
        );
    }

    /// Draws an available-action set over the full base set. Redraws until
    /// non-empty, which realizes the conditioned distribution.
    pub fn sample_action_set(&self, rng: &mut RngHandle) -> ActionSet {
        let candidates: Vec<usize> = (0..self.num_base_actions).collect();
        sample_bernoulli_subset(self.num_base_actions, &candidates, self.availability, rng)
    }
}

/// An environment whose available actions are resampled every step.
///
/// `action_set` draws the set for the current state; `step` then requires an
/// action from that set. Environments keep their own current state, seeded
/// through `reset`.
pub trait SasEnv {
    fn num_base_actions(&self) -> usize;
    fn gamma(&self) -> f64;

    /// Upper bound on |reward| for a single step. Used for enumeration tail
    /// bounds and sanity checks.
    fn reward_bound(&self) -> f64;

    fn reset(&mut self, rng: &mut RngHandle) -> State;

    /// Samples the available-action set at the current state.
    fn action_set(&self, rng: &mut RngHandle) -> ActionSet;

    /// Advances the environment. Panics if `action` was not offered by the
    /// set sampled for this step; that is a policy bug, not noise.
    fn step(&mut self, action: usize, rng: &mut RngHandle) -> (State, f64, bool);
}

/// Anything that picks an action from an offered set: learned policies and
/// exploration wrappers.
pub trait ActionSelector {
    fn select(&self, state: &State, action_set: &ActionSet, rng: &mut RngHandle) -> usize;
}

/// Runs one episode of at most `horizon` steps. The selector sees exactly
/// the sets the environment offers; choosing an unavailable action is a
/// hard fault.
pub fn rollout(
    env: &mut dyn SasEnv,
    selector: &dyn ActionSelector,
    horizon: usize,
    rng: &mut RngHandle,
) -> Trajectory {
    assert!(horizon > 0, "horizon must be positive");
    let gamma = env.gamma();
    let mut state = env.reset(rng);
    let mut transitions = Vec::new();
    for _ in 0..horizon {
        let action_set = env.action_set(rng);
        let action = selector.select(&state, &action_set, rng);
        assert!(
            action_set.contains(action),
            "selector chose action {action} outside the available set"
        );
        let (next_state, reward, done) = env.step(action, rng);
        transitions.push(Transition {
            state,
            action_set,
            action,
            reward,
            next_state: next_state.clone(),
            done,
        });
        state = next_state;
        if done {
            break;
        }
    }
    Trajectory::from_transitions(transitions, gamma)
}
