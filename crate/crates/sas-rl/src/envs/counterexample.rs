//! Two-state example on which action-value bootstrapping diverges when the
//! maximization is restricted to the realized next action set.
//!
//! States s0 and s1; actions a0 and a1 lead deterministically to s0 and s1
//! from anywhere; every reward is zero, so every true action value is zero.
//! The linear approximator q(s, a) = m(s) * w_a with multipliers m(s0) = 1
//! and m(s1) = 2 couples the two states through a shared weight per action.
//! Repeatedly presenting the transition (s0, a1) -> s1 with only a1
//! available next multiplies w_1 by (1 + eta) each update, which diverges,
//! while offering both next actions lets the a0 column pin the target and
//! the same update converges.

use crate::core::{ActionSet, RngHandle, SasEnv, State};
use crate::features::FeatureMap;

/// Feature slot and multiplier of the paired-weight approximator: action
/// `a`'s weight, scaled by 1 in state 0 and by 2 in state 1.
pub fn counterexample_features(state: usize, action: usize) -> (usize, f64) {
    assert!(state < 2, "counterexample has two states");
    assert!(action < 2, "counterexample has two actions");
    (action, (state + 1) as f64)
}

/// The same approximator expressed as a feature table, so the generic
/// linear learners reproduce the paired-weight updates exactly.
pub fn counterexample_feature_map() -> FeatureMap {
    FeatureMap::Table {
        rows: vec![vec![1.0], vec![2.0]],
    }
}

#[derive(Clone, Debug)]
pub struct CounterexampleEnv {
    pub gamma: f64,
    state: usize,
}

impl CounterexampleEnv {
    pub fn new(gamma: f64) -> Self {
        assert!((0.0..=1.0).contains(&gamma));
        CounterexampleEnv { gamma, state: 0 }
    }
}

impl Default for CounterexampleEnv {
    /// The divergence demonstration uses an undiscounted update.
    fn default() -> Self {
        CounterexampleEnv::new(1.0)
    }
}

impl SasEnv for CounterexampleEnv {
    fn num_base_actions(&self) -> usize {
        2
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        0.0
    }

    fn reset(&mut self, _rng: &mut RngHandle) -> State {
        self.state = 0;
        State::Discrete(0)
    }

    fn action_set(&self, _rng: &mut RngHandle) -> ActionSet {
        ActionSet::full(2)
    }

    fn step(&mut self, action: usize, _rng: &mut RngHandle) -> (State, f64, bool) {
        assert!(action < 2, "action {action} out of range");
        self.state = action;
        (State::Discrete(self.state), 0.0, false)
    }
}
