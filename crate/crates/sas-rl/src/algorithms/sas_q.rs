//! Q-learning with stochastic action sets: the bootstrap target maximizes
//! only over the actions actually offered at the next step.
//!
//! The per-transition update is deliberately kept as a standalone method
//! (`sas_q_step`) because its behavior under a fixed adversarial
//! availability pattern is the subject of the divergence demonstration:
//! constraining the next-step set can make the linear weights grow
//! geometrically even where the unconstrained update converges.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core::{ActionSet, RngHandle, SasEnv, State, Transition};
use crate::error::{Result, SasRlError};
use crate::features::FeatureMap;

fn default_eta() -> f64 {
    0.1
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_batch() -> usize {
    1
}
fn default_capacity() -> usize {
    10_000
}

/// Hyperparameters. `batch_size` transitions trigger an update; each
/// update sweeps the newest `batch_size * batches_per_update` buffered
/// transitions in arrival order. Both set to 1 gives the purely online
/// update on the latest transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SasQConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub batches_per_update: usize,
    pub buffer_capacity: usize,
}

impl Default for SasQConfig {
    fn default() -> Self {
        SasQConfig {
            eta: default_eta(),
            epsilon: default_epsilon(),
            batch_size: default_batch(),
            batches_per_update: default_batch(),
            buffer_capacity: default_capacity(),
        }
    }
}

impl SasQConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(SasRlError::InvalidConfig(format!(
                "q-learning rate {} must be positive and finite",
                self.eta
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(SasRlError::InvalidConfig(format!(
                "exploration rate {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.batch_size == 0 || self.batches_per_update == 0 {
            return Err(SasRlError::InvalidConfig(
                "batch sizes must be at least 1".into(),
            ));
        }
        if self.buffer_capacity < self.batch_size * self.batches_per_update {
            return Err(SasRlError::InvalidConfig(format!(
                "buffer capacity {} smaller than one update window {}",
                self.buffer_capacity,
                self.batch_size * self.batches_per_update
            )));
        }
        Ok(())
    }
}

/// Epsilon-greedy over the offered set only: with probability `epsilon` a
/// uniform available action, otherwise the available argmax, ties to the
/// lowest index.
pub fn epsilon_greedy(
    q_values: &[f64],
    action_set: &ActionSet,
    epsilon: f64,
    rng: &mut RngHandle,
) -> usize {
    assert_eq!(q_values.len(), action_set.num_base());
    assert!((0.0..=1.0).contains(&epsilon), "epsilon outside [0, 1]");
    use rand::Rng;
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let k = rng.gen_range(0..action_set.num_available());
        return action_set
            .available()
            .nth(k)
            .expect("index within available count");
    }
    let mut best = action_set.first_available();
    for a in action_set.available() {
        if q_values[a] > q_values[best] {
            best = a;
        }
    }
    best
}

/// Per-episode returns reported by `train_episode`.
#[derive(Clone, Copy, Debug)]
pub struct QEpisodeReturns {
    pub undiscounted: f64,
    pub discounted: f64,
}

/// A transition paired with the action set realized at the next state, the
/// set the bootstrap target is constrained to. `None` marks a terminal
/// transition whose target is the reward alone.
#[derive(Clone, Debug)]
pub struct StoredTransition {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub next_set: Option<ActionSet>,
}

/// Linear action-value learner, weights laid out per action block like the
/// policy's.
#[derive(Clone, Debug)]
pub struct SasQLearner {
    weights: Vec<f64>,
    features: FeatureMap,
    num_actions: usize,
    gamma: f64,
    config: SasQConfig,
    buffer: VecDeque<StoredTransition>,
    since_update: usize,
}

#[derive(Serialize, Deserialize)]
struct QCheckpoint {
    feature_dim: usize,
    num_actions: usize,
    gamma: f64,
    features: FeatureMap,
    weights: Vec<f64>,
}

impl SasQLearner {
    pub fn new(features: FeatureMap, num_actions: usize, gamma: f64, config: SasQConfig) -> Self {
        assert!(num_actions > 0);
        assert!((0.0..=1.0).contains(&gamma), "discount outside [0, 1]");
        config.validate().expect("invalid q-learning config");
        let d = features.dim();
        SasQLearner {
            weights: vec![0.0; d * num_actions],
            features,
            num_actions,
            gamma,
            config,
            buffer: VecDeque::new(),
            since_update: 0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn config(&self) -> &SasQConfig {
        &self.config
    }

    pub fn q_value(&self, state: &State, action: usize) -> f64 {
        assert!(action < self.num_actions);
        let phi = self.features.featurize(state);
        let d = phi.len();
        self.weights[action * d..(action + 1) * d]
            .iter()
            .zip(&phi)
            .map(|(w, x)| w * x)
            .sum()
    }

    /// Action values for every base action at `state`.
    pub fn q_values(&self, state: &State) -> Vec<f64> {
        let phi = self.features.featurize(state);
        let d = phi.len();
        (0..self.num_actions)
            .map(|a| {
                self.weights[a * d..(a + 1) * d]
                    .iter()
                    .zip(&phi)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }

    fn max_q_over(&self, state: &State, set: &ActionSet) -> f64 {
        let phi = self.features.featurize(state);
        let d = phi.len();
        let mut best = f64::NEG_INFINITY;
        for a in set.available() {
            let q: f64 = self.weights[a * d..(a + 1) * d]
                .iter()
                .zip(&phi)
                .map(|(w, x)| w * x)
                .sum();
            if q > best {
                best = q;
            }
        }
        best
    }

    /// One semi-gradient update. The target bootstraps only over
    /// `next_action_set`; pass `None` for terminal transitions, where the
    /// target is the reward alone.
    pub fn sas_q_step(&mut self, transition: &Transition, next_action_set: Option<&ActionSet>) {
        let target = match next_action_set {
            Some(set) => transition.reward + self.gamma * self.max_q_over(&transition.next_state, set),
            None => transition.reward,
        };
        let phi = self.features.featurize(&transition.state);
        let d = phi.len();
        let block = &mut self.weights[transition.action * d..(transition.action + 1) * d];
        let current: f64 = block.iter().zip(&phi).map(|(w, x)| w * x).sum();
        let err = target - current;
        for (w, x) in block.iter_mut().zip(&phi) {
            *w += self.config.eta * err * x;
        }
    }

    /// Records a transition and runs the batch-update schedule: every
    /// `batch_size` arrivals, one sweep over the newest
    /// `batch_size * batches_per_update` buffered transitions, oldest
    /// first.
    pub fn observe(&mut self, stored: StoredTransition) {
        if self.buffer.len() == self.config.buffer_capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(stored);
        self.since_update += 1;
        if self.since_update < self.config.batch_size {
            return;
        }
        self.since_update = 0;
        let window = self.config.batch_size * self.config.batches_per_update;
        let start = self.buffer.len().saturating_sub(window);
        for i in start..self.buffer.len() {
            let stored = self.buffer[i].clone();
            let transition = Transition {
                state: stored.state.clone(),
                action_set: ActionSet::single(self.num_actions, stored.action),
                action: stored.action,
                reward: stored.reward,
                next_state: stored.next_state.clone(),
                done: stored.next_set.is_none(),
            };
            self.sas_q_step(&transition, stored.next_set.as_ref());
        }
    }

    /// Runs one epsilon-greedy episode, feeding each transition through
    /// `observe`. The next step's action set is sampled once and shared
    /// between the bootstrap target and the following action choice, as a
    /// single environment interaction implies.
    pub fn train_episode(
        &mut self,
        env: &mut dyn SasEnv,
        horizon: usize,
        rng: &mut RngHandle,
    ) -> QEpisodeReturns {
        assert!(horizon > 0);
        assert_eq!(env.num_base_actions(), self.num_actions);
        let mut total = 0.0;
        let mut discounted = 0.0;
        let mut discount = 1.0;
        let mut state = env.reset(rng);
        let mut action_set = env.action_set(rng);
        for t in 0..horizon {
            let q = self.q_values(&state);
            let action = epsilon_greedy(&q, &action_set, self.config.epsilon, rng);
            let (next_state, reward, done) = env.step(action, rng);
            total += reward;
            discounted += discount * reward;
            discount *= self.gamma;
            let next_set = if done || t + 1 == horizon {
                None
            } else {
                Some(env.action_set(rng))
            };
            self.observe(StoredTransition {
                state,
                action,
                reward,
                next_state: next_state.clone(),
                next_set: next_set.clone(),
            });
            if done {
                break;
            }
            state = next_state;
            // Unwrap is safe: None only at done or horizon, both exits.
            action_set = match next_set {
                Some(set) => set,
                None => break,
            };
        }
        QEpisodeReturns {
            undiscounted: total,
            discounted,
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ckpt = QCheckpoint {
            feature_dim: self.features.dim(),
            num_actions: self.num_actions,
            gamma: self.gamma,
            features: self.features.clone(),
            weights: self.weights.clone(),
        };
        let json = serde_json::to_string_pretty(&ckpt)
            .expect("q checkpoint serialization cannot fail");
        fs::write(path, json)
            .map_err(|e| SasRlError::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load_checkpoint(path: &Path, config: SasQConfig) -> Result<Self> {
        let json = fs::read_to_string(path)
            .map_err(|e| SasRlError::io(format!("reading checkpoint {}", path.display()), e))?;
        let ckpt: QCheckpoint =
            serde_json::from_str(&json).map_err(|e| SasRlError::ConfigParse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        if ckpt.weights.len() != ckpt.feature_dim * ckpt.num_actions
            || ckpt.features.dim() != ckpt.feature_dim
        {
            return Err(SasRlError::InvalidConfig(
                "checkpoint dimensions are inconsistent".into(),
            ));
        }
        let mut learner = SasQLearner::new(ckpt.features, ckpt.num_actions, ckpt.gamma, config);
        learner.weights = ckpt.weights;
        Ok(learner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{counterexample_feature_map, CounterexampleEnv};
    use approx::assert_abs_diff_eq;

    /// Learner initialized exactly as the divergence demonstration
    /// requires: pairwise weights [-2, -5] on the two-state multiplier
    /// features, discount 1, rate 0.1.
    fn counterexample_learner(eta: f64) -> SasQLearner {
        let mut learner = SasQLearner::new(
            counterexample_feature_map(),
            2,
            1.0,
            SasQConfig {
                eta,
                ..SasQConfig::default()
            },
        );
        learner.weights_mut().copy_from_slice(&[-2.0, -5.0]);
        learner
    }

    fn repeated_transition() -> Transition {
        // State 0 to state 1 under action 1, zero reward.
        Transition {
            state: State::Discrete(0),
            action_set: ActionSet::single(2, 1),
            action: 1,
            reward: 0.0,
            next_state: State::Discrete(1),
            done: false,
        }
    }

    #[test]
    fn constrained_next_set_first_update_lands_on_minus_five_point_five() {
        let mut learner = counterexample_learner(0.1);
        let only_second = ActionSet::single(2, 1);
        learner.sas_q_step(&repeated_transition(), Some(&only_second));
        assert_abs_diff_eq!(learner.weights()[1], -5.5, epsilon = 1e-12);
        assert_abs_diff_eq!(learner.weights()[0], -2.0);
    }

    #[test]
    fn unconstrained_next_set_first_update_lands_on_minus_four_point_nine() {
        let mut learner = counterexample_learner(0.1);
        let both = ActionSet::full(2);
        learner.sas_q_step(&repeated_transition(), Some(&both));
        assert_abs_diff_eq!(learner.weights()[1], -4.9, epsilon = 1e-12);
    }

    #[test]
    fn terminal_target_is_the_reward_alone() {
        let mut learner = counterexample_learner(0.5);
        let transition = Transition {
            reward: 3.0,
            done: true,
            ..repeated_transition()
        };
        learner.sas_q_step(&transition, None);
        // Weight moves halfway from -5 toward the target 3.
        assert_abs_diff_eq!(learner.weights()[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn constrained_updates_grow_geometrically_and_diverge() {
        let mut learner = counterexample_learner(0.1);
        let only_second = ActionSet::single(2, 1);
        let transition = repeated_transition();
        let mut previous = learner.weights()[1];
        let mut crossing = None;
        for i in 1..=150 {
            learner.sas_q_step(&transition, Some(&only_second));
            let current = learner.weights()[1];
            // Each step multiplies the weight by exactly 1 + eta.
            assert_abs_diff_eq!(current, previous * 1.1, epsilon = 1e-9 * previous.abs());
            previous = current;
            if crossing.is_none() && current.abs() > 1e6 {
                crossing = Some(i);
            }
        }
        assert_eq!(crossing, Some(129));
    }

    #[test]
    fn unconstrained_updates_converge_to_minus_four() {
        let mut learner = counterexample_learner(0.1);
        let both = ActionSet::full(2);
        let transition = repeated_transition();
        let mut converged_at = None;
        for i in 1..=200 {
            learner.sas_q_step(&transition, Some(&both));
            let err = (learner.weights()[1] + 4.0).abs();
            // Error contracts by exactly 1 - eta per step.
            assert_abs_diff_eq!(err, 0.9f64.powi(i as i32), epsilon = 1e-9);
            if converged_at.is_none() && err < 1e-3 {
                converged_at = Some(i);
                break;
            }
        }
        assert_eq!(converged_at, Some(66));
    }

    #[test]
    fn epsilon_zero_takes_the_available_argmax() {
        let mut rng = RngHandle::new(3);
        let q = vec![5.0, 1.0, 3.0];
        let set = ActionSet::from_indices(3, &[1, 2]);
        // Action 0 has the best value but is unavailable.
        assert_eq!(epsilon_greedy(&q, &set, 0.0, &mut rng), 2);
    }

    #[test]
    fn ties_break_to_the_lowest_index() {
        let mut rng = RngHandle::new(4);
        let q = vec![5.0, 5.0, 1.0];
        assert_eq!(epsilon_greedy(&q, &ActionSet::full(3), 0.0, &mut rng), 0);
    }

    #[test]
    fn epsilon_one_is_uniform_over_the_set() {
        let mut rng = RngHandle::new(5);
        let q = vec![9.0, 0.0, 0.0];
        let set = ActionSet::from_indices(3, &[0, 2]);
        let mut counts = [0usize; 3];
        let n = 40_000;
        for _ in 0..n {
            counts[epsilon_greedy(&q, &set, 1.0, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for a in [0, 2] {
            let freq = counts[a] as f64 / n as f64;
            assert!((freq - 0.5).abs() < 0.01, "action {a} frequency {freq}");
        }
    }

    #[test]
    fn online_schedule_equals_direct_stepping() {
        // batch_size 1 / batches_per_update 1 must reproduce plain
        // per-transition updates exactly.
        let mut online = counterexample_learner(0.1);
        let mut direct = counterexample_learner(0.1);
        let only_second = ActionSet::single(2, 1);
        for _ in 0..10 {
            direct.sas_q_step(&repeated_transition(), Some(&only_second));
            online.observe(StoredTransition {
                state: State::Discrete(0),
                action: 1,
                reward: 0.0,
                next_state: State::Discrete(1),
                next_set: Some(only_second.clone()),
            });
        }
        assert_eq!(online.weights(), direct.weights());
    }

    #[test]
    fn batched_schedule_defers_then_sweeps() {
        let config = SasQConfig {
            eta: 0.1,
            batch_size: 3,
            ..SasQConfig::default()
        };
        let mut learner = SasQLearner::new(counterexample_feature_map(), 2, 1.0, config);
        learner.weights_mut().copy_from_slice(&[-2.0, -5.0]);
        let only_second = ActionSet::single(2, 1);
        let stored = StoredTransition {
            state: State::Discrete(0),
            action: 1,
            reward: 0.0,
            next_state: State::Discrete(1),
            next_set: Some(only_second),
        };
        learner.observe(stored.clone());
        learner.observe(stored.clone());
        // No update until the third arrival completes the batch.
        assert_abs_diff_eq!(learner.weights()[1], -5.0);
        learner.observe(stored);
        // Then three sweeps of the same geometric update.
        assert_abs_diff_eq!(learner.weights()[1], -5.0 * 1.1f64.powi(3), epsilon = 1e-12);
    }

    #[test]
    fn buffer_respects_capacity() {
        let config = SasQConfig {
            batch_size: 4,
            batches_per_update: 1,
            buffer_capacity: 4,
            ..SasQConfig::default()
        };
        let mut learner = SasQLearner::new(counterexample_feature_map(), 2, 1.0, config);
        let stored = StoredTransition {
            state: State::Discrete(0),
            action: 0,
            reward: 0.0,
            next_state: State::Discrete(1),
            next_set: None,
        };
        for _ in 0..20 {
            learner.observe(stored.clone());
        }
        assert_eq!(learner.buffer.len(), 4);
    }

    #[test]
    fn training_episode_runs_and_learns_finite_weights() {
        let mut env = CounterexampleEnv::default();
        let mut learner = SasQLearner::new(
            counterexample_feature_map(),
            2,
            1.0,
            SasQConfig {
                epsilon: 0.3,
                ..SasQConfig::default()
            },
        );
        let mut rng = RngHandle::new(9);
        for _ in 0..20 {
            let returns = learner.train_episode(&mut env, 10, &mut rng);
            assert_eq!(returns.undiscounted, 0.0);
            assert_eq!(returns.discounted, 0.0);
        }
        assert!(learner.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn checkpoint_round_trip_preserves_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        let mut learner = counterexample_learner(0.1);
        learner.weights_mut().copy_from_slice(&[0.25, -3.5]);
        learner.save_checkpoint(&path).unwrap();
        let loaded = SasQLearner::load_checkpoint(&path, SasQConfig::default()).unwrap();
        assert_eq!(loaded.weights(), learner.weights());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(SasQConfig {
            eta: 0.0,
            ..SasQConfig::default()
        }
        .validate()
        .is_err());
        assert!(SasQConfig {
            epsilon: 1.5,
            ..SasQConfig::default()
        }
        .validate()
        .is_err());
        assert!(SasQConfig {
            batch_size: 0,
            ..SasQConfig::default()
        }
        .validate()
        .is_err());
        assert!(SasQConfig {
            batch_size: 64,
            batches_per_update: 4,
            buffer_capacity: 100,
            ..SasQConfig::default()
        }
        .validate()
        .is_err());
    }
}
