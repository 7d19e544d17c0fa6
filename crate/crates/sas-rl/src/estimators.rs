//! Linear value and action-value estimators used as control-variate inputs.
//!
//! Both are plain linear models over the same state features the policy
//! uses, trained by stochastic semi-gradient steps toward Monte Carlo
//! targets.

use crate::core::{ActionSet, State};
use crate::features::FeatureMap;
use crate::policy::MaskedSoftmaxPolicy;

/// State-value estimator v(s) = varpi . phi(s).
#[derive(Clone, Debug)]
pub struct ValueEstimator {
    varpi: Vec<f64>,
    features: FeatureMap,
}

impl ValueEstimator {
    pub fn new(features: FeatureMap) -> Self {
        let d = features.dim();
        ValueEstimator {
            varpi: vec![0.0; d],
            features,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.varpi
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.varpi
    }

    pub fn v_hat(&self, state: &State) -> f64 {
        let phi = self.features.featurize(state);
        self.varpi.iter().zip(&phi).map(|(w, x)| w * x).sum()
    }

    /// One stochastic step toward `target`:
    /// varpi += eta * (target - v_hat(state)) * phi(state).
    pub fn update(&mut self, state: &State, target: f64, eta: f64) {
        assert!(eta > 0.0, "step size must be positive");
        assert!(target.is_finite(), "non-finite regression target");
        let phi = self.features.featurize(state);
        let err = target - self.varpi.iter().zip(&phi).map(|(w, x)| w * x).sum::<f64>();
        for (w, x) in self.varpi.iter_mut().zip(&phi) {
            *w += eta * err * x;
        }
    }
}

/// Action-value estimator q(s, a) = omega_a . phi(s), one weight block per
/// base action.
#[derive(Clone, Debug)]
pub struct QEstimator {
    omega: Vec<f64>,
    features: FeatureMap,
    num_actions: usize,
}

impl QEstimator {
    pub fn new(features: FeatureMap, num_actions: usize) -> Self {
        assert!(num_actions > 0, "need at least one base action");
        let d = features.dim();
        QEstimator {
            omega: vec![0.0; d * num_actions],
            features,
            num_actions,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.omega
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.omega
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn q_hat(&self, state: &State, action: usize) -> f64 {
        assert!(action < self.num_actions, "action {action} out of range");
        let phi = self.features.featurize(state);
        self.q_hat_from_features(&phi, action)
    }

    fn q_hat_from_features(&self, phi: &[f64], action: usize) -> f64 {
        let d = phi.len();
        let block = &self.omega[action * d..(action + 1) * d];
        block.iter().zip(phi).map(|(w, x)| w * x).sum()
    }

    /// Policy-averaged action value over the offered set:
    /// sum_{a in action_set} pi(a | state, action_set) * q_hat(state, a).
    pub fn q_bar(
        &self,
        policy: &MaskedSoftmaxPolicy,
        state: &State,
        action_set: &ActionSet,
    ) -> f64 {
        let probs = policy.action_probabilities(state, action_set);
        self.q_bar_with_probs(&probs, state, action_set)
    }

    /// `q_bar` with the policy probabilities already in hand, so callers in
    /// an update loop can reuse one probability computation.
    pub fn q_bar_with_probs(&self, probs: &[f64], state: &State, action_set: &ActionSet) -> f64 {
        assert_eq!(probs.len(), self.num_actions, "probability length mismatch");
        let phi = self.features.featurize(state);
        action_set
            .available()
            .map(|a| probs[a] * self.q_hat_from_features(&phi, a))
            .sum()
    }

    /// One stochastic step of q_bar toward `target`. The gradient of q_bar
    /// with respect to action a's weight block is pi_a * phi, so every
    /// available block moves in proportion to its policy probability and
    /// unavailable blocks stay untouched:
    /// omega_a += eta * (target - q_bar) * pi_a * phi.
    pub fn update(
        &mut self,
        policy: &MaskedSoftmaxPolicy,
        state: &State,
        action_set: &ActionSet,
        target: f64,
        eta: f64,
    ) {
        let probs = policy.action_probabilities(state, action_set);
        self.update_with_probs(&probs, state, action_set, target, eta);
    }

    /// `update` with the policy probabilities already in hand.
    pub fn update_with_probs(
        &mut self,
        probs: &[f64],
        state: &State,
        action_set: &ActionSet,
        target: f64,
        eta: f64,
    ) {
        assert!(eta > 0.0, "step size must be positive");
        assert!(target.is_finite(), "non-finite regression target");
        let phi = self.features.featurize(state);
        let err = target - self.q_bar_with_probs(probs, state, action_set);
        let d = phi.len();
        for a in action_set.available() {
            let block = &mut self.omega[a * d..(a + 1) * d];
            for (w, x) in block.iter_mut().zip(&phi) {
                *w += eta * err * probs[a] * x;
            }
        }
    }

    /// Direct regression of a single action value toward `target`, used by
    /// tests to pin q_hat entries without going through a policy.
    pub fn fit_action_value(&mut self, state: &State, action: usize, target: f64, eta: f64) {
        assert!(eta > 0.0, "step size must be positive");
        assert!(target.is_finite(), "non-finite regression target");
        assert!(action < self.num_actions, "action {action} out of range");
        let phi = self.features.featurize(state);
        let err = target - self.q_hat_from_features(&phi, action);
        let d = phi.len();
        let block = &mut self.omega[action * d..(action + 1) * d];
        for (w, x) in block.iter_mut().zip(&phi) {
            *w += eta * err * x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn fresh_estimators_predict_zero() {
        let v = ValueEstimator::new(FeatureMap::OneHot { num_states: 3 });
        assert_eq!(v.v_hat(&State::Discrete(1)), 0.0);
        let q = QEstimator::new(FeatureMap::OneHot { num_states: 3 }, 2);
        assert_eq!(q.q_hat(&State::Discrete(2), 1), 0.0);
    }

    #[test]
    fn one_hot_update_moves_by_eta_times_error() {
        // With unit-norm features the update is v <- v + eta * (g - v).
        let mut v = ValueEstimator::new(FeatureMap::OneHot { num_states: 2 });
        v.update(&State::Discrete(0), 10.0, 0.25);
        assert_abs_diff_eq!(v.v_hat(&State::Discrete(0)), 2.5, epsilon = 1e-15);
        assert_eq!(v.v_hat(&State::Discrete(1)), 0.0);
    }

    #[test]
    fn repeated_updates_converge_geometrically() {
        let mut v = ValueEstimator::new(FeatureMap::OneHot { num_states: 1 });
        let target = -3.0;
        for _ in 0..200 {
            v.update(&State::Discrete(0), target, 0.1);
        }
        // Residual is (1 - 0.1)^200 * 3, about 2e-9.
        assert_abs_diff_eq!(v.v_hat(&State::Discrete(0)), target, epsilon = 1e-7);
    }

    #[test]
    fn q_bar_of_singleton_set_is_that_q_value() {
        let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 3);
        q.fit_action_value(&State::Discrete(0), 2, 7.0, 1.0);
        let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 1 }, 3);
        let set = ActionSet::single(3, 2);
        assert_abs_diff_eq!(
            q.q_bar(&policy, &State::Discrete(0), &set),
            7.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn q_bar_averages_with_policy_weights() {
        // Uniform policy over two available actions with q values 2 and 4:
        // the average is 3.
        let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 2);
        q.fit_action_value(&State::Discrete(0), 0, 2.0, 1.0);
        q.fit_action_value(&State::Discrete(0), 1, 4.0, 1.0);
        let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 1 }, 2);
        assert_abs_diff_eq!(
            q.q_bar(&policy, &State::Discrete(0), &ActionSet::full(2)),
            3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn q_bar_ignores_unavailable_action_values() {
        let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 3);
        q.fit_action_value(&State::Discrete(0), 0, 2.0, 1.0);
        let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 1 }, 3);
        let set = ActionSet::from_indices(3, &[0, 1]);
        let before = q.q_bar(&policy, &State::Discrete(0), &set);
        q.fit_action_value(&State::Discrete(0), 2, 100.0, 1.0);
        let after = q.q_bar(&policy, &State::Discrete(0), &set);
        assert_eq!(before, after);
    }

    #[test]
    fn q_bar_update_with_matched_target_is_a_no_op() {
        let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 2);
        q.fit_action_value(&State::Discrete(0), 0, 2.0, 1.0);
        q.fit_action_value(&State::Discrete(0), 1, 4.0, 1.0);
        let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 1 }, 2);
        let set = ActionSet::full(2);
        let target = q.q_bar(&policy, &State::Discrete(0), &set);
        let before = q.weights().to_vec();
        q.update(&policy, &State::Discrete(0), &set, target, 0.5);
        assert_eq!(q.weights(), before.as_slice());
    }

    #[test]
    fn q_bar_update_on_a_singleton_touches_one_block() {
        let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 2 }, 3);
        let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 2 }, 3);
        let set = ActionSet::single(3, 1);
        q.update(&policy, &State::Discrete(0), &set, 4.0, 0.5);
        assert_abs_diff_eq!(q.q_hat(&State::Discrete(0), 1), 2.0, epsilon = 1e-15);
        assert_eq!(q.q_hat(&State::Discrete(0), 0), 0.0);
        assert_eq!(q.q_hat(&State::Discrete(0), 2), 0.0);
        assert_eq!(q.q_hat(&State::Discrete(1), 1), 0.0);
    }

    #[test]
    fn repeated_q_bar_updates_reach_the_target() {
        // On one state the q_bar error contracts by (1 - eta * sum pi_a^2)
        // per step, a scalar fixed-point iteration.
        let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 3);
        let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 1 }, 3);
        let set = ActionSet::from_indices(3, &[0, 2]);
        for _ in 0..600 {
            q.update(&policy, &State::Discrete(0), &set, 5.0, 0.2);
        }
        assert_abs_diff_eq!(
            q.q_bar(&policy, &State::Discrete(0), &set),
            5.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn linear_targets_are_fit_exactly_on_one_hot() {
        let mut v = ValueEstimator::new(FeatureMap::OneHot { num_states: 4 });
        let targets = [1.5, -0.25, 0.0, 8.0];
        for _ in 0..400 {
            for (s, &g) in targets.iter().enumerate() {
                v.update(&State::Discrete(s), g, 0.2);
            }
        }
        for (s, &g) in targets.iter().enumerate() {
            assert_abs_diff_eq!(v.v_hat(&State::Discrete(s)), g, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn q_bar_lies_in_the_available_hull(
            weights in proptest::collection::vec(-4.0f64..4.0, 3),
            theta in proptest::collection::vec(-2.0f64..2.0, 3),
            mask_bits in 1u8..7,
        ) {
            let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 3);
            for (a, &w) in weights.iter().enumerate() {
                q.fit_action_value(&State::Discrete(0), a, w, 1.0);
            }
            let mut policy = MaskedSoftmaxPolicy::new(
                FeatureMap::OneHot { num_states: 1 }, 3);
            policy.set_theta(theta);
            let mask: Vec<bool> = (0..3).map(|a| mask_bits & (1 << a) != 0).collect();
            let set = ActionSet::new(mask);
            let bar = q.q_bar(&policy, &State::Discrete(0), &set);
            let lo = set.available().map(|a| weights[a]).fold(f64::INFINITY, f64::min);
            let hi = set.available().map(|a| weights[a]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(bar >= lo - 1e-12 && bar <= hi + 1e-12);
        }

        #[test]
        fn small_updates_reduce_the_squared_target_error(
            v0 in -3.0f64..3.0,
            target in -3.0f64..3.0,
            qw in proptest::collection::vec(-3.0f64..3.0, 2),
            mask_bits in 1u8..4,
        ) {
            prop_assume!((target - v0).abs() > 1e-6);
            let s = State::Discrete(0);
            let mut v = ValueEstimator::new(FeatureMap::OneHot { num_states: 1 });
            v.update(&s, v0, 1.0);
            let before = (target - v.v_hat(&s)).powi(2);
            v.update(&s, target, 0.01);
            prop_assert!((target - v.v_hat(&s)).powi(2) < before);

            let mut q = QEstimator::new(FeatureMap::OneHot { num_states: 1 }, 2);
            for (a, &w) in qw.iter().enumerate() {
                q.fit_action_value(&s, a, w, 1.0);
            }
            let policy = MaskedSoftmaxPolicy::new(FeatureMap::OneHot { num_states: 1 }, 2);
            let mask: Vec<bool> = (0..2).map(|a| mask_bits & (1 << a) != 0).collect();
            let set = ActionSet::new(mask);
            let q_before = (target - q.q_bar(&policy, &s, &set)).powi(2);
            prop_assume!(q_before > 1e-12);
            q.update(&policy, &s, &set, target, 0.01);
            prop_assert!((target - q.q_bar(&policy, &s, &set)).powi(2) < q_before);
        }
    }
}
