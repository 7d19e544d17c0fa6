//! Linear-softmax policy over the available actions.
//!
//! Scores are linear in state features, one parameter block per base
//! action. Probabilities are a softmax restricted to the offered action
//! set: unavailable actions get probability exactly zero and the rest
//! renormalize.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{ActionSelector, ActionSet, RngHandle, State};
use crate::error::{Result, SasRlError};
use crate::features::FeatureMap;

/// Gradient with respect to the flat policy parameter vector, laid out as
/// `num_actions` consecutive blocks of `feature_dim` entries.
pub type PolicyGradientVector = Vec<f64>;

#[derive(Clone, Debug)]
pub struct MaskedSoftmaxPolicy {
    theta: Vec<f64>,
    features: FeatureMap,
    num_actions: usize,
}

/// Serialized form of a policy. The header fields let a loader reject a
/// parameter vector that does not match its feature construction.
#[derive(Serialize, Deserialize)]
struct PolicyCheckpoint {
    feature_dim: usize,
    num_actions: usize,
    features: FeatureMap,
    theta: Vec<f64>,
}

impl MaskedSoftmaxPolicy {
    /// Fresh policy with all parameters zero, which is uniform over every
    /// offered action set.
    pub fn new(features: FeatureMap, num_actions: usize) -> Self {
        assert!(num_actions > 0, "need at least one base action");
        let d = features.dim();
        MaskedSoftmaxPolicy {
            theta: vec![0.0; d * num_actions],
            features,
            num_actions,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) {
        assert_eq!(theta.len(), self.num_params(), "parameter length mismatch");
        self.theta = theta;
    }

    pub fn featurize(&self, state: &State) -> Vec<f64> {
        self.features.featurize(state)
    }

    /// Per-action scores y_a = theta_a . phi for all base actions.
    pub fn scores_from_features(&self, phi: &[f64]) -> Vec<f64> {
        let d = self.feature_dim();
        assert_eq!(phi.len(), d, "feature length mismatch");
        (0..self.num_actions)
            .map(|a| {
                let block = &self.theta[a * d..(a + 1) * d];
                block.iter().zip(phi).map(|(w, x)| w * x).sum()
            })
            .collect()
    }

    /// Probability of each base action under the masked softmax. Entries
    /// outside `action_set` are exactly zero; the rest sum to one. Panics
    /// if any available score is non-finite.
    pub fn action_probabilities(&self, state: &State, action_set: &ActionSet) -> Vec<f64> {
        let phi = self.featurize(state);
        self.probabilities_from_features(&phi, action_set)
    }

    pub fn probabilities_from_features(&self, phi: &[f64], action_set: &ActionSet) -> Vec<f64> {
        assert_eq!(
            action_set.num_base(),
            self.num_actions,
            "action set size mismatch"
        );
        let scores = self.scores_from_features(phi);
        let mut max_score = f64::NEG_INFINITY;
        for a in action_set.available() {
            let y = scores[a];
            assert!(y.is_finite(), "non-finite score {y} for action {a}");
            if y > max_score {
                max_score = y;
            }
        }
        let mut probs = vec![0.0; self.num_actions];
        let mut total = 0.0;
        for a in action_set.available() {
            let w = (scores[a] - max_score).exp();
            probs[a] = w;
            total += w;
        }
        // The maximizing action contributes exp(0) = 1, so total >= 1; the
        // guard documents the invariant rather than papering over it.
        assert!(total >= 1e-12, "softmax normalizer collapsed to {total}");
        for a in action_set.available() {
            probs[a] /= total;
        }
        probs
    }

    /// Samples an action from the masked softmax by inverse CDF over the
    /// available actions.
    pub fn sample_action(
        &self,
        state: &State,
        action_set: &ActionSet,
        rng: &mut RngHandle,
    ) -> usize {
        let probs = self.action_probabilities(state, action_set);
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut last = action_set.first_available();
        for a in action_set.available() {
            cum += probs[a];
            last = a;
            if u < cum {
                return a;
            }
        }
        // Floating-point shortfall in the CDF; the mass belongs to the tail.
        last
    }

    /// Gradient of log pi(action | state, action_set) with respect to the
    /// flat parameter vector: block a gets (1{a = action} - pi_a) * phi for
    /// available a, zero otherwise.
    pub fn log_prob_grad(
        &self,
        state: &State,
        action_set: &ActionSet,
        action: usize,
    ) -> PolicyGradientVector {
        let phi = self.featurize(state);
        self.log_prob_grad_from_features(&phi, action_set, action)
    }

    pub fn log_prob_grad_from_features(
        &self,
        phi: &[f64],
        action_set: &ActionSet,
        action: usize,
    ) -> PolicyGradientVector {
        assert!(
            action_set.contains(action),
            "action {action} not in the available set"
        );
        let probs = self.probabilities_from_features(phi, action_set);
        let d = self.feature_dim();
        let mut grad = vec![0.0; self.num_params()];
        for a in action_set.available() {
            let coef = if a == action { 1.0 - probs[a] } else { -probs[a] };
            let block = &mut grad[a * d..(a + 1) * d];
            for (g, &x) in block.iter_mut().zip(phi) {
                *g = coef * x;
            }
        }
        grad
    }

    pub fn log_prob(&self, state: &State, action_set: &ActionSet, action: usize) -> f64 {
        assert!(
            action_set.contains(action),
            "action {action} not in the available set"
        );
        let probs = self.action_probabilities(state, action_set);
        probs[action].ln()
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ckpt = PolicyCheckpoint {
            feature_dim: self.feature_dim(),
            num_actions: self.num_actions,
            features: self.features.clone(),
            theta: self.theta.clone(),
        };
        let json = serde_json::to_string_pretty(&ckpt)
            .expect("policy checkpoint serialization cannot fail");
        fs::write(path, json)
            .map_err(|e| SasRlError::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path)
            .map_err(|e| SasRlError::io(format!("reading checkpoint {}", path.display()), e))?;
        let ckpt: PolicyCheckpoint = serde_json::from_str(&json).map_err(|e| {
            SasRlError::ConfigParse {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        })?;
        if ckpt.features.dim() != ckpt.feature_dim {
            return Err(SasRlError::InvalidConfig(format!(
                "checkpoint feature_dim {} does not match feature map dim {}",
                ckpt.feature_dim,
                ckpt.features.dim()
            )));
        }
        if ckpt.theta.len() != ckpt.feature_dim * ckpt.num_actions {
            return Err(SasRlError::InvalidConfig(format!(
                "checkpoint has {} parameters, expected {}",
                ckpt.theta.len(),
                ckpt.feature_dim * ckpt.num_actions
            )));
        }
        let mut policy = MaskedSoftmaxPolicy::new(ckpt.features, ckpt.num_actions);
        policy.set_theta(ckpt.theta);
        Ok(policy)
    }
}

impl ActionSelector for MaskedSoftmaxPolicy {
    fn select(&self, state: &State, action_set: &ActionSet, rng: &mut RngHandle) -> usize {
        self.sample_action(state, action_set, rng)
    }
}
