//! Exact reference computations on small enumerable SAS-MDPs.
//!
//! Everything here trades generality for verifiability: quantities the
//! learners estimate from samples (returns, gradients, Fisher information,
//! optimal values) are computed exactly by linear algebra or exhaustive
//! enumeration, so tests can hold the learners to tight tolerances.

mod bellman;
mod diagnostics;
mod enumeration;
mod gradient;

pub use bellman::{
    all_decision_lists, evaluate_policy, greedy_decision_list, sas_bellman_backup,
    sas_optimality_backup, sas_value_iteration, DecisionList, PolicyValue, ValueIteration,
};
pub use diagnostics::{gradient_norm_trend, LearningRateSchedule};
pub use enumeration::{
    enumerate_trajectories, enumerated_estimator_expectation, fim_from_loglik_hessian,
    EnumeratedDistribution, EnumeratedStep, EnumeratedTrajectory,
};
pub use gradient::{
    exact_fim, exact_grad_j, exact_j, natural_grad, occupancies, truncated_values, ExactReturn,
};

use crate::core::{ActionSet, StateId};
use crate::envs::TabularSasMdp;
use crate::policy::MaskedSoftmaxPolicy;

/// Action distribution of a policy on a tabular state, given the offered
/// set. Implemented by the learned softmax policy and by decision lists so
/// the same oracles evaluate both.
pub trait TabularActionDistribution {
    /// Probability of each base action; zero off the offered set.
    fn probs(&self, state: StateId, set: &ActionSet) -> Vec<f64>;
}

impl TabularActionDistribution for MaskedSoftmaxPolicy {
    fn probs(&self, state: StateId, set: &ActionSet) -> Vec<f64> {
        self.action_probabilities(&crate::core::State::Discrete(state), set)
    }
}

/// Policy quantities precomputed for every (state, offered set) pair of a
/// tabular SAS-MDP: probabilities and score vectors. Enumeration walks
/// touch these tables millions of times, so they are built once per
/// policy evaluation.
pub(crate) struct SetTable {
    pub set_prob: f64,
    /// Full base-length probability vector, zero off the mask.
    pub probs: Vec<f64>,
    pub available: Vec<usize>,
    /// Score vectors, parallel to `available`.
    pub psi: Vec<Vec<f64>>,
}

pub(crate) struct StateActionTables {
    pub num_params: usize,
    /// `entries[s][k]` mirrors `mdp.availability[s][k]`.
    pub entries: Vec<Vec<SetTable>>,
}

impl StateActionTables {
    pub fn build(mdp: &TabularSasMdp, policy: &MaskedSoftmaxPolicy) -> Self {
        assert_eq!(
            policy.num_actions(),
            mdp.num_actions,
            "policy and environment disagree on the base action count"
        );
        let entries = (0..mdp.num_states)
            .map(|s| {
                let state = crate::core::State::Discrete(s);
                let phi = policy.featurize(&state);
                mdp.availability[s]
                    .iter()
                    .map(|(set, set_prob)| {
                        let probs = policy.probabilities_from_features(&phi, set);
                        let available: Vec<usize> = set.available().collect();
                        let psi = available
                            .iter()
                            .map(|&a| policy.log_prob_grad_from_features(&phi, set, a))
                            .collect();
                        SetTable {
                            set_prob: *set_prob,
                            probs,
                            available,
                            psi,
                        }
                    })
                    .collect()
            })
            .collect();
        StateActionTables {
            num_params: policy.num_params(),
            entries,
        }
    }
}
