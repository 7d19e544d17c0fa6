//! SAS Bellman operators, value iteration, and decision-list policies.
//!
//! The evaluation operator averages over offered sets and the policy's
//! choice within each; the optimality operator averages over offered sets
//! and maximizes within each, because the set is revealed before acting.

use nalgebra::{DMatrix, DVector};

use crate::core::{ActionSet, StateId};
use crate::envs::TabularSasMdp;
use crate::error::{Result, SasRlError};
use crate::oracle::TabularActionDistribution;

/// One-step action values R(s, a) + gamma * sum_s2 P(s2 | s, a) v(s2).
fn lookahead(mdp: &TabularSasMdp, s: usize, v: &[f64]) -> Vec<f64> {
    (0..mdp.num_actions)
        .map(|a| {
            let future: f64 = mdp.transition[s][a]
                .iter()
                .zip(v)
                .map(|(&p, &vs)| p * vs)
                .sum();
            mdp.reward[s][a] + mdp.gamma * future
        })
        .collect()
}

/// Evaluation backup: v2(s) = sum_sets phi * sum_a pi(a | s, set) * q(s, a).
pub fn sas_bellman_backup(
    mdp: &TabularSasMdp,
    policy: &dyn TabularActionDistribution,
    v: &[f64],
) -> Vec<f64> {
    assert_eq!(v.len(), mdp.num_states);
    (0..mdp.num_states)
        .map(|s| {
            let q = lookahead(mdp, s, v);
            mdp.availability[s]
                .iter()
                .map(|(set, set_prob)| {
                    let probs = policy.probs(s, set);
                    let inner: f64 = set.available().map(|a| probs[a] * q[a]).sum();
                    set_prob * inner
                })
                .sum()
        })
        .collect()
}

/// Optimality backup: v2(s) = sum_sets phi * max over the set of q(s, a).
pub fn sas_optimality_backup(mdp: &TabularSasMdp, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), mdp.num_states);
    (0..mdp.num_states)
        .map(|s| {
            let q = lookahead(mdp, s, v);
            mdp.availability[s]
                .iter()
                .map(|(set, set_prob)| {
                    let best = set
                        .available()
                        .map(|a| q[a])
                        .fold(f64::NEG_INFINITY, f64::max);
                    set_prob * best
                })
                .sum()
        })
        .collect()
}

/// Per-state ranking over base actions; the executed action is the highest
/// ranked one that is available.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionList {
    rankings: Vec<Vec<usize>>,
}

impl DecisionList {
    pub fn new(rankings: Vec<Vec<usize>>) -> Self {
        for ranking in &rankings {
            let mut seen = ranking.clone();
            seen.sort_unstable();
            assert!(
                seen.iter().enumerate().all(|(i, &a)| i == a),
                "each ranking must be a permutation of the base actions"
            );
        }
        DecisionList { rankings }
    }

    pub fn rankings(&self) -> &[Vec<usize>] {
        &self.rankings
    }

    pub fn action(&self, state: StateId, set: &ActionSet) -> usize {
        *self.rankings[state]
            .iter()
            .find(|&&a| set.contains(a))
            .expect("offered set is non-empty, so some ranked action is available")
    }
}

impl TabularActionDistribution for DecisionList {
    fn probs(&self, state: StateId, set: &ActionSet) -> Vec<f64> {
        let mut probs = vec![0.0; set.num_base()];
        probs[self.action(state, set)] = 1.0;
        probs
    }
}

/// Ranks actions at each state by one-step lookahead value under `v`,
/// descending, ties to the lower index.
pub fn greedy_decision_list(mdp: &TabularSasMdp, v: &[f64]) -> DecisionList {
    let rankings = (0..mdp.num_states)
        .map(|s| {
            let q = lookahead(mdp, s, v);
            let mut order: Vec<usize> = (0..mdp.num_actions).collect();
            // Stable sort keeps ascending index order among exact ties.
            order.sort_by(|&a, &b| q[b].partial_cmp(&q[a]).expect("finite action values"));
            order
        })
        .collect();
    DecisionList::new(rankings)
}

/// All decision lists over the given sizes: every assignment of a
/// permutation to every state. Factorially explosive, so guarded; only
/// meant for brute-force optimality checks on tiny instances.
pub fn all_decision_lists(num_states: usize, num_actions: usize) -> Vec<DecisionList> {
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for shorter in permutations(n - 1) {
            for slot in 0..n {
                let mut perm = shorter.clone();
                perm.insert(slot, n - 1);
                out.push(perm);
            }
        }
        out
    }
    let perms = permutations(num_actions);
    let total = perms.len().checked_pow(num_states as u32);
    assert!(
        total.is_some_and(|t| t <= 2_000_000),
        "decision-list enumeration over {num_states} states x {num_actions} actions is too large"
    );
    let mut lists = vec![Vec::new(); 1];
    for _ in 0..num_states {
        let mut grown = Vec::with_capacity(lists.len() * perms.len());
        for partial in &lists {
            for perm in &perms {
                let mut next = partial.clone();
                next.push(perm.clone());
                grown.push(next);
            }
        }
        lists = grown;
    }
    lists.into_iter().map(DecisionList::new).collect()
}

/// Exact evaluation of a stationary policy: state values from the linear
/// system (I - gamma * P_pi) v = r_pi, and the start-weighted return.
#[derive(Clone, Debug)]
pub struct PolicyValue {
    pub values: Vec<f64>,
    pub j: f64,
}

pub fn evaluate_policy(
    mdp: &TabularSasMdp,
    policy: &dyn TabularActionDistribution,
) -> Result<PolicyValue> {
    let n = mdp.num_states;
    let mut p_pi = DMatrix::zeros(n, n);
    let mut r_pi = DVector::zeros(n);
    for s in 0..n {
        for (set, set_prob) in &mdp.availability[s] {
            let probs = policy.probs(s, set);
            for a in set.available() {
                let w = set_prob * probs[a];
                if w == 0.0 {
                    continue;
                }
                r_pi[s] += w * mdp.reward[s][a];
                for s2 in 0..n {
                    p_pi[(s, s2)] += w * mdp.transition[s][a][s2];
                }
            }
        }
    }
    let system = DMatrix::identity(n, n) - mdp.gamma * p_pi;
    let values = system
        .lu()
        .solve(&r_pi)
        .ok_or(SasRlError::SingularMatrix)?;
    let j = mdp
        .start
        .iter()
        .zip(values.iter())
        .map(|(&d, &v)| d * v)
        .sum();
    Ok(PolicyValue {
        values: values.iter().copied().collect(),
        j,
    })
}

#[derive(Clone, Debug)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub policy: DecisionList,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates the optimality backup from zero to sup-norm tolerance `tol`,
/// then extracts the greedy decision list. Requires gamma < 1 for the
/// contraction argument to apply.
pub fn sas_value_iteration(
    mdp: &TabularSasMdp,
    tol: f64,
    max_iterations: usize,
) -> Result<ValueIteration> {
    assert!(mdp.gamma < 1.0, "value iteration requires a discount below 1");
    assert!(tol > 0.0);
    let mut v = vec![0.0; mdp.num_states];
    for iteration in 1..=max_iterations {
        let next = sas_optimality_backup(mdp, &v);
        let residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= tol {
            let policy = greedy_decision_list(mdp, &v);
            return Ok(ValueIteration {
                values: v,
                policy,
                iterations: iteration,
                residual,
            });
        }
    }
    let residual = sas_optimality_backup(mdp, &v)
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Err(SasRlError::NotConverged {
        iterations: max_iterations,
        residual,
    })
}
