//! Exhaustive trajectory enumeration for small tabular SAS-MDPs.
//!
//! Two forms. The materialized form lists every trajectory with its exact
//! probability and supports literal expectations and the log-likelihood
//! used for finite-difference Fisher checks. The streaming form computes
//! the expectation of the baseline-corrected policy-gradient estimator by
//! a depth-first walk over trajectory prefixes without materializing
//! anything, which is what makes horizon-8 checks affordable.

use nalgebra::DMatrix;

use crate::core::{State, StateId};
use crate::envs::TabularSasMdp;
use crate::estimators::{QEstimator, ValueEstimator};
use crate::oracle::StateActionTables;
use crate::policy::MaskedSoftmaxPolicy;
use crate::variance::LambdaWeights;

/// Cap on materialized trajectories; the counting pass enforces it before
/// any memory is committed.
const MAX_TRAJECTORIES: usize = 5_000_000;

/// One step of an enumerated trajectory. `set_index` indexes the
/// environment's availability table for `state`, which pins down the
/// offered set exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumeratedStep {
    pub state: StateId,
    pub set_index: usize,
    pub action: usize,
}

#[derive(Clone, Debug)]
pub struct EnumeratedTrajectory {
    pub steps: Vec<EnumeratedStep>,
    pub probability: f64,
}

/// Every trajectory of length up to `horizon` (shorter ones end in a
/// terminal state) with its exact probability under a fixed policy.
#[derive(Clone, Debug)]
pub struct EnumeratedDistribution {
    pub trajectories: Vec<EnumeratedTrajectory>,
    pub horizon: usize,
}

impl EnumeratedDistribution {
    /// Sums to 1 within 1e-12; anything else means a probability leak.
    pub fn total_probability(&self) -> f64 {
        self.trajectories.iter().map(|t| t.probability).sum()
    }

    /// Literal expectation of the baseline-corrected estimator
    /// sum_t gamma^t (G_t + lambda_v v_hat + lambda_q q_bar) psi_t,
    /// computed trajectory by trajectory. Reference implementation for
    /// the streaming walk; quadratic in horizon and proud of it.
    pub fn expectation_of_estimator(
        &self,
        mdp: &TabularSasMdp,
        policy: &MaskedSoftmaxPolicy,
        lambda: &LambdaWeights,
        v_est: &ValueEstimator,
        q_est: &QEstimator,
    ) -> Vec<f64> {
        let tables = StateActionTables::build(mdp, policy);
        let baselines = baseline_table(mdp, &tables, lambda, v_est, q_est);
        let mut acc = vec![0.0; tables.num_params];
        for traj in &self.trajectories {
            let rewards: Vec<f64> = traj
                .steps
                .iter()
                .map(|st| mdp.reward[st.state][st.action])
                .collect();
            let returns = crate::core::discounted_return(&rewards, mdp.gamma);
            let mut discount = 1.0;
            for (t, step) in traj.steps.iter().enumerate() {
                let table = &tables.entries[step.state][step.set_index];
                let slot = table
                    .available
                    .iter()
                    .position(|&a| a == step.action)
                    .expect("enumerated action missing from its offered set");
                let weight = traj.probability
                    * discount
                    * (returns[t] + baselines[step.state][step.set_index]);
                for (a, &p) in acc.iter_mut().zip(&table.psi[slot]) {
                    *a += weight * p;
                }
                discount *= mdp.gamma;
            }
        }
        acc
    }

    /// Discounted expected log-likelihood sum_tau p_tau sum_t gamma^t
    /// log pi_theta(a_t | s_t, alpha_t), with p_tau frozen at the policy
    /// that produced this enumeration and the log term taken from the
    /// passed policy. Its negated Hessian at the producing policy is the
    /// discounted Fisher information.
    pub fn discounted_loglik(&self, mdp: &TabularSasMdp, policy: &MaskedSoftmaxPolicy) -> f64 {
        let log_tables: Vec<Vec<Vec<f64>>> = (0..mdp.num_states)
            .map(|s| {
                let phi = policy.featurize(&State::Discrete(s));
                mdp.availability[s]
                    .iter()
                    .map(|(set, _)| {
                        let probs = policy.probabilities_from_features(&phi, set);
                        (0..mdp.num_actions)
                            .map(|a| {
                                if set.contains(a) {
                                    probs[a].ln()
                                } else {
                                    f64::NEG_INFINITY
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        for traj in &self.trajectories {
            let mut inner = 0.0;
            let mut discount = 1.0;
            for step in &traj.steps {
                inner += discount * log_tables[step.state][step.set_index][step.action];
                discount *= mdp.gamma;
            }
            total += traj.probability * inner;
        }
        total
    }
}

/// Shared weight of the additive baseline at each (state, offered set):
/// lambda_v * v_hat(s) + lambda_q * q_bar(s, alpha).
fn baseline_table(
    mdp: &TabularSasMdp,
    tables: &StateActionTables,
    lambda: &LambdaWeights,
    v_est: &ValueEstimator,
    q_est: &QEstimator,
) -> Vec<Vec<f64>> {
    (0..mdp.num_states)
        .map(|s| {
            let state = State::Discrete(s);
            let v = v_est.v_hat(&state);
            mdp.availability[s]
                .iter()
                .enumerate()
                .map(|(k, (set, _))| {
                    let probs = &tables.entries[s][k].probs;
                    lambda.v * v + lambda.q * q_est.q_bar_with_probs(probs, &state, set)
                })
                .collect()
        })
        .collect()
}

/// Materialize every trajectory of the policy on `mdp` up to `horizon`
/// steps. Trajectories stop early in terminal states. Faults if the count
/// exceeds the materialization cap; use the streaming expectation instead
/// at that point.
pub fn enumerate_trajectories(
    mdp: &TabularSasMdp,
    policy: &MaskedSoftmaxPolicy,
    horizon: usize,
) -> EnumeratedDistribution {
    assert!(horizon > 0);
    let tables = StateActionTables::build(mdp, policy);
    // Counting pass first so an oversized request dies before allocating.
    let mut count = 0usize;
    for s in 0..mdp.num_states {
        if mdp.start[s] > 0.0 {
            count_walk(mdp, &tables, 0, s, horizon, &mut count);
        }
    }
    assert!(
        count <= MAX_TRAJECTORIES,
        "enumeration would produce {count} trajectories (cap {MAX_TRAJECTORIES})"
    );
    let mut out = Vec::with_capacity(count);
    let mut steps = Vec::with_capacity(horizon);
    for s in 0..mdp.num_states {
        if mdp.start[s] > 0.0 {
            materialize_walk(mdp, &tables, 0, s, mdp.start[s], horizon, &mut steps, &mut out);
        }
    }
    EnumeratedDistribution {
        trajectories: out,
        horizon,
    }
}

fn count_walk(
    mdp: &TabularSasMdp,
    tables: &StateActionTables,
    t: usize,
    state: usize,
    horizon: usize,
    count: &mut usize,
) {
    if t == horizon || mdp.terminal[state] {
        *count += 1;
        assert!(
            *count <= MAX_TRAJECTORIES,
            "enumeration exceeds the {MAX_TRAJECTORIES}-trajectory cap"
        );
        return;
    }
    for table in &tables.entries[state] {
        for &a in &table.available {
            if table.set_prob * table.probs[a] == 0.0 {
                continue;
            }
            for (s2, &p) in mdp.transition[state][a].iter().enumerate() {
                if p > 0.0 {
                    count_walk(mdp, tables, t + 1, s2, horizon, count);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn materialize_walk(
    mdp: &TabularSasMdp,
    tables: &StateActionTables,
    t: usize,
    state: usize,
    prob: f64,
    horizon: usize,
    steps: &mut Vec<EnumeratedStep>,
    out: &mut Vec<EnumeratedTrajectory>,
) {
    if t == horizon || mdp.terminal[state] {
        out.push(EnumeratedTrajectory {
            steps: steps.clone(),
            probability: prob,
        });
        return;
    }
    for (k, table) in tables.entries[state].iter().enumerate() {
        for &a in &table.available {
            let p = prob * table.set_prob * table.probs[a];
            if p == 0.0 {
                continue;
            }
            steps.push(EnumeratedStep {
                state,
                set_index: k,
                action: a,
            });
            for (s2, &tp) in mdp.transition[state][a].iter().enumerate() {
                if tp > 0.0 {
                    materialize_walk(mdp, tables, t + 1, s2, p * tp, horizon, steps, out);
                }
            }
            steps.pop();
        }
    }
}

/// Exact expectation of the baseline-corrected policy-gradient estimator
/// without materializing trajectories: a depth-first walk over trajectory
/// prefixes. Rests on the reordering
/// sum_t gamma^t G_t psi_t = sum_k gamma^k r_k Psi_k with Psi_k the
/// cumulative score through step k, so each prefix contributes its reward
/// term once, weighted by the prefix probability (all continuations of a
/// prefix sum to that probability). Baseline terms are per-step and
/// likewise attach to prefixes.
pub fn enumerated_estimator_expectation(
    mdp: &TabularSasMdp,
    policy: &MaskedSoftmaxPolicy,
    horizon: usize,
    lambda: &LambdaWeights,
    v_est: &ValueEstimator,
    q_est: &QEstimator,
) -> Vec<f64> {
    assert!(horizon > 0);
    let tables = StateActionTables::build(mdp, policy);
    let baselines = baseline_table(mdp, &tables, lambda, v_est, q_est);
    let discounts: Vec<f64> = (0..horizon)
        .scan(1.0, |d, _| {
            let cur = *d;
            *d *= mdp.gamma;
            Some(cur)
        })
        .collect();
    let mut walker = StreamWalker {
        mdp,
        tables: &tables,
        baselines,
        discounts,
        horizon,
        acc: vec![0.0; tables.num_params],
        // psi_cum[t] is the cumulative score after t steps of the current
        // prefix; level 0 stays all-zero.
        psi_cum: vec![vec![0.0; tables.num_params]; horizon + 1],
    };
    for s in 0..mdp.num_states {
        if mdp.start[s] > 0.0 {
            walker.walk(0, s, mdp.start[s]);
        }
    }
    walker.acc
}

struct StreamWalker<'a> {
    mdp: &'a TabularSasMdp,
    tables: &'a StateActionTables,
    baselines: Vec<Vec<f64>>,
    discounts: Vec<f64>,
    horizon: usize,
    acc: Vec<f64>,
    psi_cum: Vec<Vec<f64>>,
}

impl StreamWalker<'_> {
    fn walk(&mut self, t: usize, state: usize, prob: f64) {
        if t == self.horizon || self.mdp.terminal[state] {
            return;
        }
        let discount = self.discounts[t];
        for (k, table) in self.tables.entries[state].iter().enumerate() {
            for (slot, &a) in table.available.iter().enumerate() {
                let p = prob * table.set_prob * table.probs[a];
                if p == 0.0 {
                    continue;
                }
                let psi = &table.psi[slot];
                let (head, tail) = self.psi_cum.split_at_mut(t + 1);
                for ((next, &cur), &component) in
                    tail[0].iter_mut().zip(&head[t]).zip(psi)
                {
                    *next = cur + component;
                }
                let reward_weight = p * discount * self.mdp.reward[state][a];
                if reward_weight != 0.0 {
                    for (a_i, &cum) in self.acc.iter_mut().zip(&self.psi_cum[t + 1]) {
                        *a_i += reward_weight * cum;
                    }
                }
                let baseline_weight = p * discount * self.baselines[state][k];
                if baseline_weight != 0.0 {
                    for (a_i, &component) in self.acc.iter_mut().zip(psi) {
                        *a_i += baseline_weight * component;
                    }
                }
                for (s2, &tp) in self.mdp.transition[state][a].iter().enumerate() {
                    if tp > 0.0 {
                        self.walk(t + 1, s2, p * tp);
                    }
                }
            }
        }
    }
}

/// Discounted Fisher information via central finite differences of the
/// enumerated discounted log-likelihood: F = -H where
/// H_ij = d2 m / dtheta_i dtheta_j, estimated with the 4-point stencil
/// [m(+i+j) - m(+i-j) - m(-i+j) + m(-i-j)] / (4 step^2). Symmetric by
/// construction. Agreement with the closed-form Fisher hinges on both
/// using the same gamma^t weighting.
pub fn fim_from_loglik_hessian(
    mdp: &TabularSasMdp,
    policy: &MaskedSoftmaxPolicy,
    horizon: usize,
    step: f64,
) -> DMatrix<f64> {
    assert!(step > 0.0);
    let dist = enumerate_trajectories(mdp, policy, horizon);
    let n = policy.num_params();
    let eval = |offsets: &[(usize, f64)]| {
        let mut perturbed = policy.clone();
        for &(i, delta) in offsets {
            perturbed.theta_mut()[i] += delta;
        }
        dist.discounted_loglik(mdp, &perturbed)
    };
    let mut fim = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let pp = eval(&[(i, step), (j, step)]);
            let pm = eval(&[(i, step), (j, -step)]);
            let mp = eval(&[(i, -step), (j, step)]);
            let mm = eval(&[(i, -step), (j, -step)]);
            let h = (pp - pm - mp + mm) / (4.0 * step * step);
            fim[(i, j)] = -h;
            fim[(j, i)] = -h;
        }
    }
    fim
}
