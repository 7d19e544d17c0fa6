//! Exact horizon-truncated return, policy gradient, Fisher information,
//! and natural gradient, all computed from state occupancies rather than
//! trajectory enumeration.
//!
//! Truncation convention: every quantity here is exact for the
//! horizon-truncated objective J_H = E[sum_{t<H} gamma^t R_t]. Using the
//! (H - t)-step action values inside the gradient makes the gradient the
//! exact derivative of J_H, so finite differences of `exact_j` and
//! enumeration of H-step trajectories must agree to roundoff, not just to
//! the tail bound.

use nalgebra::{DMatrix, DVector};

use crate::envs::TabularSasMdp;
use crate::error::{Result, SasRlError};
use crate::oracle::{StateActionTables, TabularActionDistribution};
use crate::policy::MaskedSoftmaxPolicy;

/// State-occupancy probabilities `out[t][s]` = Pr(S_t = s) for t < horizon.
pub fn occupancies(
    mdp: &TabularSasMdp,
    policy: &dyn TabularActionDistribution,
    horizon: usize,
) -> Vec<Vec<f64>> {
    assert!(horizon > 0);
    let n = mdp.num_states;
    let mut out = Vec::with_capacity(horizon);
    out.push(mdp.start.clone());
    for t in 1..horizon {
        let prev = &out[t - 1];
        let mut next = vec![0.0; n];
        for s in 0..n {
            if prev[s] == 0.0 {
                continue;
            }
            for (set, set_prob) in &mdp.availability[s] {
                let probs = policy.probs(s, set);
                for a in set.available() {
                    let w = prev[s] * set_prob * probs[a];
                    if w == 0.0 {
                        continue;
                    }
                    for (s2, &p) in mdp.transition[s][a].iter().enumerate() {
                        if p > 0.0 {
                            next[s2] += w * p;
                        }
                    }
                }
            }
        }
        out.push(next);
    }
    out
}

/// m-step truncated values for m = 0..=horizon: `v[m][s]` is the expected
/// discounted return of running the policy for m steps from s, and
/// `q[m][s][a]` the same conditioned on taking `a` first.
#[allow(clippy::type_complexity)]
pub fn truncated_values(
    mdp: &TabularSasMdp,
    policy: &dyn TabularActionDistribution,
    horizon: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let n = mdp.num_states;
    let num_a = mdp.num_actions;
    let mut v = vec![vec![0.0; n]];
    let mut q = vec![vec![vec![0.0; num_a]; n]];
    for m in 1..=horizon {
        let prev_v = &v[m - 1];
        let mut qm = vec![vec![0.0; num_a]; n];
        let mut vm = vec![0.0; n];
        for s in 0..n {
            for a in 0..num_a {
                let future: f64 = mdp.transition[s][a]
                    .iter()
                    .zip(prev_v)
                    .map(|(&p, &vs)| p * vs)
                    .sum();
                qm[s][a] = mdp.reward[s][a] + mdp.gamma * future;
            }
            vm[s] = mdp.availability[s]
                .iter()
                .map(|(set, set_prob)| {
                    let probs = policy.probs(s, set);
                    let inner: f64 = set.available().map(|a| probs[a] * qm[s][a]).sum();
                    set_prob * inner
                })
                .sum();
        }
        q.push(qm);
        v.push(vm);
    }
    (v, q)
}

/// Horizon-truncated expected discounted return and the tail bound
/// gamma^H * R_max / (1 - gamma) on what truncation discards.
#[derive(Clone, Copy, Debug)]
pub struct ExactReturn {
    pub j: f64,
    pub tail_bound: f64,
}

pub fn exact_j(
    mdp: &TabularSasMdp,
    policy: &dyn TabularActionDistribution,
    horizon: usize,
) -> ExactReturn {
    let occ = occupancies(mdp, policy, horizon);
    let mut j = 0.0;
    let mut discount = 1.0;
    for row in occ.iter() {
        for s in 0..mdp.num_states {
            if row[s] == 0.0 {
                continue;
            }
            let r_pi: f64 = mdp.availability[s]
                .iter()
                .map(|(set, set_prob)| {
                    let probs = policy.probs(s, set);
                    let inner: f64 = set.available().map(|a| probs[a] * mdp.reward[s][a]).sum();
                    set_prob * inner
                })
                .sum();
            j += discount * row[s] * r_pi;
        }
        discount *= mdp.gamma;
    }
    let r_max = mdp.reward_bound();
    let tail_bound = if r_max == 0.0 {
        0.0
    } else if mdp.gamma < 1.0 {
        mdp.gamma.powi(horizon as i32) * r_max / (1.0 - mdp.gamma)
    } else {
        f64::INFINITY
    };
    ExactReturn { j, tail_bound }
}

/// Exact gradient of the truncated return: for every step t, state
/// occupancy times the offered-set average of q_{H-t}-weighted analytic
/// policy derivatives. The derivative of the masked softmax contributes
/// pi_a (q_a - sum_b pi_b q_b) to action a's block, which is used directly
/// rather than going through the score-vector code path.
pub fn exact_grad_j(
    mdp: &TabularSasMdp,
    policy: &MaskedSoftmaxPolicy,
    horizon: usize,
) -> Vec<f64> {
    let occ = occupancies(mdp, policy, horizon);
    let (_, q) = truncated_values(mdp, policy, horizon);
    let d = policy.feature_dim();
    let mut grad = vec![0.0; policy.num_params()];
    let mut discount = 1.0;
    for (t, row) in occ.iter().enumerate() {
        let remaining = horizon - t;
        for s in 0..mdp.num_states {
            if row[s] == 0.0 {
                continue;
            }
            let state = crate::core::State::Discrete(s);
            let phi = policy.featurize(&state);
            for (set, set_prob) in &mdp.availability[s] {
                let probs = policy.probabilities_from_features(&phi, set);
                let q_mean: f64 = set.available().map(|a| probs[a] * q[remaining][s][a]).sum();
                for a in set.available() {
                    let coef =
                        discount * row[s] * set_prob * probs[a] * (q[remaining][s][a] - q_mean);
                    if coef == 0.0 {
                        continue;
                    }
                    let block = &mut grad[a * d..(a + 1) * d];
                    for (g, &x) in block.iter_mut().zip(&phi) {
                        *g += coef * x;
                    }
                }
            }
        }
        discount *= mdp.gamma;
    }
    grad
}

/// Exact discounted Fisher information over the truncated horizon:
/// F = sum_t gamma^t E[psi psi^T] under the on-policy distribution.
/// Symmetric positive semidefinite by construction.
pub fn exact_fim(
    mdp: &TabularSasMdp,
    policy: &MaskedSoftmaxPolicy,
    horizon: usize,
) -> DMatrix<f64> {
    let tables = StateActionTables::build(mdp, policy);
    let occ = occupancies(mdp, policy, horizon);
    let n_params = tables.num_params;
    let mut fim = DMatrix::zeros(n_params, n_params);
    let mut discount = 1.0;
    for row in occ.iter() {
        for s in 0..mdp.num_states {
            if row[s] == 0.0 {
                continue;
            }
            for set_table in &tables.entries[s] {
                for (idx, &a) in set_table.available.iter().enumerate() {
                    let w = discount * row[s] * set_table.set_prob * set_table.probs[a];
                    if w == 0.0 {
                        continue;
                    }
                    let psi = &set_table.psi[idx];
                    for i in 0..n_params {
                        if psi[i] == 0.0 {
                            continue;
                        }
                        let wi = w * psi[i];
                        for j in 0..n_params {
                            fim[(i, j)] += wi * psi[j];
                        }
                    }
                }
            }
        }
        discount *= mdp.gamma;
    }
    fim
}

/// Natural gradient over the truncated horizon, computed two independent
/// ways which must agree: solving the compatible-features least-squares
/// normal equations F w = E[sum_t gamma^t psi_t q_{H-t}], and
/// preconditioning the exact gradient, (F + ridge I)^-1 grad J. Both use
/// the same ridge. Returns the least-squares solution after asserting the
/// routes agree within 1e-6.
pub fn natural_grad(
    mdp: &TabularSasMdp,
    policy: &MaskedSoftmaxPolicy,
    horizon: usize,
    ridge: f64,
) -> Result<Vec<f64>> {
    assert!(ridge >= 0.0);
    let tables = StateActionTables::build(mdp, policy);
    let occ = occupancies(mdp, policy, horizon);
    let (_, q) = truncated_values(mdp, policy, horizon);
    let n_params = tables.num_params;

    let mut rhs = DVector::zeros(n_params);
    let mut discount = 1.0;
    for (t, row) in occ.iter().enumerate() {
        let remaining = horizon - t;
        for s in 0..mdp.num_states {
            if row[s] == 0.0 {
                continue;
            }
            for set_table in &tables.entries[s] {
                for (idx, &a) in set_table.available.iter().enumerate() {
                    let w = discount * row[s] * set_table.set_prob * set_table.probs[a];
                    if w == 0.0 {
                        continue;
                    }
                    let wq = w * q[remaining][s][a];
                    for (r, &p) in rhs.iter_mut().zip(&set_table.psi[idx]) {
                        *r += wq * p;
                    }
                }
            }
        }
        discount *= mdp.gamma;
    }

    let system = exact_fim(mdp, policy, horizon) + DMatrix::identity(n_params, n_params) * ridge;
    let lu = system.lu();
    let w_least_squares = lu.solve(&rhs).ok_or(SasRlError::SingularMatrix)?;
    let grad = DVector::from_vec(exact_grad_j(mdp, policy, horizon));
    let w_preconditioned = lu.solve(&grad).ok_or(SasRlError::SingularMatrix)?;
    let gap = (&w_least_squares - &w_preconditioned)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    assert!(
        gap < 1e-6,
        "least-squares and preconditioned natural gradients disagree by {gap:e}"
    );
    Ok(w_least_squares.iter().copied().collect())
}
