//! Policy gradient with dual additive baselines and adaptive baseline
//! weights.
//!
//! Per episode batch: fit the state-value and set-value critics toward the
//! sampled returns, step the policy along
//! sum_t (G_t + lambda_v v_hat + lambda_q q_bar) psi_t, then re-solve the
//! variance-minimizing lambda and track it with Polyak smoothing. The
//! discount weighting gamma^t is intentionally absent from the policy
//! step. Baseline values entering the policy step and the variance
//! statistics are snapshotted before this batch's critic updates touch the
//! weights.

use serde::{Deserialize, Serialize};

use crate::core::Trajectory;
use crate::error::Result;
use crate::estimators::{QEstimator, ValueEstimator};
use crate::features::FeatureMap;
use crate::policy::MaskedSoftmaxPolicy;
use crate::variance::{polyak_update, LambdaWeights, VarianceStats};

/// When the accumulated policy step is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaUpdateMode {
    /// Accumulate over the whole batch, apply once. The reference
    /// behavior.
    #[default]
    Batch,
    /// Apply immediately at every step; scores are recomputed under the
    /// moving parameters.
    PerStep,
}

/// What the variance statistics use for the return-weighted moment: the
/// sampled return, or the critic's value of the taken action. The sampled
/// return is the reference behavior; the critic variant is exposed for
/// experimentation only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CTarget {
    #[default]
    Return,
    QHat,
}

fn default_eta_theta() -> f64 {
    0.01
}
fn default_eta_v() -> f64 {
    0.05
}
fn default_eta_q() -> f64 {
    0.05
}
fn default_eta_lambda() -> f64 {
    0.999
}
fn default_ridge() -> f64 {
    1e-6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SasPgConfig {
    pub eta_theta: f64,
    pub eta_v: f64,
    pub eta_q: f64,
    /// Polyak retention of the current lambda; 0.999 keeps solves from
    /// whipping the baseline weights around.
    pub eta_lambda: f64,
    pub ridge: f64,
    pub theta_update: ThetaUpdateMode,
    pub c_target: CTarget,
}

impl Default for SasPgConfig {
    fn default() -> Self {
        SasPgConfig {
            eta_theta: default_eta_theta(),
            eta_v: default_eta_v(),
            eta_q: default_eta_q(),
            eta_lambda: default_eta_lambda(),
            ridge: default_ridge(),
            theta_update: ThetaUpdateMode::default(),
            c_target: CTarget::default(),
        }
    }
}

impl SasPgConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("eta_theta", self.eta_theta),
            ("eta_v", self.eta_v),
            ("eta_q", self.eta_q),
        ] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(crate::error::SasRlError::InvalidConfig(format!(
                    "{name} {rate} must be positive and finite"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.eta_lambda) {
            return Err(crate::error::SasRlError::InvalidConfig(format!(
                "eta_lambda {} outside [0, 1]",
                self.eta_lambda
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(crate::error::SasRlError::InvalidConfig(format!(
                "ridge {} must be nonnegative",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// Per-episode report: the solved baseline weights (when the solve
/// succeeded), the smoothed weights now in force, and the size of the
/// applied policy step.
#[derive(Clone, Copy, Debug)]
pub struct PgEpisodeInfo {
    pub solved_lambda: Option<LambdaWeights>,
    pub lambda: LambdaWeights,
    pub theta_step_norm: f64,
}

pub struct SasPgLearner {
    policy: MaskedSoftmaxPolicy,
    v_est: ValueEstimator,
    q_est: QEstimator,
    lambda: LambdaWeights,
    config: SasPgConfig,
}

impl SasPgLearner {
    /// Baseline weights start at [-0.5, -0.5]: each critic initially
    /// cancels half of itself, a neutral point between no baseline and
    /// full subtraction of either.
    pub fn new(policy: MaskedSoftmaxPolicy, critic_features: FeatureMap, config: SasPgConfig) -> Self {
        config.validate().expect("invalid policy-gradient config");
        let num_actions = policy.num_actions();
        SasPgLearner {
            policy,
            v_est: ValueEstimator::new(critic_features.clone()),
            q_est: QEstimator::new(critic_features, num_actions),
            lambda: LambdaWeights::default(),
            config,
        }
    }

    pub fn policy(&self) -> &MaskedSoftmaxPolicy {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut MaskedSoftmaxPolicy {
        &mut self.policy
    }

    pub fn value_estimator(&self) -> &ValueEstimator {
        &self.v_est
    }

    pub fn q_estimator(&self) -> &QEstimator {
        &self.q_est
    }

    pub fn lambda(&self) -> LambdaWeights {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: LambdaWeights) {
        self.lambda = lambda;
    }

    pub fn config(&self) -> &SasPgConfig {
        &self.config
    }

    /// One batch update from a completed episode.
    pub fn sas_pg_episode(&mut self, trajectory: &Trajectory) -> PgEpisodeInfo {
        assert!(!trajectory.is_empty(), "cannot learn from an empty episode");
        let steps = trajectory.transitions.len();

        // Snapshot everything the policy step and the variance statistics
        // consume, before any weight moves this batch.
        let mut cached_phi = Vec::with_capacity(steps);
        let mut cached_probs = Vec::with_capacity(steps);
        let mut cached_psi = Vec::with_capacity(steps);
        let mut cached_v = Vec::with_capacity(steps);
        let mut cached_qbar = Vec::with_capacity(steps);
        let mut cached_c = Vec::with_capacity(steps);
        for (t, tr) in trajectory.transitions.iter().enumerate() {
            let phi = self.policy.featurize(&tr.state);
            let probs = self.policy.probabilities_from_features(&phi, &tr.action_set);
            let psi = self
                .policy
                .log_prob_grad_from_features(&phi, &tr.action_set, tr.action);
            cached_v.push(self.v_est.v_hat(&tr.state));
            cached_qbar.push(self.q_est.q_bar_with_probs(&probs, &tr.state, &tr.action_set));
            cached_c.push(match self.config.c_target {
                CTarget::Return => trajectory.returns[t],
                CTarget::QHat => self.q_est.q_hat(&tr.state, tr.action),
            });
            cached_phi.push(phi);
            cached_probs.push(probs);
            cached_psi.push(psi);
        }

        // Critic regressions toward the sampled returns, sequential over
        // the batch.
        for (t, tr) in trajectory.transitions.iter().enumerate() {
            let g = trajectory.returns[t];
            self.v_est.update(&tr.state, g, self.config.eta_v);
            self.q_est.update_with_probs(
                &cached_probs[t],
                &tr.state,
                &tr.action_set,
                g,
                self.config.eta_q,
            );
        }

        // Policy step with the snapshotted baselines.
        let num_params = self.policy.num_params();
        let mut step_norm_sq = 0.0;
        match self.config.theta_update {
            ThetaUpdateMode::Batch => {
                let mut delta = vec![0.0; num_params];
                for t in 0..steps {
                    let advantage = trajectory.returns[t]
                        + self.lambda.v * cached_v[t]
                        + self.lambda.q * cached_qbar[t];
                    for (d, &p) in delta.iter_mut().zip(&cached_psi[t]) {
                        *d += advantage * p;
                    }
                }
                let eta = self.config.eta_theta;
                let theta = self.policy.theta_mut();
                for (th, d) in theta.iter_mut().zip(&delta) {
                    let change = eta * d;
                    *th += change;
                    step_norm_sq += change * change;
                }
            }
            ThetaUpdateMode::PerStep => {
                for (t, tr) in trajectory.transitions.iter().enumerate() {
                    // Scores must reflect the parameters as they move.
                    let psi = self.policy.log_prob_grad(&tr.state, &tr.action_set, tr.action);
                    let advantage = trajectory.returns[t]
                        + self.lambda.v * cached_v[t]
                        + self.lambda.q * cached_qbar[t];
                    let theta = self.policy.theta_mut();
                    for (th, &p) in theta.iter_mut().zip(&psi) {
                        let change = self.config.eta_theta * advantage * p;
                        *th += change;
                        step_norm_sq += change * change;
                    }
                }
            }
        }

        // Variance statistics from the snapshots, then the smoothed
        // baseline-weight update.
        let mut stats = VarianceStats::default();
        for t in 0..steps {
            stats.accumulate(&cached_psi[t], cached_v[t], cached_qbar[t], cached_c[t]);
        }
        let solved = stats.solve_lambda(self.config.ridge).ok();
        if let Some(new_hat) = solved {
            self.lambda = polyak_update(self.lambda, new_hat, self.config.eta_lambda);
        }

        PgEpisodeInfo {
            solved_lambda: solved,
            lambda: self.lambda,
            theta_step_norm: step_norm_sq.sqrt(),
        }
    }
}
