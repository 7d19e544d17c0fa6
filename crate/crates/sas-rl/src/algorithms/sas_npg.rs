//! Natural policy gradient for stochastic action sets.
//!
//! The compatible-feature weights w are regressed toward the sampled
//! returns in score-vector space, one stochastic step per transition;
//! at the fixed point of that regression w is the natural gradient, so
//! the policy moves a fixed distance along w's direction each episode.

use serde::{Deserialize, Serialize};

use crate::core::Trajectory;
use crate::error::Result;
use crate::policy::MaskedSoftmaxPolicy;

/// Below this norm the direction w/|w| is numerical noise and the policy
/// stays put.
const MIN_STEP_NORM: f64 = 1e-12;

fn default_eta_theta() -> f64 {
    0.05
}
fn default_eta_w() -> f64 {
    0.05
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SasNpgConfig {
    pub eta_theta: f64,
    pub eta_w: f64,
}

impl Default for SasNpgConfig {
    fn default() -> Self {
        SasNpgConfig {
            eta_theta: default_eta_theta(),
            eta_w: default_eta_w(),
        }
    }
}

impl SasNpgConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("eta_theta", self.eta_theta), ("eta_w", self.eta_w)] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(crate::error::SasRlError::InvalidConfig(format!(
                    "{name} {rate} must be positive and finite"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NpgEpisodeInfo {
    pub w_norm: f64,
    /// False when the direction was too small to move the policy.
    pub theta_moved: bool,
}

pub struct SasNpgLearner {
    policy: MaskedSoftmaxPolicy,
    w: Vec<f64>,
    config: SasNpgConfig,
}

impl SasNpgLearner {
    pub fn new(policy: MaskedSoftmaxPolicy, config: SasNpgConfig) -> Self {
        config.validate().expect("invalid natural-gradient config");
        let n = policy.num_params();
        SasNpgLearner {
            policy,
            w: vec![0.0; n],
            config,
        }
    }

    pub fn policy(&self) -> &MaskedSoftmaxPolicy {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut MaskedSoftmaxPolicy {
        &mut self.policy
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn config(&self) -> &SasNpgConfig {
        &self.config
    }

    /// One episode: per transition w += eta_w (G_t - psi_t . w) psi_t,
    /// then a unit-normalized policy step along w. The weights w carry
    /// over between episodes, warm-starting the regression.
    pub fn sas_npg_episode(&mut self, trajectory: &Trajectory) -> NpgEpisodeInfo {
        assert!(!trajectory.is_empty(), "cannot learn from an empty episode");
        for (t, tr) in trajectory.transitions.iter().enumerate() {
            let psi = self.policy.log_prob_grad(&tr.state, &tr.action_set, tr.action);
            let predicted: f64 = psi.iter().zip(&self.w).map(|(p, w)| p * w).sum();
            let err = trajectory.returns[t] - predicted;
            for (w, &p) in self.w.iter_mut().zip(&psi) {
                *w += self.config.eta_w * err * p;
            }
        }
        let w_norm = self.w.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(w_norm.is_finite(), "compatible-feature weights blew up");
        let theta_moved = w_norm >= MIN_STEP_NORM;
        if theta_moved {
            let scale = self.config.eta_theta / w_norm;
            for (th, &w) in self.policy.theta_mut().iter_mut().zip(&self.w) {
                *th += scale * w;
            }
        }
        NpgEpisodeInfo {
            w_norm,
            theta_moved,
        }
    }
}
