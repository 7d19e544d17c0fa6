use crate::core::action_set::ActionSet;
use crate::core::state::State;

/// One environment step: the state, the realized available-action set, the
/// action taken from it, the reward, and the successor.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: State,
    pub action_set: ActionSet,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub done: bool,
}

/// Discounted returns-to-go for a reward sequence: `out[t] = sum_{k>=t}
/// gamma^(k-t) r_k`. Single backward pass; panics on an empty sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    assert!(!rewards.is_empty(), "reward sequence is empty");
    assert!(gamma >= 0.0, "discount must be non-negative, got {gamma}");
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// A finite episode together with its returns-to-go.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// `returns[t]` is the discounted return from step t to the end of the
    /// episode, computed once at construction.
    pub returns: Vec<f64>,
    pub gamma: f64,
}

impl Trajectory {
    pub fn from_transitions(transitions: Vec<Transition>, gamma: f64) -> Self {
        assert!(!transitions.is_empty(), "trajectory has no transitions");
        let rewards: Vec<f64> = transitions.iter().map(|tr| tr.reward).collect();
        let returns = discounted_return(&rewards, gamma);
        Trajectory {
            transitions,
            returns,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted episode reward.
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|tr| tr.reward).sum()
    }

    /// Discounted return from the start state, `returns[0]`.
    pub fn discounted_total(&self) -> f64 {
        self.returns[0]
    }
}
