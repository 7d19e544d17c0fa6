//! The two-state divergence demonstration, packaged as a harness op: the
//! same transition updated repeatedly with a constrained next action set
//! (geometric blow-up) and with the full set (geometric convergence to
//! the true value -4).

use std::fmt::Write as _;

use crate::algorithms::{SasQConfig, SasQLearner};
use crate::core::{ActionSet, State, Transition};
use crate::envs::counterexample_feature_map;

/// Per-iteration second-weight values under both update modes, plus the
/// iterations (1-based) at which each mode hit its landmark: magnitude
/// above 1e6 for the constrained run, within 1e-3 of -4 for the
/// unconstrained.
#[derive(Clone, Debug)]
pub struct DivergenceTrace {
    pub eta: f64,
    pub constrained: Vec<f64>,
    pub unconstrained: Vec<f64>,
    pub diverged_at: Option<usize>,
    pub converged_at: Option<usize>,
}

impl DivergenceTrace {
    /// CSV body: iteration, constrained theta2, unconstrained theta2.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,constrained_theta2,unconstrained_theta2\n");
        for (i, (c, u)) in self
            .constrained
            .iter()
            .zip(&self.unconstrained)
            .enumerate()
        {
            writeln!(out, "{},{c},{u}", i + 1).expect("string writes cannot fail");
        }
        out
    }
}

fn fresh_learner(eta: f64) -> SasQLearner {
    let mut learner = SasQLearner::new(
        counterexample_feature_map(),
        2,
        1.0,
        SasQConfig {
            eta,
            ..SasQConfig::default()
        },
    );
    // Second weight starts at -5; its true value under the full set is -4.
    learner.weights_mut().copy_from_slice(&[-2.0, -5.0]);
    learner
}

fn repeated_transition() -> Transition {
    Transition {
        state: State::Discrete(0),
        action_set: ActionSet::single(2, 1),
        action: 1,
        reward: 0.0,
        next_state: State::Discrete(1),
        done: false,
    }
}

/// Runs both update modes for `iterations` steps. Asserts the exact
/// per-step laws as it goes: the constrained weight scales by 1 + eta
/// each iteration, and the unconstrained weight's distance to -4
/// contracts by 1 - eta. A violation of either is a bug in the update,
/// not a property to report.
pub fn divergence_demo(eta: f64, iterations: usize) -> DivergenceTrace {
    assert!(eta > 0.0 && eta < 1.0, "rate {eta} outside (0, 1)");
    assert!(iterations > 0);
    let transition = repeated_transition();

    let mut constrained_learner = fresh_learner(eta);
    let only_second = ActionSet::single(2, 1);
    let mut constrained = Vec::with_capacity(iterations);
    let mut diverged_at = None;
    let mut previous = constrained_learner.weights()[1];
    for i in 1..=iterations {
        constrained_learner.sas_q_step(&transition, Some(&only_second));
        let current = constrained_learner.weights()[1];
        let expected = previous * (1.0 + eta);
        assert!(
            (current - expected).abs() <= 1e-9 * expected.abs(),
            "constrained update broke the geometric law at iteration {i}"
        );
        if diverged_at.is_none() && current.abs() > 1e6 {
            diverged_at = Some(i);
        }
        constrained.push(current);
        previous = current;
    }

    let mut unconstrained_learner = fresh_learner(eta);
    let both = ActionSet::full(2);
    let mut unconstrained = Vec::with_capacity(iterations);
    let mut converged_at = None;
    let mut previous_err = (unconstrained_learner.weights()[1] + 4.0).abs();
    for i in 1..=iterations {
        unconstrained_learner.sas_q_step(&transition, Some(&both));
        let current = unconstrained_learner.weights()[1];
        let err = (current + 4.0).abs();
        assert!(
            (err - previous_err * (1.0 - eta)).abs() <= 1e-9,
            "unconstrained update broke the contraction law at iteration {i}"
        );
        if converged_at.is_none() && err < 1e-3 {
            converged_at = Some(i);
        }
        unconstrained.push(current);
        previous_err = err;
    }

    DivergenceTrace {
        eta,
        constrained,
        unconstrained,
        diverged_at,
        converged_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_rate_diverges_and_converges_on_schedule() {
        let trace = divergence_demo(0.1, 200);
        assert_eq!(trace.diverged_at, Some(129));
        assert_eq!(trace.converged_at, Some(66));
        assert_abs_diff_eq!(trace.constrained[0], -5.5, epsilon = 1e-12);
        assert_abs_diff_eq!(trace.unconstrained[0], -4.9, epsilon = 1e-12);
        let last = *trace.unconstrained.last().unwrap();
        assert_abs_diff_eq!(last, -4.0, epsilon = 1e-3);
    }

    #[test]
    fn csv_lists_one_row_per_iteration() {
        let trace = divergence_demo(0.1, 5);
        let text = trace.to_csv();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "iteration,constrained_theta2,unconstrained_theta2");
        assert!(lines[1].starts_with("1,-5.5,"));
    }

    #[test]
    fn slower_rate_still_diverges_just_later() {
        let trace = divergence_demo(0.05, 400);
        // |theta2| = 5 * 1.05^k crosses 1e6 at k = ceil(ln(2e5)/ln(1.05)).
        let expected = (2e5f64.ln() / 1.05f64.ln()).ceil() as usize;
        assert_eq!(trace.diverged_at, Some(expected));
    }

    #[test]
    #[should_panic(expected = "outside (0, 1)")]
    fn unit_rate_is_rejected() {
        divergence_demo(1.0, 10);
    }
}
