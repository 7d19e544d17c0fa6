//! Adaptive control-variate weights for the score-function gradient
//! estimator.
//!
//! The estimator adds `lambda_v * v_hat(s) + lambda_q * q_bar(s, A)` to the
//! sampled return inside each score term. Because the score function has
//! zero mean conditioned on (s, A), any such additive term leaves the
//! estimator's expectation unchanged; the weights only move its variance.
//! `VarianceStats` accumulates the second-moment statistics of a batch and
//! solves for the variance-minimizing weights in closed form.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SasRlError};

/// Control-variate weight pair (lambda_v, lambda_q).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub v: f64,
    pub q: f64,
}

impl LambdaWeights {
    pub fn new(v: f64, q: f64) -> Self {
        LambdaWeights { v, q }
    }
}

impl Default for LambdaWeights {
    /// Mild initial baseline subtraction; adapted weights take over as
    /// batches accumulate.
    fn default() -> Self {
        LambdaWeights { v: -0.5, q: -0.5 }
    }
}

/// Exponential tracking of the solved weights: keeps `eta` of the current
/// estimate and blends in `1 - eta` of the new solve.
pub fn polyak_update(current: LambdaWeights, new_hat: LambdaWeights, eta: f64) -> LambdaWeights {
    assert!((0.0..=1.0).contains(&eta), "mixing rate {eta} outside [0, 1]");
    LambdaWeights {
        v: eta * current.v + (1.0 - eta) * new_hat.v,
        q: eta * current.q + (1.0 - eta) * new_hat.q,
    }
}

/// Second-moment accumulator for the variance solve.
///
/// Per sample the estimator contributes `psi * (g + lambda_v * v + lambda_q
/// * qb)`. Writing B = [psi*v, psi*q] and c = psi*g, the weights minimizing
/// the mean squared norm solve `mean(B^T B) * lambda = -mean(B^T c)`. Every
/// entry of those moments is a scalar multiple of |psi|^2, so the
/// accumulator only stores weighted scalar sums.
#[derive(Clone, Debug, Default)]
pub struct VarianceStats {
    count: usize,
    s_vv: f64,
    s_qq: f64,
    s_vq: f64,
    s_vg: f64,
    s_qg: f64,
    s_gg: f64,
}

impl VarianceStats {
    pub fn new() -> Self {
        VarianceStats::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one sample: the score vector `psi`, the state-value and
    /// set-value baselines, and the return target `g`.
    pub fn accumulate(&mut self, psi: &[f64], v_hat: f64, q_bar: f64, g: f64) {
        assert!(
            v_hat.is_finite() && q_bar.is_finite() && g.is_finite(),
            "non-finite variance sample"
        );
        let p: f64 = psi.iter().map(|x| x * x).sum();
        assert!(p.is_finite(), "non-finite score norm");
        self.count += 1;
        self.s_vv += p * v_hat * v_hat;
        self.s_qq += p * q_bar * q_bar;
        self.s_vq += p * v_hat * q_bar;
        self.s_vg += p * v_hat * g;
        self.s_qg += p * q_bar * g;
        self.s_gg += p * g * g;
    }

    /// Mean second moment of the estimator at the given weights. This is
    /// the objective the solved weights minimize.
    pub fn second_moment(&self, lambda: LambdaWeights) -> f64 {
        assert!(self.count > 0, "no samples accumulated");
        let n = self.count as f64;
        (self.s_gg
            + 2.0 * lambda.v * self.s_vg
            + 2.0 * lambda.q * self.s_qg
            + lambda.v * lambda.v * self.s_vv
            + 2.0 * lambda.v * lambda.q * self.s_vq
            + lambda.q * lambda.q * self.s_qq)
            / n
    }

    /// Solves for the variance-minimizing weights with a ridge term added
    /// to the normal matrix. With a positive ridge the system is positive
    /// definite and always solvable; at ridge zero a degenerate batch (for
    /// example every sampled action set a singleton, making every psi zero)
    /// yields `SingularMatrix`.
    pub fn solve_lambda(&self, ridge: f64) -> Result<LambdaWeights> {
        assert!(self.count > 0, "no samples accumulated");
        assert!(ridge >= 0.0, "ridge must be non-negative");
        let n = self.count as f64;
        let m = Matrix2::new(
            self.s_vv / n + ridge,
            self.s_vq / n,
            self.s_vq / n,
            self.s_qq / n + ridge,
        );
        let b = Vector2::new(-self.s_vg / n, -self.s_qg / n);
        let solution = m
            .lu()
            .solve(&b)
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or(SasRlError::SingularMatrix)?;
        Ok(LambdaWeights {
            v: solution[0],
            q: solution[1],
        })
    }
}
