//! Convergence-precondition diagnostics. Asymptotic convergence of the
//! stochastic policy-gradient iteration cannot be asserted in a test, so
//! these check what can be: that a configured step-size schedule has the
//! divergent-sum / convergent-square-sum property, and whether observed
//! gradient norms are trending down.

/// Polynomially decaying step sizes rate(t) = initial / (1 + t)^decay_power.
#[derive(Clone, Copy, Debug)]
pub struct LearningRateSchedule {
    pub initial: f64,
    pub decay_power: f64,
}

impl LearningRateSchedule {
    pub fn new(initial: f64, decay_power: f64) -> Self {
        LearningRateSchedule {
            initial,
            decay_power,
        }
    }

    pub fn rate(&self, t: usize) -> f64 {
        self.initial / (1.0 + t as f64).powf(self.decay_power)
    }

    /// True when the schedule's sums satisfy sum rate(t) = infinity and
    /// sum rate(t)^2 < infinity, i.e. decay_power in (1/2, 1] with a
    /// positive initial rate.
    pub fn satisfies_robbins_monro(&self) -> bool {
        self.initial > 0.0 && self.decay_power > 0.5 && self.decay_power <= 1.0
    }
}

/// Least-squares slope of gradient norms against the iteration index.
/// Negative means the norms are trending down. Needs two points; faults
/// on fewer or on non-finite entries.
pub fn gradient_norm_trend(norms: &[f64]) -> f64 {
    assert!(norms.len() >= 2, "trend needs at least two samples");
    assert!(norms.iter().all(|n| n.is_finite()), "non-finite norm");
    let n = norms.len() as f64;
    let mean_t = (n - 1.0) / 2.0;
    let mean_y: f64 = norms.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (t, &y) in norms.iter().enumerate() {
        let dt = t as f64 - mean_t;
        cov += dt * (y - mean_y);
        var += dt * dt;
    }
    cov / var
}
