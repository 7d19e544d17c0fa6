//! State feature construction.
//!
//! A `FeatureMap` turns a `State` into the vector the linear policy and the
//! linear value/q estimators consume. Maps are serializable so checkpoints
//! can record exactly how a saved parameter vector reads its inputs.

use serde::{Deserialize, Serialize};

use crate::core::State;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap {
    /// Indicator vector over a finite state space.
    OneHot { num_states: usize },
    /// Coupled (full cross-product) Fourier cosine basis over `input_dim`
    /// inputs scaled to [0, 1]: one feature per coefficient vector
    /// c in {0..order}^input_dim, valued cos(pi * c . x). Coefficient
    /// vectors are enumerated lexicographically with the first input as the
    /// most significant digit, so feature 0 is the constant 1.
    CoupledFourier { order: usize, input_dim: usize },
    /// The state vector itself, unchanged.
    Identity { dim: usize },
    /// Explicit per-state feature rows for small hand-built discrete
    /// problems. Row `s` is the feature vector of state `s`.
    Table { rows: Vec<Vec<f64>> },
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::OneHot { num_states } => *num_states,
            FeatureMap::CoupledFourier { order, input_dim } => (order + 1).pow(*input_dim as u32),
            FeatureMap::Identity { dim } => *dim,
            FeatureMap::Table { rows } => {
                assert!(!rows.is_empty(), "feature table has no rows");
                rows[0].len()
            }
        }
    }

    /// Feature vector of `state`. Out-of-range inputs (a one-hot or table
    /// index past the state count, a Fourier coordinate outside [0, 1]) are
    /// contract violations and panic.
    pub fn featurize(&self, state: &State) -> Vec<f64> {
        match self {
            FeatureMap::OneHot { num_states } => {
                let s = state.index();
                assert!(s < *num_states, "state {s} out of range {num_states}");
                let mut phi = vec![0.0; *num_states];
                phi[s] = 1.0;
                phi
            }
            FeatureMap::CoupledFourier { order, input_dim } => {
                let x = state.coords();
                assert_eq!(
                    x.len(),
                    *input_dim,
                    "expected {input_dim} inputs, got {}",
                    x.len()
                );
                for (i, &xi) in x.iter().enumerate() {
                    assert!(
                        (0.0..=1.0).contains(&xi),
                        "fourier input {i} = {xi} outside [0, 1]"
                    );
                }
                let base = order + 1;
                let dim = self.dim();
                let mut phi = Vec::with_capacity(dim);
                let mut coeff = vec![0usize; *input_dim];
                for _ in 0..dim {
                    let dot: f64 = coeff
                        .iter()
                        .zip(x)
                        .map(|(&c, &xi)| c as f64 * xi)
                        .sum();
                    phi.push((std::f64::consts::PI * dot).cos());
                    // Lexicographic increment, last input least significant.
                    for d in (0..*input_dim).rev() {
                        coeff[d] += 1;
                        if coeff[d] < base {
                            break;
                        }
                        coeff[d] = 0;
                    }
                }
                phi
            }
            FeatureMap::Identity { dim } => {
                let x = state.coords();
                assert_eq!(x.len(), *dim, "expected {dim} inputs, got {}", x.len());
                x.to_vec()
            }
            FeatureMap::Table { rows } => {
                let s = state.index();
                assert!(s < rows.len(), "state {s} out of range {}", rows.len());
                rows[s].clone()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn one_hot_places_single_indicator() {
        let map = FeatureMap::OneHot { num_states: 4 };
        assert_eq!(map.dim(), 4);
        assert_eq!(
            map.featurize(&State::Discrete(2)),
            vec![0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn one_hot_rejects_out_of_range() {
        let map = FeatureMap::OneHot { num_states: 2 };
        let _ = map.featurize(&State::Discrete(2));
    }

    #[test]
    fn coupled_fourier_dim_is_power() {
        // Third order over two inputs: 4^2 = 16 features.
        let map = FeatureMap::CoupledFourier {
            order: 3,
            input_dim: 2,
        };
        assert_eq!(map.dim(), 16);
    }

    #[test]
    fn coupled_fourier_first_feature_is_constant() {
        let map = FeatureMap::CoupledFourier {
            order: 2,
            input_dim: 2,
        };
        let phi = map.featurize(&State::Continuous(vec![0.3, 0.7]));
        assert_abs_diff_eq!(phi[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn coupled_fourier_coefficients_enumerate_lexicographically() {
        // Order 1 over two inputs: coefficients (0,0), (0,1), (1,0), (1,1).
        let map = FeatureMap::CoupledFourier {
            order: 1,
            input_dim: 2,
        };
        let x = [0.25, 0.5];
        let phi = map.featurize(&State::Continuous(x.to_vec()));
        let pi = std::f64::consts::PI;
        let expected = [
            1.0,
            (pi * x[1]).cos(),
            (pi * x[0]).cos(),
            (pi * (x[0] + x[1])).cos(),
        ];
        for (got, want) in phi.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    #[should_panic(expected = "outside [0, 1]")]
    fn coupled_fourier_rejects_unscaled_inputs() {
        let map = FeatureMap::CoupledFourier {
            order: 1,
            input_dim: 1,
        };
        let _ = map.featurize(&State::Continuous(vec![1.5]));
    }

    #[test]
    fn identity_passes_through() {
        let map = FeatureMap::Identity { dim: 3 };
        let x = vec![0.1, -2.0, 5.5];
        assert_eq!(map.featurize(&State::Continuous(x.clone())), x);
    }

    #[test]
    fn table_returns_rows() {
        let map = FeatureMap::Table {
            rows: vec![vec![1.0], vec![2.0]],
        };
        assert_eq!(map.dim(), 1);
        assert_eq!(map.featurize(&State::Discrete(1)), vec![2.0]);
    }

    #[test]
    fn serde_round_trip_preserves_kind() {
        let map = FeatureMap::CoupledFourier {
            order: 3,
            input_dim: 2,
        };
        let json = serde_json::to_string(&map).unwrap();
        assert!(json.contains("coupled-fourier"));
        let back: FeatureMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
    }

    proptest! {
        #[test]
        fn fourier_features_stay_in_unit_band(
            x0 in 0.0f64..=1.0,
            x1 in 0.0f64..=1.0,
            order in 1usize..=4,
        ) {
            let map = FeatureMap::CoupledFourier { order, input_dim: 2 };
            let phi = map.featurize(&State::Continuous(vec![x0, x1]));
            prop_assert_eq!(phi.len(), map.dim());
            for v in phi {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn one_hot_sums_to_one(n in 1usize..50, pick in 0usize..50) {
            prop_assume!(pick < n);
            let map = FeatureMap::OneHot { num_states: n };
            let phi = map.featurize(&State::Discrete(pick));
            prop_assert_eq!(phi.iter().sum::<f64>(), 1.0);
        }
    }
}
