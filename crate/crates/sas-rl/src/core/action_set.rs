use rand::Rng;

use crate::core::rng::RngHandle;

/// The subset of the base action set available at one timestep.
///
/// Represented as a boolean mask over the base actions `0..num_base`.
/// An `ActionSet` is never empty: the environment models condition on at
/// least one action being available, and an empty mask is a construction
/// bug, so `new` panics on it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionSet {
    mask: Vec<bool>,
}

impl ActionSet {
    pub fn new(mask: Vec<bool>) -> Self {
        assert!(
            mask.iter().any(|&m| m),
            "action set must contain at least one action"
        );
        ActionSet { mask }
    }

    /// Every base action available.
    pub fn full(num_base: usize) -> Self {
        assert!(num_base > 0, "base action set must be non-empty");
        ActionSet {
            mask: vec![true; num_base],
        }
    }

    /// Exactly one action available.
    pub fn single(num_base: usize, action: usize) -> Self {
        assert!(action < num_base, "action {action} out of range {num_base}");
        let mut mask = vec![false; num_base];
        mask[action] = true;
        ActionSet { mask }
    }

    pub fn from_indices(num_base: usize, indices: &[usize]) -> Self {
        let mut mask = vec![false; num_base];
        for &i in indices {
            assert!(i < num_base, "action {i} out of range {num_base}");
            mask[i] = true;
        }
        ActionSet::new(mask)
    }

    pub fn contains(&self, action: usize) -> bool {
        self.mask.get(action).copied().unwrap_or(false)
    }

    pub fn num_base(&self) -> usize {
        self.mask.len()
    }

    pub fn num_available(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of available actions, ascending.
    pub fn available(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    /// Lowest available action index. Useful as a deterministic tie-break.
    pub fn first_available(&self) -> usize {
        self.available().next().expect("action set is non-empty")
    }
}

/// Samples a non-empty subset of `candidates` by independent
/// Bernoulli(`availability`) draws per candidate, redrawing whole subsets
/// until one is non-empty. This realizes the conditional distribution
/// "independent inclusions given at least one inclusion".
pub fn sample_bernoulli_subset(
    num_base: usize,
    candidates: &[usize],
    availability: f64,
    rng: &mut RngHandle,
) -> ActionSet {
    assert!(
        availability > 0.0 && availability <= 1.0,
        "availability probability must lie in (0, 1], got {availability}"
    );
    assert!(!candidates.is_empty(), "candidate action list is empty");
    loop {
        let mut mask = vec![false; num_base];
        let mut any = false;
        for &c in candidates {
            assert!(c < num_base, "candidate {c} out of range {num_base}");
            if rng.gen_bool(availability) {
                mask[c] = true;
                any = true;
            }
        }
        if any {
            return ActionSet { mask };
        }
    }
}
