use rand::Rng;

use crate::core::{ActionSet, RngHandle, SasEnv, State, StateId};
use crate::error::{Result, SasRlError};

/// Explicit availability distribution entries for non-empty subsets of
/// `candidates` under independent Bernoulli(`availability`) inclusion
/// conditioned on non-emptiness. Masks live in the `num_base` action space.
/// Enumeration is exponential in the candidate count, so it is guarded.
pub fn enumerate_conditioned_subsets(
    num_base: usize,
    candidates: &[usize],
    availability: f64,
) -> Vec<(ActionSet, f64)> {
    assert!(
        availability > 0.0 && availability <= 1.0,
        "availability {availability} outside (0, 1]"
    );
    let k = candidates.len();
    assert!(k > 0, "candidate list is empty");
    assert!(k <= 20, "subset enumeration over {k} candidates is too large");
    let normalizer = 1.0 - (1.0 - availability).powi(k as i32);
    let mut out = Vec::with_capacity((1usize << k) - 1);
    for bits in 1u32..(1 << k) {
        let size = bits.count_ones() as i32;
        let mut mask = vec![false; num_base];
        for (j, &c) in candidates.iter().enumerate() {
            if bits & (1 << j) != 0 {
                mask[c] = true;
            }
        }
        let prob = availability.powi(size) * (1.0 - availability).powi(k as i32 - size)
            / normalizer;
        out.push((ActionSet::new(mask), prob));
    }
    out
}

/// A fully specified finite SAS-MDP: transition and reward tables, start
/// distribution, per-state availability distribution over non-empty action
/// subsets, and terminal flags. This is both a runnable environment (via
/// `TabularEnv`) and the input format of every enumeration oracle.
#[derive(Clone, Debug)]
pub struct TabularSasMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    /// `transition[s][a][s2]` = P(s2 | s, a). Every row is a distribution,
    /// including rows of actions an availability model never offers.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Deterministic reward `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    /// Start distribution over states.
    pub start: Vec<f64>,
    /// `availability[s]` lists every offerable action set with its
    /// probability; probabilities sum to 1 and masks are non-empty.
    pub availability: Vec<Vec<(ActionSet, f64)>>,
    /// Terminal states end the episode on entry. Their dynamics must be
    /// absorbing with zero reward so that enumeration over a fixed horizon
    /// agrees with episodic termination.
    pub terminal: Vec<bool>,
}

const DIST_TOL: f64 = 1e-9;

impl TabularSasMdp {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SasRlError::EnvConstruction(msg));
        if self.num_states == 0 || self.num_actions == 0 {
            return fail("state and action counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("discount {} outside [0, 1]", self.gamma));
        }
        let shapes_ok = self.transition.len() == self.num_states
            && self.reward.len() == self.num_states
            && self.start.len() == self.num_states
            && self.availability.len() == self.num_states
            && self.terminal.len() == self.num_states;
        if !shapes_ok {
            return fail("table shapes do not match num_states".into());
        }
        if (self.start.iter().sum::<f64>() - 1.0).abs() > DIST_TOL
            || self.start.iter().any(|&p| !(0.0..=1.0 + DIST_TOL).contains(&p))
        {
            return fail("start distribution does not sum to 1".into());
        }
        for s in 0..self.num_states {
            if self.transition[s].len() != self.num_actions
                || self.reward[s].len() != self.num_actions
            {
                return fail(format!("state {s} tables do not match num_actions"));
            }
            for a in 0..self.num_actions {
                let row = &self.transition[s][a];
                if row.len() != self.num_states {
                    return fail(format!("transition row ({s}, {a}) has wrong length"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > DIST_TOL
                    || row.iter().any(|&p| !(0.0..=1.0 + DIST_TOL).contains(&p))
                {
                    return fail(format!("transition row ({s}, {a}) is not a distribution"));
                }
                if !self.reward[s][a].is_finite() {
                    return fail(format!("reward ({s}, {a}) is not finite"));
                }
            }
            if self.availability[s].is_empty() {
                return fail(format!("state {s} has no availability entries"));
            }
            let mass: f64 = self.availability[s].iter().map(|(_, p)| p).sum();
            if (mass - 1.0).abs() > DIST_TOL {
                return fail(format!("availability at state {s} sums to {mass}"));
            }
            for (set, p) in &self.availability[s] {
                if set.num_base() != self.num_actions {
                    return fail(format!("availability mask at state {s} has wrong width"));
                }
                if !(0.0..=1.0 + DIST_TOL).contains(p) {
                    return fail(format!("availability probability {p} at state {s}"));
                }
            }
            if self.terminal[s] {
                for a in 0..self.num_actions {
                    if (self.transition[s][a][s] - 1.0).abs() > DIST_TOL
                        || self.reward[s][a] != 0.0
                    {
                        return fail(format!(
                            "terminal state {s} must be absorbing with zero reward"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .map(|r| r.abs())
            .fold(0.0, f64::max)
    }

    /// Small random instance for oracle tests: sparse transitions (two
    /// successors per state-action), rewards uniform in [-1, 1], uniform
    /// start, full-base-set availability at inclusion probability
    /// `availability`, no terminal states.
    pub fn random_toy(
        num_states: usize,
        num_actions: usize,
        availability: f64,
        gamma: f64,
        seed: u64,
    ) -> TabularSasMdp {
        assert!(num_states > 0 && num_actions > 0);
        let mut rng = RngHandle::derive(seed, 0x7051);
        let mut transition = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
        let mut reward = vec![vec![0.0; num_actions]; num_states];
        for s in 0..num_states {
            for a in 0..num_actions {
                if num_states == 1 {
                    transition[s][a][0] = 1.0;
                } else {
                    let first = rng.gen_range(0..num_states);
                    let mut second = rng.gen_range(0..num_states - 1);
                    if second >= first {
                        second += 1;
                    }
                    let w = rng.gen_range(0.2..0.8);
                    transition[s][a][first] += w;
                    transition[s][a][second] += 1.0 - w;
                }
                reward[s][a] = rng.gen_range(-1.0..1.0);
            }
        }
        let candidates: Vec<usize> = (0..num_actions).collect();
        let availability_entries = enumerate_conditioned_subsets(
            num_actions,
            &candidates,
            availability,
        );
        let mdp = TabularSasMdp {
            num_states,
            num_actions,
            gamma,
            transition,
            reward,
            start: vec![1.0 / num_states as f64; num_states],
            availability: vec![availability_entries; num_states],
            terminal: vec![false; num_states],
        };
        mdp.validate().expect("random toy construction is valid");
        mdp
    }
}

/// Runnable wrapper holding the per-episode state of a `TabularSasMdp`.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    mdp: TabularSasMdp,
    current: StateId,
}

impl TabularEnv {
    pub fn new(mdp: TabularSasMdp) -> Result<Self> {
        mdp.validate()?;
        Ok(TabularEnv { mdp, current: 0 })
    }

    pub fn mdp(&self) -> &TabularSasMdp {
        &self.mdp
    }
}

fn sample_categorical(probs: impl Iterator<Item = f64>, rng: &mut RngHandle) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

impl SasEnv for TabularEnv {
    fn num_base_actions(&self) -> usize {
        self.mdp.num_actions
    }

    fn gamma(&self) -> f64 {
        self.mdp.gamma
    }

    fn reward_bound(&self) -> f64 {
        self.mdp.reward_bound()
    }

    fn reset(&mut self, rng: &mut RngHandle) -> State {
        self.current = sample_categorical(self.mdp.start.iter().copied(), rng);
        State::Discrete(self.current)
    }

    fn action_set(&self, rng: &mut RngHandle) -> ActionSet {
        let entries = &self.mdp.availability[self.current];
        let idx = sample_categorical(entries.iter().map(|(_, p)| *p), rng);
        entries[idx].0.clone()
    }

    fn step(&mut self, action: usize, rng: &mut RngHandle) -> (State, f64, bool) {
        assert!(action < self.mdp.num_actions, "action {action} out of range");
        assert!(
            !self.mdp.terminal[self.current],
            "stepping a terminal state"
        );
        let row = &self.mdp.transition[self.current][action];
        let reward = self.mdp.reward[self.current][action];
        let next = sample_categorical(row.iter().copied(), rng);
        self.current = next;
        (State::Discrete(next), reward, self.mdp.terminal[next])
    }
}
