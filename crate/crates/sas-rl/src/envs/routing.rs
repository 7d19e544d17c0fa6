//! Directed-graph routing: base actions are edges, the agent sits on a
//! node, and each step a random subset of the current node's outgoing
//! edges is available (links go down and come back between decisions).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{sample_bernoulli_subset, ActionSet, RngHandle, SasEnv, State};
use crate::envs::tabular::{enumerate_conditioned_subsets, TabularSasMdp};
use crate::error::{Result, SasRlError};

fn default_num_nodes() -> usize {
    25
}
fn default_edge_density() -> f64 {
    0.125
}
fn default_availability() -> f64 {
    0.8
}
fn default_step_penalty() -> f64 {
    -1.0
}
fn default_goal_reward() -> f64 {
    100.0
}
fn default_gamma() -> f64 {
    0.99
}
fn default_max_out_degree() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    pub num_nodes: usize,
    /// Fraction of the n(n-1) possible directed edges to materialize, on
    /// top of a Hamiltonian cycle that guarantees strong connectivity.
    pub edge_density: f64,
    /// Per-edge availability probability, conditioned on at least one
    /// outgoing edge being available.
    pub availability: f64,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    /// Cap on outgoing edges per node. Keeps per-state subset enumeration
    /// tractable when converting to tabular form.
    pub max_out_degree: usize,
    /// Seed for graph topology and goal placement, independent of the
    /// per-run seed streams.
    pub topology_seed: u64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            num_nodes: default_num_nodes(),
            edge_density: default_edge_density(),
            availability: default_availability(),
            step_penalty: default_step_penalty(),
            goal_reward: default_goal_reward(),
            gamma: default_gamma(),
            max_out_degree: default_max_out_degree(),
            topology_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoutingEnv {
    config: RoutingConfig,
    /// Edge id -> (tail, head). Base action e is "traverse edge e".
    edges: Vec<(usize, usize)>,
    /// Node -> ids of outgoing edges, ascending.
    out_edges: Vec<Vec<usize>>,
    goal: usize,
    current: usize,
}

/// Builds the routing environment for `config`: a Hamiltonian cycle over a
/// shuffled node order plus random extra edges up to the density target,
/// respecting the out-degree cap. Strong connectivity is then verified
/// explicitly.
pub fn make_routing_env(config: RoutingConfig) -> Result<RoutingEnv> {
    let n = config.num_nodes;
    if n < 2 {
        return Err(SasRlError::EnvConstruction(
            "routing needs at least two nodes".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.edge_density) {
        return Err(SasRlError::EnvConstruction(format!(
            "edge density {} outside [0, 1)",
            config.edge_density
        )));
    }
    if config.availability <= 0.0 || config.availability > 1.0 {
        return Err(SasRlError::EnvConstruction(format!(
            "availability {} outside (0, 1]",
            config.availability
        )));
    }
    if config.max_out_degree == 0 {
        return Err(SasRlError::EnvConstruction("out-degree cap is zero".into()));
    }
    let mut rng = RngHandle::derive(config.topology_seed, 0x70b0);

    // Hamiltonian cycle over a random node order.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    let add_edge = |edges: &mut Vec<(usize, usize)>,
                    out_edges: &mut Vec<Vec<usize>>,
                    from: usize,
                    to: usize| {
        let id = edges.len();
        edges.push((from, to));
        out_edges[from].push(id);
    };
    for i in 0..n {
        let from = order[i];
        let to = order[(i + 1) % n];
        add_edge(&mut edges, &mut out_edges, from, to);
    }

    let target_edges = ((config.edge_density * (n * (n - 1)) as f64).round() as usize).max(n);
    if target_edges > n * config.max_out_degree {
        return Err(SasRlError::EnvConstruction(format!(
            "density target {target_edges} exceeds the out-degree cap budget {}",
            n * config.max_out_degree
        )));
    }
    let mut attempts = 0usize;
    let attempt_budget = 200 * target_edges;
    while edges.len() < target_edges {
        attempts += 1;
        if attempts > attempt_budget {
            return Err(SasRlError::EnvConstruction(
                "edge sampling stalled before reaching the density target".into(),
            ));
        }
        let from = rng.gen_range(0..n);
        if out_edges[from].len() >= config.max_out_degree {
            continue;
        }
        let mut to = rng.gen_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        if out_edges[from].iter().any(|&e| edges[e].1 == to) {
            continue;
        }
        add_edge(&mut edges, &mut out_edges, from, to);
    }

    let goal = rng.gen_range(0..n);
    let env = RoutingEnv {
        config,
        edges,
        out_edges,
        goal,
        current: 0,
    };
    if !env.strongly_connected() {
        return Err(SasRlError::EnvConstruction(
            "generated graph is not strongly connected".into(),
        ));
    }
    Ok(env)
}

impl RoutingEnv {
    pub fn config(&self) -> &RoutingConfig {
        &self.config
    }

    pub fn num_nodes(&self) -> usize {
        self.config.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    fn reachable_from(&self, start: usize, reversed: bool) -> usize {
        let n = self.config.num_nodes;
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(from, to) in &self.edges {
                let (a, b) = if reversed { (to, from) } else { (from, to) };
                if a == u && !seen[b] {
                    seen[b] = true;
                    count += 1;
                    stack.push(b);
                }
            }
        }
        count
    }

    fn strongly_connected(&self) -> bool {
        let n = self.config.num_nodes;
        self.reachable_from(0, false) == n && self.reachable_from(0, true) == n
    }

    /// Exact finite-SAS-MDP view: states are nodes, base actions are all
    /// edges, availability at a node enumerates the conditioned subsets of
    /// its outgoing edges. Edges not leaving a node get self-loop
    /// placeholder rows that no availability mask ever offers. The goal is
    /// terminal (absorbing, zero reward).
    pub fn to_tabular(&self) -> TabularSasMdp {
        let n = self.config.num_nodes;
        let num_edges = self.edges.len();
        let mut transition = vec![vec![vec![0.0; n]; num_edges]; n];
        let mut reward = vec![vec![0.0; num_edges]; n];
        let mut availability = Vec::with_capacity(n);
        for s in 0..n {
            for e in 0..num_edges {
                if s != self.goal && self.edges[e].0 == s {
                    let to = self.edges[e].1;
                    transition[s][e][to] = 1.0;
                    reward[s][e] = self.config.step_penalty
                        + if to == self.goal {
                            self.config.goal_reward
                        } else {
                            0.0
                        };
                } else {
                    transition[s][e][s] = 1.0;
                }
            }
            if s == self.goal {
                availability.push(vec![(
                    ActionSet::single(num_edges, self.out_edges[s].first().copied().unwrap_or(0)),
                    1.0,
                )]);
            } else {
                availability.push(enumerate_conditioned_subsets(
                    num_edges,
                    &self.out_edges[s],
                    self.config.availability,
                ));
            }
        }
        let non_goal = (n - 1) as f64;
        let start: Vec<f64> = (0..n)
            .map(|s| if s == self.goal { 0.0 } else { 1.0 / non_goal })
            .collect();
        let mut terminal = vec![false; n];
        terminal[self.goal] = true;
        let mdp = TabularSasMdp {
            num_states: n,
            num_actions: num_edges,
            gamma: self.config.gamma,
            transition,
            reward,
            start,
            availability,
            terminal,
        };
        mdp.validate().expect("tabular conversion is valid");
        mdp
    }
}

impl SasEnv for RoutingEnv {
    fn num_base_actions(&self) -> usize {
        self.edges.len()
    }

    fn gamma(&self) -> f64 {
        self.config.gamma
    }

    fn reward_bound(&self) -> f64 {
        self.config.step_penalty.abs() + self.config.goal_reward.abs()
    }

    fn reset(&mut self, rng: &mut RngHandle) -> State {
        let n = self.config.num_nodes;
        let mut node = rng.gen_range(0..n - 1);
        if node >= self.goal {
            node += 1;
        }
        self.current = node;
        State::Discrete(node)
    }

    fn action_set(&self, rng: &mut RngHandle) -> ActionSet {
        sample_bernoulli_subset(
            self.edges.len(),
            &self.out_edges[self.current],
            self.config.availability,
            rng,
        )
    }

    fn step(&mut self, action: usize, _rng: &mut RngHandle) -> (State, f64, bool) {
        let (from, to) = self.edges[action];
        assert_eq!(
            from, self.current,
            "edge {action} does not leave node {}",
            self.current
        );
        self.current = to;
        let done = to == self.goal;
        let reward = self.config.step_penalty + if done { self.config.goal_reward } else { 0.0 };
        (State::Discrete(to), reward, done)
    }
}
