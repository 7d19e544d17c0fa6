//! Point-robot maze in the unit square with wall segments and a circular
//! goal region. The 16 base actions are actuators pointing at equally
//! spaced angles; a random subset of actuators responds each step.

use serde::{Deserialize, Serialize};

use crate::core::{sample_bernoulli_subset, ActionSet, RngHandle, SasEnv, State};
use crate::features::FeatureMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeConfig {
    pub num_actuators: usize,
    pub step_size: f64,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub start: [f64; 2],
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    /// Wall segments as (x1, y1, x2, y2). Motion whose path crosses any
    /// segment is cancelled.
    pub walls: Vec<[f64; 4]>,
    pub availability: f64,
    pub gamma: f64,
    /// Order of the coupled Fourier basis exposed for this domain.
    pub fourier_order: usize,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            num_actuators: 16,
            step_size: 0.05,
            step_penalty: -0.05,
            goal_reward: 100.0,
            start: [0.05, 0.05],
            goal_center: [0.95, 0.95],
            goal_radius: 0.08,
            // One interior wall with a gap on its right.
            walls: vec![[0.0, 0.5, 0.75, 0.5]],
            availability: 0.8,
            gamma: 0.99,
            fourier_order: 3,
        }
    }
}

impl MazeConfig {
    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::CoupledFourier {
            order: self.fourier_order,
            input_dim: 2,
        }
    }
}

/// True when segments (p1, p2) and (q1, q2) intersect, touching included.
fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }
    fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
        p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[derive(Clone, Debug)]
pub struct MazeEnv {
    config: MazeConfig,
    pos: [f64; 2],
}

impl MazeEnv {
    pub fn new(config: MazeConfig) -> Self {
        assert!(config.num_actuators > 0);
        assert!(config.step_size > 0.0);
        assert!(config.goal_radius > 0.0);
        for c in config.start.iter().chain(config.goal_center.iter()) {
            assert!((0.0..=1.0).contains(c), "maze coordinates live in [0, 1]");
        }
        let pos = config.start;
        MazeEnv { config, pos }
    }

    pub fn config(&self) -> &MazeConfig {
        &self.config
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn at_goal(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.config.goal_center[0];
        let dy = p[1] - self.config.goal_center[1];
        (dx * dx + dy * dy).sqrt() <= self.config.goal_radius
    }
}

impl SasEnv for MazeEnv {
    fn num_base_actions(&self) -> usize {
        self.config.num_actuators
    }

    fn gamma(&self) -> f64 {
        self.config.gamma
    }

    fn reward_bound(&self) -> f64 {
        self.config.step_penalty.abs() + self.config.goal_reward.abs()
    }

    fn reset(&mut self, _rng: &mut RngHandle) -> State {
        self.pos = self.config.start;
        State::Continuous(self.pos.to_vec())
    }

    fn action_set(&self, rng: &mut RngHandle) -> ActionSet {
        let candidates: Vec<usize> = (0..self.config.num_actuators).collect();
        sample_bernoulli_subset(
            self.config.num_actuators,
            &candidates,
            self.config.availability,
            rng,
        )
    }

    fn step(&mut self, action: usize, _rng: &mut RngHandle) -> (State, f64, bool) {
        assert!(
            action < self.config.num_actuators,
            "actuator {action} out of range"
        );
        let angle =
            2.0 * std::f64::consts::PI * action as f64 / self.config.num_actuators as f64;
        let raw = [
            self.pos[0] + self.config.step_size * angle.cos(),
            self.pos[1] + self.config.step_size * angle.sin(),
        ];
        let candidate = [raw[0].clamp(0.0, 1.0), raw[1].clamp(0.0, 1.0)];
        let blocked = self.config.walls.iter().any(|w| {
            segments_intersect(self.pos, candidate, [w[0], w[1]], [w[2], w[3]])
        });
        if !blocked {
            self.pos = candidate;
        }
        let done = self.at_goal(self.pos);
        let reward = self.config.step_penalty + if done { self.config.goal_reward } else { 0.0 };
        (State::Continuous(self.pos.to_vec()), reward, done)
    }
}
