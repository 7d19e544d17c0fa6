//! Synthetic product-recommendation episodes: each product has a fixed
//! latent reward mean, a random subset of products is in stock each step,
//! and a user interaction lasts exactly five recommendations.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::core::{sample_bernoulli_subset, ActionSet, RngHandle, SasEnv, State};
use crate::features::FeatureMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecommenderConfig {
    pub num_products: usize,
    pub context_dim: usize,
    pub episode_len: usize,
    /// Latent product means are drawn once as mean_loc + mean_scale * N(0,1).
    pub mean_loc: f64,
    pub mean_scale: f64,
    /// Per-observation reward noise scale.
    pub noise_scale: f64,
    /// Noise is clipped to this many scales so rewards stay bounded.
    pub noise_clip: f64,
    pub availability: f64,
    pub gamma: f64,
    /// Seed for the latent product means, independent of run seeds.
    pub product_seed: u64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            num_products: 100,
            context_dim: 10,
            episode_len: 5,
            mean_loc: 1.0,
            mean_scale: 1.0,
            noise_scale: 0.1,
            noise_clip: 4.0,
            availability: 0.8,
            gamma: 0.99,
            product_seed: 0,
        }
    }
}

impl RecommenderConfig {
    /// The user context vector itself is the state feature.
    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::Identity {
            dim: self.context_dim,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecommenderEnv {
    config: RecommenderConfig,
    means: Vec<f64>,
    context: Vec<f64>,
    t: usize,
}

impl RecommenderEnv {
    pub fn new(config: RecommenderConfig) -> Self {
        assert!(config.num_products > 0);
        assert!(config.context_dim > 0);
        assert!(config.episode_len > 0);
        assert!(config.noise_scale >= 0.0 && config.noise_clip >= 0.0);
        let mut rng = RngHandle::derive(config.product_seed, 0x9ec0);
        let means: Vec<f64> = (0..config.num_products)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.mean_loc + config.mean_scale * z
            })
            .collect();
        let context = vec![0.0; config.context_dim];
        RecommenderEnv {
            config,
            means,
            context,
            t: 0,
        }
    }

    pub fn config(&self) -> &RecommenderConfig {
        &self.config
    }

    pub fn product_means(&self) -> &[f64] {
        &self.means
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }
}

impl SasEnv for RecommenderEnv {
    fn num_base_actions(&self) -> usize {
        self.config.num_products
    }

    fn gamma(&self) -> f64 {
        self.config.gamma
    }

    fn reward_bound(&self) -> f64 {
        let max_mean = self.means.iter().map(|m| m.abs()).fold(0.0, f64::max);
        max_mean + self.config.noise_clip * self.config.noise_scale
    }

    fn reset(&mut self, rng: &mut RngHandle) -> State {
        // A fresh user: context sampled standard normal, fixed for the
        // episode.
        self.context = (0..self.config.context_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.t = 0;
        State::Continuous(self.context.clone())
    }

    fn action_set(&self, rng: &mut RngHandle) -> ActionSet {
        let candidates: Vec<usize> = (0..self.config.num_products).collect();
        sample_bernoulli_subset(
            self.config.num_products,
            &candidates,
            self.config.availability,
            rng,
        )
    }

    fn step(&mut self, action: usize, rng: &mut RngHandle) -> (State, f64, bool) {
        assert!(
            action < self.config.num_products,
            "product {action} out of range"
        );
        assert!(self.t < self.config.episode_len, "episode already over");
        let z: f64 = StandardNormal.sample(rng);
        let clip = self.config.noise_clip;
        let noise = self.config.noise_scale * z.clamp(-clip, clip);
        let reward = self.means[action] + noise;
        self.t += 1;
        let done = self.t >= self.config.episode_len;
        (State::Continuous(self.context.clone()), reward, done)
    }
}
