//! Experiment configuration: one TOML file pins the environment, the
//! algorithm, its hyperparameters, and the seed set, and round-trips
//! losslessly so a written config is a complete record of a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{SasNpgConfig, SasPgConfig, SasQConfig};
use crate::core::SasEnv;
use crate::envs::{
    counterexample_feature_map, make_routing_env, CounterexampleEnv, MazeConfig, MazeEnv,
    RecommenderConfig, RecommenderEnv, RoutingConfig, TabularEnv, TabularSasMdp,
};
use crate::error::{Result, SasRlError};
use crate::features::FeatureMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    SasQ,
    SasPg,
    SasNpg,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::SasQ => "sas-q",
            Algorithm::SasPg => "sas-pg",
            Algorithm::SasNpg => "sas-npg",
        })
    }
}

/// Small seeded tabular instance, the desk-scale environment every oracle
/// comparison runs on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularToyConfig {
    pub num_states: usize,
    pub num_actions: usize,
    pub availability: f64,
    pub gamma: f64,
    pub structure_seed: u64,
}

impl Default for TabularToyConfig {
    fn default() -> Self {
        TabularToyConfig {
            num_states: 3,
            num_actions: 2,
            availability: 0.5,
            gamma: 0.99,
            structure_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub gamma: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { gamma: 1.0 }
    }
}

/// Which environment to run, with its full parameterization inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvConfig {
    Routing(RoutingConfig),
    Maze(MazeConfig),
    Recommender(RecommenderConfig),
    TabularToy(TabularToyConfig),
    Counterexample(CounterexampleConfig),
}

impl EnvConfig {
    pub fn gamma(&self) -> f64 {
        match self {
            EnvConfig::Routing(c) => c.gamma,
            EnvConfig::Maze(c) => c.gamma,
            EnvConfig::Recommender(c) => c.gamma,
            EnvConfig::TabularToy(c) => c.gamma,
            EnvConfig::Counterexample(c) => c.gamma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Routing(_) => "routing",
            EnvConfig::Maze(_) => "maze",
            EnvConfig::Recommender(_) => "recommender",
            EnvConfig::TabularToy(_) => "tabular-toy",
            EnvConfig::Counterexample(_) => "counterexample",
        }
    }
}

/// Environment instance plus the pieces a learner needs to attach to it.
pub struct BuiltEnv {
    pub env: Box<dyn SasEnv>,
    pub feature_map: FeatureMap,
    pub num_actions: usize,
}

/// Constructs the environment and its natural state featurization:
/// one-hot for the discrete domains, the coupled Fourier basis for the
/// maze, the raw context for the recommender.
pub fn build_env(config: &EnvConfig) -> Result<BuiltEnv> {
    match config {
        EnvConfig::Routing(c) => {
            let env = make_routing_env(c.clone())?;
            let feature_map = FeatureMap::OneHot {
                num_states: c.num_nodes,
            };
            let num_actions = env.num_edges();
            Ok(BuiltEnv {
                env: Box::new(env),
                feature_map,
                num_actions,
            })
        }
        EnvConfig::Maze(c) => {
            let feature_map = c.feature_map();
            let num_actions = c.num_actuators;
            let env = MazeEnv::new(c.clone());
            Ok(BuiltEnv {
                env: Box::new(env),
                feature_map,
                num_actions,
            })
        }
        EnvConfig::Recommender(c) => {
            let feature_map = c.feature_map();
            let num_actions = c.num_products;
            let env = RecommenderEnv::new(c.clone());
            Ok(BuiltEnv {
                env: Box::new(env),
                feature_map,
                num_actions,
            })
        }
        EnvConfig::TabularToy(c) => {
            let mdp = TabularSasMdp::random_toy(
                c.num_states,
                c.num_actions,
                c.availability,
                c.gamma,
                c.structure_seed,
            );
            let feature_map = FeatureMap::OneHot {
                num_states: c.num_states,
            };
            let env = TabularEnv::new(mdp)?;
            Ok(BuiltEnv {
                env: Box::new(env),
                feature_map,
                num_actions: c.num_actions,
            })
        }
        EnvConfig::Counterexample(c) => Ok(BuiltEnv {
            env: Box::new(CounterexampleEnv::new(c.gamma)),
            feature_map: counterexample_feature_map(),
            num_actions: 2,
        }),
    }
}

fn default_episodes() -> usize {
    2000
}
fn default_horizon() -> usize {
    100
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Complete description of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: EnvConfig,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Root of all per-seed randomness; each seed value opens its own
    /// stream, so growing the seed list never changes existing runs.
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub sas_q: SasQConfig,
    #[serde(default)]
    pub sas_pg: SasPgConfig,
    #[serde(default)]
    pub sas_npg: SasNpgConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(SasRlError::InvalidConfig("episodes must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(SasRlError::InvalidConfig("horizon must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(SasRlError::InvalidConfig("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(SasRlError::InvalidConfig(
                "seed list contains duplicates".into(),
            ));
        }
        let gamma = self.env.gamma();
        if !(0.0..1.0).contains(&gamma) {
            return Err(SasRlError::InvalidConfig(format!(
                "discount {gamma} outside [0, 1); undiscounted environments are only for the divergence demo"
            )));
        }
        match self.algorithm {
            Algorithm::SasQ => self.sas_q.validate(),
            Algorithm::SasPg => self.sas_pg.validate(),
            Algorithm::SasNpg => self.sas_npg.validate(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| SasRlError::ConfigParse {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SasRlError::io(format!("reading config {}", path.display()), e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string())
            .map_err(|e| SasRlError::io(format!("writing config {}", path.display()), e))
    }
}
