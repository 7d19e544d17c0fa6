//! Concrete environments: the bootstrapping divergence example, enumerable
//! tabular SAS-MDPs for oracle work, and three application-flavored
//! domains (graph routing, a point maze, product recommendation).

mod counterexample;
mod maze;
mod recommender;
mod routing;
mod tabular;

pub use counterexample::{
    counterexample_feature_map, counterexample_features, CounterexampleEnv,
};
pub use maze::{MazeConfig, MazeEnv};
pub use recommender::{RecommenderConfig, RecommenderEnv};
pub use routing::{make_routing_env, RoutingConfig, RoutingEnv};
pub use tabular::{enumerate_conditioned_subsets, TabularEnv, TabularSasMdp};
