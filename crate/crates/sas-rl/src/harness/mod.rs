//! Experiment plumbing: config files, multi-seed parallel execution with
//! CSV emission, the divergence demonstration, and hyperparameter sweeps.

mod config;
mod divergence;
mod runner;
mod sweep;

pub use config::{
    build_env, Algorithm, BuiltEnv, CounterexampleConfig, EnvConfig, ExperimentConfig,
    TabularToyConfig,
};
pub use divergence::{divergence_demo, DivergenceTrace};
pub use runner::{
    run_experiment, seed_csv, summary_csv, ExperimentOutcome, RunRecord, SeedFailure,
};
pub use sweep::{
    expand_grid, final_window_score, run_sweep, SweepConfig, SweepGrid, SweepOutcome, SweepRow,
    SweepSetting,
};
