//! Multi-seed experiment execution. Every seed is an independent unit of
//! work with its own environment, learner, and random stream; the output
//! directory is the only shared artifact. Per-seed CSVs are written by
//! the workers, the cross-seed summary by a single pass afterwards, so a
//! crashed seed costs exactly its own file.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::algorithms::{SasNpgLearner, SasPgLearner, SasQLearner};
use crate::core::{rollout, RngHandle};
use crate::error::{Result, SasRlError};
use crate::harness::config::{build_env, Algorithm, ExperimentConfig};
use crate::policy::MaskedSoftmaxPolicy;
use crate::variance::LambdaWeights;

/// Everything one (config, seed) run produced.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    /// Undiscounted return per episode; this is the CSV `return` column.
    pub returns: Vec<f64>,
    pub discounted_returns: Vec<f64>,
    /// Baseline-weight trace, present only for the policy-gradient
    /// learner.
    pub lambda_trace: Option<Vec<LambdaWeights>>,
    pub wall_clock: Duration,
    pub checkpoint_path: PathBuf,
    pub csv_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<SeedFailure>,
    /// Absent when no seed completed.
    pub summary_path: Option<PathBuf>,
}

/// Runs every configured seed, `workers` at a time (0 lets the thread
/// pool pick). Panics inside a seed are caught and reported as failures;
/// the summary then covers the completed seeds only.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| SasRlError::io(format!("creating {}", out_dir.display()), e))?;
    config.save(&out_dir.join("config.toml"))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SasRlError::InvalidConfig(format!("worker pool: {e}")))?;
    let results: Vec<(u64, std::result::Result<RunRecord, String>)> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let run = catch_unwind(AssertUnwindSafe(|| run_seed(config, seed, out_dir)));
                let flattened = match run {
                    Ok(Ok(record)) => Ok(record),
                    Ok(Err(err)) => Err(err.to_string()),
                    Err(panic) => Err(panic_message(panic)),
                };
                (seed, flattened)
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(record) => records.push(record),
            Err(message) => failures.push(SeedFailure { seed, message }),
        }
    }
    if !failures.is_empty() {
        eprintln!(
            "warning: {} of {} seeds failed; summary covers completed seeds only",
            failures.len(),
            config.seeds.len()
        );
        for failure in &failures {
            eprintln!("  seed {}: {}", failure.seed, failure.message);
        }
    }

    let summary_path = if records.is_empty() {
        None
    } else {
        let path = out_dir.join("summary.csv");
        fs::write(&path, summary_csv(&records))
            .map_err(|e| SasRlError::io(format!("writing {}", path.display()), e))?;
        Some(path)
    };
    Ok(ExperimentOutcome {
        records,
        failures,
        summary_path,
    })
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic with non-string payload".to_string()
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<RunRecord> {
    let start = Instant::now();
    let mut rng = RngHandle::derive(config.master_seed, seed);
    let mut built = build_env(&config.env)?;
    let checkpoint_path = out_dir.join(format!("checkpoint-seed-{seed}.json"));

    let mut returns = Vec::with_capacity(config.episodes);
    let mut discounted_returns = Vec::with_capacity(config.episodes);
    let mut lambda_trace = None;

    match config.algorithm {
        Algorithm::SasQ => {
            let gamma = config.env.gamma();
            let mut learner = SasQLearner::new(
                built.feature_map.clone(),
                built.num_actions,
                gamma,
                config.sas_q,
            );
            for _ in 0..config.episodes {
                let ep = learner.train_episode(built.env.as_mut(), config.horizon, &mut rng);
                returns.push(ep.undiscounted);
                discounted_returns.push(ep.discounted);
            }
            learner.save_checkpoint(&checkpoint_path)?;
        }
        Algorithm::SasPg => {
            let policy =
                MaskedSoftmaxPolicy::new(built.feature_map.clone(), built.num_actions);
            let mut learner =
                SasPgLearner::new(policy, built.feature_map.clone(), config.sas_pg);
            let mut trace = Vec::with_capacity(config.episodes);
            for _ in 0..config.episodes {
                let trajectory =
                    rollout(built.env.as_mut(), learner.policy(), config.horizon, &mut rng);
                returns.push(trajectory.total_reward());
                discounted_returns.push(trajectory.discounted_total());
                let info = learner.sas_pg_episode(&trajectory);
                trace.push(info.lambda);
            }
            lambda_trace = Some(trace);
            learner.policy().save_checkpoint(&checkpoint_path)?;
        }
        Algorithm::SasNpg => {
            let policy =
                MaskedSoftmaxPolicy::new(built.feature_map.clone(), built.num_actions);
            let mut learner = SasNpgLearner::new(policy, config.sas_npg);
            for _ in 0..config.episodes {
                let trajectory =
                    rollout(built.env.as_mut(), learner.policy(), config.horizon, &mut rng);
                returns.push(trajectory.total_reward());
                discounted_returns.push(trajectory.discounted_total());
                learner.sas_npg_episode(&trajectory);
            }
            learner.policy().save_checkpoint(&checkpoint_path)?;
        }
    }

    let csv_path = out_dir.join(format!("seed-{seed}.csv"));
    let record = RunRecord {
        seed,
        returns,
        discounted_returns,
        lambda_trace,
        wall_clock: start.elapsed(),
        checkpoint_path,
        csv_path: csv_path.clone(),
    };
    fs::write(&csv_path, seed_csv(&record))
        .map_err(|e| SasRlError::io(format!("writing {}", csv_path.display()), e))?;
    Ok(record)
}

/// Stable per-seed CSV body. The lambda columns are empty for learners
/// without baseline weights.
pub fn seed_csv(record: &RunRecord) -> String {
    let mut out = String::from("seed,episode,return,lambda1,lambda2\n");
    for (episode, &ret) in record.returns.iter().enumerate() {
        let (l1, l2) = match &record.lambda_trace {
            Some(trace) => {
                let l = trace[episode];
                (l.v.to_string(), l.q.to_string())
            }
            None => (String::new(), String::new()),
        };
        writeln!(out, "{},{episode},{ret},{l1},{l2}", record.seed)
            .expect("string writes cannot fail");
    }
    out
}

/// Cross-seed summary: per-episode mean and sample standard deviation of
/// the undiscounted return over the completed seeds.
pub fn summary_csv(records: &[RunRecord]) -> String {
    assert!(!records.is_empty(), "summary needs at least one record");
    let episodes = records[0].returns.len();
    assert!(
        records.iter().all(|r| r.returns.len() == episodes),
        "records disagree on episode count"
    );
    let n = records.len() as f64;
    let mut out = String::from("episode,mean,std\n");
    for episode in 0..episodes {
        let mean = records.iter().map(|r| r.returns[episode]).sum::<f64>() / n;
        let std = if records.len() > 1 {
            let ss = records
                .iter()
                .map(|r| {
                    let d = r.returns[episode] - mean;
                    d * d
                })
                .sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        writeln!(out, "{episode},{mean},{std}").expect("string writes cannot fail");
    }
    out
}
