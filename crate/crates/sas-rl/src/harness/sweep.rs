//! Grid sweeps over hyperparameters. Each grid point is a full
//! multi-seed experiment in its own subdirectory; the report scores every
//! point by its mean return over the final tenth of episodes, averaged
//! across seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SasRlError};
use crate::harness::config::{Algorithm, ExperimentConfig};
use crate::harness::runner::{run_experiment, RunRecord};

/// Values to try per hyperparameter; empty axes keep the base config's
/// value. Only the axes matching the configured algorithm apply.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub eta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub eta_theta: Vec<f64>,
    pub eta_v: Vec<f64>,
    pub eta_q: Vec<f64>,
    pub eta_w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: SweepGrid,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SasRlError::io(format!("reading sweep config {}", path.display()), e))?;
        let config: SweepConfig = toml::from_str(&text).map_err(|e| SasRlError::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.base.validate()?;
        Ok(config)
    }
}

/// One grid point: the concrete config plus human-readable axis labels.
#[derive(Clone, Debug)]
pub struct SweepSetting {
    pub index: usize,
    pub labels: Vec<String>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub index: usize,
    pub params: String,
    pub score: f64,
    pub completed_seeds: usize,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub best: SweepRow,
    pub report_path: PathBuf,
}

type Axis = (&'static str, Vec<String>, AxisApply);
type AxisApply = fn(&mut ExperimentConfig, &str);

fn parse_f64(v: &str) -> f64 {
    v.parse().expect("axis values serialize losslessly")
}

/// The grid axes that apply to `algorithm`, with appliers that poke the
/// parsed value back into the config.
fn active_axes(grid: &SweepGrid, algorithm: Algorithm) -> Vec<Axis> {
    let float = |values: &[f64]| -> Vec<String> {
        values.iter().map(|v| v.to_string()).collect()
    };
    let mut axes: Vec<Axis> = Vec::new();
    match algorithm {
        Algorithm::SasQ => {
            if !grid.eta.is_empty() {
                axes.push(("eta", float(&grid.eta), |c, v| c.sas_q.eta = parse_f64(v)));
            }
            if !grid.epsilon.is_empty() {
                axes.push(("epsilon", float(&grid.epsilon), |c, v| {
                    c.sas_q.epsilon = parse_f64(v)
                }));
            }
            if !grid.batch_size.is_empty() {
                axes.push((
                    "batch_size",
                    grid.batch_size.iter().map(|v| v.to_string()).collect(),
                    |c, v| c.sas_q.batch_size = v.parse().expect("integer axis"),
                ));
            }
        }
        Algorithm::SasPg => {
            if !grid.eta_theta.is_empty() {
                axes.push(("eta_theta", float(&grid.eta_theta), |c, v| {
                    c.sas_pg.eta_theta = parse_f64(v)
                }));
            }
            if !grid.eta_v.is_empty() {
                axes.push(("eta_v", float(&grid.eta_v), |c, v| {
                    c.sas_pg.eta_v = parse_f64(v)
                }));
            }
            if !grid.eta_q.is_empty() {
                axes.push(("eta_q", float(&grid.eta_q), |c, v| {
                    c.sas_pg.eta_q = parse_f64(v)
                }));
            }
        }
        Algorithm::SasNpg => {
            if !grid.eta_theta.is_empty() {
                axes.push(("eta_theta", float(&grid.eta_theta), |c, v| {
                    c.sas_npg.eta_theta = parse_f64(v)
                }));
            }
            if !grid.eta_w.is_empty() {
                axes.push(("eta_w", float(&grid.eta_w), |c, v| {
                    c.sas_npg.eta_w = parse_f64(v)
                }));
            }
        }
    }
    axes
}

/// Cartesian product of the active axes over the base config. A grid with
/// no applicable axes yields the base config alone.
pub fn expand_grid(config: &SweepConfig) -> Vec<SweepSetting> {
    let axes = active_axes(&config.grid, config.base.algorithm);
    let mut settings = vec![SweepSetting {
        index: 0,
        labels: Vec::new(),
        config: config.base.clone(),
    }];
    for (name, values, apply) in &axes {
        let mut expanded = Vec::with_capacity(settings.len() * values.len());
        for setting in &settings {
            for value in values {
                let mut config = setting.config.clone();
                apply(&mut config, value);
                let mut labels = setting.labels.clone();
                labels.push(format!("{name}={value}"));
                expanded.push(SweepSetting {
                    index: expanded.len(),
                    labels,
                    config,
                });
            }
        }
        for (i, setting) in expanded.iter_mut().enumerate() {
            setting.index = i;
        }
        settings = expanded;
    }
    settings
}

/// Mean return over the final tenth of episodes (at least one), averaged
/// over completed seeds: the selection metric for "best setting".
pub fn final_window_score(records: &[RunRecord]) -> f64 {
    assert!(!records.is_empty());
    let per_seed: Vec<f64> = records
        .iter()
        .map(|record| {
            let n = record.returns.len();
            let window = (n / 10).max(1);
            let tail = &record.returns[n - window..];
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect();
    per_seed.iter().sum::<f64>() / per_seed.len() as f64
}

/// Runs every grid point and writes `sweep-report.csv` mapping settings
/// to scores. Ties keep the earliest grid point.
pub fn run_sweep(config: &SweepConfig, out_dir: &Path, workers: usize) -> Result<SweepOutcome> {
    fs::create_dir_all(out_dir)
        .map_err(|e| SasRlError::io(format!("creating {}", out_dir.display()), e))?;
    let settings = expand_grid(config);
    let mut rows = Vec::with_capacity(settings.len());
    for setting in &settings {
        let sub_dir = out_dir.join(format!("setting-{:03}", setting.index));
        let outcome = run_experiment(&setting.config, &sub_dir, workers)?;
        if outcome.records.is_empty() {
            return Err(SasRlError::InvalidConfig(format!(
                "every seed of sweep setting {} failed",
                setting.index
            )));
        }
        rows.push(SweepRow {
            index: setting.index,
            params: if setting.labels.is_empty() {
                "base".to_string()
            } else {
                setting.labels.join(";")
            },
            score: final_window_score(&outcome.records),
            completed_seeds: outcome.records.len(),
        });
    }
    let best = rows
        .iter()
        .cloned()
        .reduce(|best, row| if row.score > best.score { row } else { best })
        .expect("grid expansion yields at least one setting");

    let mut report = String::from("setting,params,score,completed_seeds\n");
    for row in &rows {
        writeln!(
            report,
            "{},{},{},{}",
            row.index, row.params, row.score, row.completed_seeds
        )
        .expect("string writes cannot fail");
    }
    let report_path = out_dir.join("sweep-report.csv");
    fs::write(&report_path, report)
        .map_err(|e| SasRlError::io(format!("writing {}", report_path.display()), e))?;
    Ok(SweepOutcome {
        rows,
        best,
        report_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{EnvConfig, TabularToyConfig};
    use std::path::PathBuf;
    use std::time::Duration;

    fn base(algorithm: Algorithm) -> ExperimentConfig {
        ExperimentConfig {
            algorithm,
            env: EnvConfig::TabularToy(TabularToyConfig::default()),
            episodes: 10,
            horizon: 8,
            master_seed: 5,
            seeds: vec![0, 1],
            out_dir: None,
            sas_q: Default::default(),
            sas_pg: Default::default(),
            sas_npg: Default::default(),
        }
    }

    #[test]
    fn grid_expansion_is_a_cartesian_product() {
        let config = SweepConfig {
            base: base(Algorithm::SasPg),
            grid: SweepGrid {
                eta_theta: vec![0.01, 0.001],
                eta_v: vec![0.1, 0.05, 0.01],
                // Q-learning axes are ignored for a PG sweep.
                eta: vec![0.3],
                ..SweepGrid::default()
            },
        };
        let settings = expand_grid(&config);
        assert_eq!(settings.len(), 6);
        assert_eq!(settings[0].labels, vec!["eta_theta=0.01", "eta_v=0.1"]);
        assert!(settings
            .iter()
            .all(|s| (s.config.sas_q.eta - 0.1).abs() < 1e-12));
        let last = settings.last().unwrap();
        assert_eq!(last.config.sas_pg.eta_theta, 0.001);
        assert_eq!(last.config.sas_pg.eta_v, 0.01);
    }

    #[test]
    fn empty_grid_runs_the_base_config_once() {
        let config = SweepConfig {
            base: base(Algorithm::SasNpg),
            grid: SweepGrid::default(),
        };
        let settings = expand_grid(&config);
        assert_eq!(settings.len(), 1);
        assert_eq!(settings[0].config, config.base);
    }

    #[test]
    fn final_window_uses_the_last_tenth() {
        let record = |values: Vec<f64>| RunRecord {
            seed: 0,
            discounted_returns: values.clone(),
            returns: values,
            lambda_trace: None,
            wall_clock: Duration::ZERO,
            checkpoint_path: PathBuf::new(),
            csv_path: PathBuf::new(),
        };
        // 20 episodes: window is the last 2.
        let mut values = vec![0.0; 18];
        values.extend([10.0, 20.0]);
        assert!((final_window_score(&[record(values)]) - 15.0).abs() < 1e-12);
        // Shorter than 10 episodes: window is the single last episode.
        assert!((final_window_score(&[record(vec![1.0, 2.0, 7.0])]) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_writes_a_report_and_picks_the_best_row() {
        let dir = tempfile::tempdir().unwrap();
        let config = SweepConfig {
            base: base(Algorithm::SasQ),
            grid: SweepGrid {
                eta: vec![0.1, 0.2],
                ..SweepGrid::default()
            },
        };
        let outcome = run_sweep(&config, dir.path(), 1).unwrap();
        assert_eq!(outcome.rows.len(), 2);
        let report = fs::read_to_string(&outcome.report_path).unwrap();
        assert_eq!(report.lines().count(), 3);
        assert!(report.starts_with("setting,params,score,completed_seeds\n"));
        let best_score = outcome
            .rows
            .iter()
            .map(|r| r.score)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.best.score, best_score);
        assert!(dir.path().join("setting-000/summary.csv").exists());
        assert!(dir.path().join("setting-001/summary.csv").exists());
    }
}
