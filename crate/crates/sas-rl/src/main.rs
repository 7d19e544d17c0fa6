//! Command-line front end: multi-seed experiment runs, hyperparameter
//! sweeps, the constrained-target divergence demonstration, and a
//! self-check battery that exercises the analytic oracles.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use sas_rl::core::{sample_bernoulli_subset, ActionSet, RngHandle, State};
use sas_rl::envs::TabularSasMdp;
use sas_rl::estimators::{QEstimator, ValueEstimator};
use sas_rl::features::FeatureMap;
use sas_rl::harness::{
    divergence_demo, run_experiment, run_sweep, ExperimentConfig, SweepConfig,
};
use sas_rl::oracle::{
    all_decision_lists, enumerated_estimator_expectation, evaluate_policy, exact_fim,
    exact_grad_j, exact_j, fim_from_loglik_hessian, natural_grad, sas_bellman_backup,
    sas_value_iteration,
};
use sas_rl::policy::MaskedSoftmaxPolicy;
use sas_rl::variance::LambdaWeights;

#[derive(Parser)]
#[command(
    name = "sas-rl",
    version,
    about = "Learners and exact solvers for MDPs whose action set is resampled every step"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment described by a TOML config.
    Run(RunArgs),
    /// Evaluate a declared hyperparameter grid and report the best setting.
    Sweep(SweepArgs),
    /// Trace the repeated single-transition Q update with and without the
    /// next-step action-set constraint.
    DemoDivergence(DemoArgs),
    /// Run the oracle self-check battery; exits non-zero on any failure.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Replace the config's seed list with 0..N.
    #[arg(long, value_name = "N", conflicts_with = "seed_list")]
    seeds: Option<u64>,
    /// Replace the config's seed list with explicit values.
    #[arg(long, value_name = "S1,S2,...", value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Output directory; falls back to the config's `out_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for seed parallelism; 0 lets the pool decide.
    #[arg(long, value_name = "K", default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (TOML): a `[base]` experiment plus a `[grid]` table.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; falls back to the base config's `out_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for seed parallelism; 0 lets the pool decide.
    #[arg(long, value_name = "K", default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct DemoArgs {
    /// Step size for both update modes; must lie in (0, 1).
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Number of repeated updates to trace.
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Directory for divergence.csv; omitted means the CSV goes to stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Seed for the randomly structured check instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::DemoDivergence(args) => cmd_demo_divergence(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let mut config = ExperimentConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(n) = args.seeds {
        config.seeds = (0..n).collect();
    } else if let Some(list) = args.seed_list {
        config.seeds = list;
    }
    let out = args
        .out
        .or_else(|| config.out_dir.clone())
        .ok_or("no output directory: pass --out or set out_dir in the config")?;

    let outcome = run_experiment(&config, &out, args.workers).map_err(|e| e.to_string())?;
    for record in &outcome.records {
        println!(
            "seed {:>4}: {} episodes, {:.2?} -> {}",
            record.seed,
            record.returns.len(),
            record.wall_clock,
            record.csv_path.display()
        );
    }
    match &outcome.summary_path {
        Some(path) => println!("summary: {}", path.display()),
        None => return Err("every seed failed".into()),
    }
    if !outcome.failures.is_empty() {
        return Err(format!(
            "{} of {} seeds failed",
            outcome.failures.len(),
            outcome.failures.len() + outcome.records.len()
        ));
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), String> {
    let config = SweepConfig::load(&args.config).map_err(|e| e.to_string())?;
    let out = args
        .out
        .or_else(|| config.base.out_dir.clone())
        .ok_or("no output directory: pass --out or set out_dir in the base config")?;

    let outcome = run_sweep(&config, &out, args.workers).map_err(|e| e.to_string())?;
    for row in &outcome.rows {
        println!(
            "setting {:>3}  score {:>14.6}  seeds {}  [{}]",
            row.index, row.score, row.completed_seeds, row.params
        );
    }
    println!(
        "best: setting {} [{}] with score {:.6}",
        outcome.best.index, outcome.best.params, outcome.best.score
    );
    println!("report: {}", outcome.report_path.display());
    Ok(())
}

fn cmd_demo_divergence(args: DemoArgs) -> Result<(), String> {
    if !(args.eta > 0.0 && args.eta < 1.0) {
        return Err(format!("--eta must lie in (0, 1), got {}", args.eta));
    }
    if args.iterations == 0 {
        return Err("--iterations must be positive".into());
    }
    let trace = divergence_demo(args.eta, args.iterations);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
            let path = dir.join("divergence.csv");
            fs::write(&path, trace.to_csv())
                .map_err(|e| format!("writing {}: {e}", path.display()))?;
            println!("trace: {}", path.display());
        }
        None => print!("{}", trace.to_csv()),
    }
    match trace.diverged_at {
        Some(i) => eprintln!("constrained target: |theta2| exceeded 1e6 at iteration {i}"),
        None => eprintln!(
            "constrained target: |theta2| still below 1e6 after {} iterations",
            args.iterations
        ),
    }
    match trace.converged_at {
        Some(i) => eprintln!("unconstrained target: within 1e-3 of -4 at iteration {i}"),
        None => eprintln!(
            "unconstrained target: not within 1e-3 of -4 after {} iterations",
            args.iterations
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Oracle self-checks. Each check panics on violation; the driver turns
// panics into FAIL lines so one broken invariant never hides the rest.
// ---------------------------------------------------------------------------

fn cmd_oracle_check(args: OracleArgs) -> Result<(), String> {
    let checks: &[(&str, fn(u64))] = &[
        ("masked-softmax-normalization", check_softmax_normalization),
        ("score-zero-expectation", check_score_zero_expectation),
        ("score-finite-difference", check_score_finite_difference),
        ("exact-gradient-finite-difference", check_gradient_fd),
        ("gradient-vs-enumeration", check_gradient_vs_enumeration),
        ("baseline-invariance", check_baseline_invariance),
        ("fim-vs-loglik-hessian", check_fim_agreement),
        ("natural-gradient-routes", check_natural_gradient),
        ("bellman-fixed-point", check_bellman_fixed_point),
        ("value-iteration-optimality", check_value_iteration),
        ("divergence-counterexample", check_divergence),
    ];

    // Panics are reported through FAIL lines; the default hook would
    // duplicate them onto stderr mid-listing.
    let previous_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0usize;
    for (name, check) in checks {
        match panic::catch_unwind(AssertUnwindSafe(|| check(args.seed))) {
            Ok(()) => println!("PASS {name}"),
            Err(payload) => {
                failures += 1;
                println!("FAIL {name}: {}", panic_text(payload.as_ref()));
            }
        }
    }
    panic::set_hook(previous_hook);

    if failures == 0 {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(format!("{failures} of {} checks failed", checks.len()))
    }
}

fn panic_text(payload: &(dyn std::any::Any + Send)) -> &str {
    if let Some(text) = payload.downcast_ref::<&str>() {
        text
    } else if let Some(text) = payload.downcast_ref::<String>() {
        text
    } else {
        "non-text panic payload"
    }
}

fn random_subset(num_actions: usize, availability: f64, rng: &mut RngHandle) -> ActionSet {
    let candidates: Vec<usize> = (0..num_actions).collect();
    sample_bernoulli_subset(num_actions, &candidates, availability, rng)
}

/// Small randomly structured instance shared by the policy-level checks.
fn random_policy_instance(
    rng: &mut RngHandle,
    num_states: usize,
    num_actions: usize,
) -> MaskedSoftmaxPolicy {
    let mut policy = MaskedSoftmaxPolicy::new(
        FeatureMap::OneHot {
            num_states,
        },
        num_actions,
    );
    for w in policy.theta_mut() {
        *w = rng.gen_range(-2.0..2.0);
    }
    policy
}

fn check_softmax_normalization(seed: u64) {
    let mut rng = RngHandle::derive(seed, 0xC0);
    for _ in 0..500 {
        let num_states = rng.gen_range(1..5usize);
        let num_actions = rng.gen_range(1..6usize);
        let policy = random_policy_instance(&mut rng, num_states, num_actions);
        let state = State::Discrete(rng.gen_range(0..num_states));
        let set = random_subset(num_actions, 0.6, &mut rng);
        let probs = policy.action_probabilities(&state, &set);
        let total: f64 = probs.iter().sum();
        assert!(
            (total - 1.0).abs() < 1e-12,
            "probabilities sum to {total}, not 1"
        );
        for a in 0..num_actions {
            if !set.contains(a) {
                assert!(
                    probs[a] == 0.0,
                    "unavailable action {a} carries probability {}",
                    probs[a]
                );
            }
        }
    }
}

fn check_score_zero_expectation(seed: u64) {
    let mut rng = RngHandle::derive(seed, 0xC1);
    for _ in 0..300 {
        let num_states = rng.gen_range(1..4usize);
        let num_actions = rng.gen_range(1..5usize);
        let policy = random_policy_instance(&mut rng, num_states, num_actions);
        let state = State::Discrete(rng.gen_range(0..num_states));
        let set = random_subset(num_actions, 0.6, &mut rng);
        let probs = policy.action_probabilities(&state, &set);
        let mut mean = vec![0.0; policy.num_params()];
        for a in set.available() {
            let psi = policy.log_prob_grad(&state, &set, a);
            for (m, g) in mean.iter_mut().zip(&psi) {
                *m += probs[a] * g;
            }
        }
        let worst = mean.iter().fold(0.0f64, |acc, m| acc.max(m.abs()));
        assert!(worst < 1e-12, "conditional score mean reaches {worst}");
    }
}

fn check_score_finite_difference(seed: u64) {
    let mut rng = RngHandle::derive(seed, 0xC2);
    let h = 1e-6;
    for _ in 0..100 {
        let num_states = rng.gen_range(1..4usize);
        let num_actions = rng.gen_range(2..5usize);
        let policy = random_policy_instance(&mut rng, num_states, num_actions);
        let state = State::Discrete(rng.gen_range(0..num_states));
        let set = random_subset(num_actions, 0.7, &mut rng);
        let action = set.first_available();
        let psi = policy.log_prob_grad(&state, &set, action);
        for k in 0..policy.num_params() {
            let mut plus = policy.clone();
            plus.theta_mut()[k] += h;
            let mut minus = policy.clone();
            minus.theta_mut()[k] -= h;
            let fd = (plus.log_prob(&state, &set, action)
                - minus.log_prob(&state, &set, action))
                / (2.0 * h);
            assert!(
                (psi[k] - fd).abs() < 1e-6,
                "score component {k}: analytic {} vs finite difference {fd}",
                psi[k]
            );
        }
    }
}

/// Toy instance shared by the gradient-level checks.
fn gradient_instance(seed: u64, gamma: f64) -> (TabularSasMdp, MaskedSoftmaxPolicy) {
    let mdp = TabularSasMdp::random_toy(3, 2, 0.6, gamma, seed);
    let mut rng = RngHandle::derive(seed, 0xC3);
    let mut policy = MaskedSoftmaxPolicy::new(
        FeatureMap::OneHot {
            num_states: 3,
        },
        2,
    );
    for w in policy.theta_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    (mdp, policy)
}

fn check_gradient_fd(seed: u64) {
    let (mdp, policy) = gradient_instance(seed, 0.9);
    let horizon = 6;
    let grad = exact_grad_j(&mdp, &policy, horizon);
    let h = 1e-5;
    for k in 0..policy.num_params() {
        let mut plus = policy.clone();
        plus.theta_mut()[k] += h;
        let mut minus = policy.clone();
        minus.theta_mut()[k] -= h;
        let fd = (exact_j(&mdp, &plus, horizon).j - exact_j(&mdp, &minus, horizon).j) / (2.0 * h);
        let scale = grad[k].abs().max(1.0);
        assert!(
            (grad[k] - fd).abs() / scale < 1e-6,
            "gradient component {k}: analytic {} vs finite difference {fd}",
            grad[k]
        );
    }
}

fn check_gradient_vs_enumeration(seed: u64) {
    let (mdp, policy) = gradient_instance(seed, 0.9);
    let horizon = 5;
    let zero = LambdaWeights::new(0.0, 0.0);
    let v_est = ValueEstimator::new(FeatureMap::OneHot {
        num_states: 3,
    });
    let q_est = QEstimator::new(
        FeatureMap::OneHot {
            num_states: 3,
        },
        2,
    );
    let expectation =
        enumerated_estimator_expectation(&mdp, &policy, horizon, &zero, &v_est, &q_est);
    let grad = exact_grad_j(&mdp, &policy, horizon);
    for (k, (e, g)) in expectation.iter().zip(&grad).enumerate() {
        assert!(
            (e - g).abs() < 1e-10,
            "component {k}: enumeration {e} vs closed form {g}"
        );
    }
}

fn check_baseline_invariance(seed: u64) {
    let (mdp, policy) = gradient_instance(seed, 0.9);
    let horizon = 5;
    let mut rng = RngHandle::derive(seed, 0xC4);
    let mut v_est = ValueEstimator::new(FeatureMap::OneHot {
        num_states: 3,
    });
    for w in v_est.weights_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    let mut q_est = QEstimator::new(
        FeatureMap::OneHot {
            num_states: 3,
        },
        2,
    );
    for w in q_est.weights_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    let reference = enumerated_estimator_expectation(
        &mdp,
        &policy,
        horizon,
        &LambdaWeights::new(0.0, 0.0),
        &v_est,
        &q_est,
    );
    for lambda in [
        LambdaWeights::new(-1.0, 0.0),
        LambdaWeights::new(0.0, -1.0),
        LambdaWeights::new(1.0, 1.0),
    ] {
        let shifted =
            enumerated_estimator_expectation(&mdp, &policy, horizon, &lambda, &v_est, &q_est);
        for (k, (r, s)) in reference.iter().zip(&shifted).enumerate() {
            assert!(
                (r - s).abs() < 1e-10,
                "component {k} moved from {r} to {s} under lambda ({}, {})",
                lambda.v,
                lambda.q
            );
        }
    }
}

fn check_fim_agreement(seed: u64) {
    let (mdp, policy) = gradient_instance(seed, 0.5);
    let horizon = 4;
    let exact = exact_fim(&mdp, &policy, horizon);
    let numeric = fim_from_loglik_hessian(&mdp, &policy, horizon, 1e-3);
    let mut worst = 0.0f64;
    for i in 0..exact.nrows() {
        for j in 0..exact.ncols() {
            worst = worst.max((exact[(i, j)] - numeric[(i, j)]).abs());
        }
    }
    assert!(worst < 1e-4, "FIM entries disagree by up to {worst}");
}

fn check_natural_gradient(seed: u64) {
    let (mdp, policy) = gradient_instance(seed, 0.9);
    // natural_grad itself asserts that the normal-equation route and the
    // direct solve agree to 1e-6; here we add finiteness.
    let w = natural_grad(&mdp, &policy, 6, 1e-8).expect("natural gradient solve failed");
    assert!(
        w.iter().all(|x| x.is_finite()),
        "natural gradient contains non-finite entries"
    );
}

fn check_bellman_fixed_point(seed: u64) {
    let (mdp, policy) = gradient_instance(seed, 0.9);
    let mut v = vec![0.0; mdp.num_states];
    for _ in 0..2000 {
        v = sas_bellman_backup(&mdp, &policy, &v);
    }
    let solved = evaluate_policy(&mdp, &policy).expect("policy evaluation failed");
    for (s, (iterated, direct)) in v.iter().zip(&solved.values).enumerate() {
        assert!(
            (iterated - direct).abs() < 1e-9,
            "state {s}: iterated {iterated} vs solved {direct}"
        );
    }
}

fn check_value_iteration(seed: u64) {
    let mdp = TabularSasMdp::random_toy(3, 2, 0.6, 0.9, seed);
    let vi = sas_value_iteration(&mdp, 1e-12, 100_000).expect("value iteration failed");
    let greedy_j = evaluate_policy(&mdp, &vi.policy)
        .expect("greedy policy evaluation failed")
        .j;
    for list in all_decision_lists(mdp.num_states, mdp.num_actions) {
        let j = evaluate_policy(&mdp, &list)
            .expect("decision-list evaluation failed")
            .j;
        assert!(
            greedy_j >= j - 1e-9,
            "a brute-force decision list scores {j}, above the greedy {greedy_j}"
        );
    }
}

fn check_divergence(_seed: u64) {
    let trace = divergence_demo(0.1, 200);
    assert!(
        trace.diverged_at == Some(129),
        "constrained target crossed 1e6 at {:?}, expected iteration 129",
        trace.diverged_at
    );
    assert!(
        trace.converged_at == Some(66),
        "unconstrained target entered the 1e-3 band at {:?}, expected iteration 66",
        trace.converged_at
    );
    let last = *trace.unconstrained.last().unwrap();
    assert!(
        (last + 4.0).abs() < 1e-3,
        "unconstrained target finished at {last}, not near -4"
    );
}
