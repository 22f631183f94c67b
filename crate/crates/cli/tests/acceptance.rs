//! Acceptance suite: runs every built-in verification recipe at its pinned
//! tolerances and asserts the determinism contract, printing one pass/fail
//! line per criterion.
//!
//! The heavy criteria are Monte Carlo suites at the run counts the checks
//! are specified for; expect a few minutes of wall time overall. Use
//! `cargo test -p query-hedge-cli --test acceptance -- --nocapture` to watch
//! the lines as they complete.

use std::time::Instant;

use query_hedge::harness::{monte_carlo, write_report_csv, write_report_json};
use query_hedge::instances::{InstanceKind, InstanceSpec, Sign};
use query_hedge::learners::{Algorithm, LearnerConfig};
use query_hedge::{Benchmark, ExperimentPlan};
use query_hedge_cli::recipes::{run_recipe, RecipeOptions};

fn check(criterion: &str, recipe: &str) {
    let started = Instant::now();
    let outcome = run_recipe(recipe, &RecipeOptions::default())
        .unwrap_or_else(|e| panic!("criterion {criterion} [{recipe}] did not run: {e:#}"));
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {criterion} [{recipe}]: {status} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
    if !outcome.passed {
        for line in &outcome.details {
            println!("  {line}");
        }
    }
    assert!(outcome.passed, "criterion {criterion} [{recipe}] failed; details above");
}

#[test]
fn criterion_01_oracle_equivalence() {
    check("1", "prop-reg-hedge");
}

#[test]
fn criterion_02_potential_inequality_certificate() {
    check("2", "lemma1");
}

#[test]
fn criterion_03_query_mixture_decomposition() {
    check("3", "obs1");
}

#[test]
fn criterion_04_full_feedback_bound() {
    check("4", "thm2");
}

#[test]
fn criterion_05_label_efficient_bernoulli_bound() {
    check("5", "thm3");
}

#[test]
fn criterion_06_label_efficient_uniform_bound() {
    check("6", "thm-adv3");
}

#[test]
fn criterion_07_scaling_exponents() {
    check("7 (full feedback)", "scaling-full");
    check("7 (label-efficient)", "scaling-le");
}

#[test]
fn criterion_08_divergence_grid() {
    check("8", "kl-bound");
}

#[test]
fn criterion_09_stochastic_learner_bounds() {
    check("9 (explore-then-commit)", "thm-etc");
    check("9 (follow-the-leader)", "thm-ftl");
}

#[test]
fn criterion_10_hard_instance_regret_floors() {
    check("10", "lb-sanity");
}

#[test]
fn criterion_11_determinism() {
    let started = Instant::now();
    // a stochastic instance exercises per-run sequence draws, learner
    // randomness, and the parallel runner in one plan
    let plan = ExperimentPlan {
        experiment_id: "determinism".into(),
        instance: InstanceSpec::new(
            InstanceKind::LowerBoundStochastic {
                sign: Sign::Plus,
                q: 0.25,
                eps: 0.02,
                horizon: 1000,
            },
            0,
        ),
        learner: LearnerConfig {
            algorithm: Algorithm::HedgeFull,
            k: 0,
            eta_override: None,
            n: 2,
            horizon: 1000,
        },
        k_grid: vec![10, 100],
        runs: 400,
        master_seed: 2024,
        benchmark: Benchmark::BestFixedHindsight,
    };
    let mut csv = [Vec::new(), Vec::new()];
    let mut json = [Vec::new(), Vec::new()];
    for i in 0..2 {
        let report = monte_carlo(&plan).expect("plan runs");
        write_report_csv(&report, &mut csv[i]).unwrap();
        write_report_json(&report, &mut json[i]).unwrap();
    }
    assert_eq!(csv[0], csv[1], "re-running the plan changed the CSV bytes");
    assert_eq!(json[0], json[1], "re-running the plan changed the JSON bytes");

    // recipes are pure functions of (seed, runs), including their formatted
    // measurement lines
    for (recipe, runs) in [("thm-etc", 500), ("scaling-le", 150)] {
        let opts = RecipeOptions { seed: None, runs: Some(runs) };
        let a = run_recipe(recipe, &opts).unwrap();
        let b = run_recipe(recipe, &opts).unwrap();
        assert_eq!(a, b, "recipe {recipe} is not deterministic");
    }
    println!("criterion 11 [determinism]: PASS ({:.1}s)", started.elapsed().as_secs_f64());
}
