use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use query_hedge::harness::{
    annotate_slope, fit_scaling_exponent, monte_carlo, write_report_csv, write_report_json,
    RegretReport,
};
use query_hedge_cli::config::load_plan;
use query_hedge_cli::recipes::{run_recipe, RecipeOptions, RECIPE_NAMES};

/// Fallback seed source when `--seed` is not given.
const SEED_ENV: &str = "QUERY_HEDGE_SEED";

#[derive(Parser)]
#[command(
    name = "query-hedge",
    version,
    about = "Seeded regret experiments for online learning with a budget of best-action queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write the report.
    Run {
        /// Experiment config (TOML; instance + learner + plan).
        #[arg(long)]
        config: PathBuf,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override (falls back to QUERY_HEDGE_SEED, then the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Runs-per-cell override.
        #[arg(long)]
        runs: Option<usize>,
        /// Worker threads; defaults to the available hardware concurrency.
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        /// Exit nonzero unless every row satisfies its theorem bound.
        #[arg(long)]
        check_bounds: bool,
    },
    /// Run a config across a query-budget grid, optionally fitting the
    /// log-log regret-vs-budget slope.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated budgets replacing the config's k_grid, e.g. 100,200,400.
        #[arg(long)]
        k_grid: Option<String>,
        /// KMIN,KMAX window for the scaling fit; the fitted slope is recorded
        /// in the rows inside the window.
        #[arg(long)]
        fit: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        #[arg(long)]
        check_bounds: bool,
    },
    /// Run one built-in verification recipe; exits 0 iff it passes.
    Verify {
        /// Recipe name; see list-recipes.
        recipe: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Runs-per-cell override for the Monte Carlo recipes.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Run the fast sampling-free checks (oracle agreement, the potential
    /// inequality, the divergence grid).
    OracleCheck {
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// List the built-in verification recipes.
    ListRecipes,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, runs, parallelism, format, check_bounds } => {
            init_pool(parallelism)?;
            let mut plan = load_plan(&config)?;
            if let Some(seed) = resolve_seed(seed)? {
                plan.master_seed = seed;
            }
            if let Some(runs) = runs {
                plan.runs = runs;
            }
            let report = monte_carlo(&plan)?;
            write_report(&report, format, out.as_deref())?;
            Ok(exit_for_bounds(&report, check_bounds))
        }
        Command::Sweep {
            config,
            out,
            k_grid,
            fit,
            seed,
            runs,
            parallelism,
            format,
            check_bounds,
        } => {
            init_pool(parallelism)?;
            let mut plan = load_plan(&config)?;
            if let Some(seed) = resolve_seed(seed)? {
                plan.master_seed = seed;
            }
            if let Some(runs) = runs {
                plan.runs = runs;
            }
            if let Some(grid) = k_grid {
                plan.k_grid = parse_usize_list(&grid).context("invalid --k-grid")?;
            }
            let mut report = monte_carlo(&plan)?;
            if let Some(window) = fit {
                let bounds = parse_usize_list(&window).context("invalid --fit")?;
                anyhow::ensure!(bounds.len() == 2, "--fit expects KMIN,KMAX");
                let (slope, r2) = fit_scaling_exponent(&report, bounds[0], bounds[1])?;
                annotate_slope(&mut report, bounds[0], bounds[1], slope);
                eprintln!(
                    "fit over k in [{}, {}]: slope={slope:.4} r^2={r2:.4}",
                    bounds[0], bounds[1]
                );
            }
            write_report(&report, format, out.as_deref())?;
            Ok(exit_for_bounds(&report, check_bounds))
        }
        Command::Verify { recipe, seed, runs, parallelism } => {
            init_pool(parallelism)?;
            let opts = RecipeOptions { seed: resolve_seed(seed)?, runs };
            let outcome = run_recipe(&recipe, &opts)?;
            print_outcome_lines(outcome.name, &outcome.details, outcome.passed);
            Ok(if outcome.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::OracleCheck { parallelism } => {
            init_pool(parallelism)?;
            let mut all_passed = true;
            for name in ["prop-reg-hedge", "lemma1", "kl-bound"] {
                let outcome = run_recipe(name, &RecipeOptions::default())?;
                print_outcome_lines(outcome.name, &outcome.details, outcome.passed);
                all_passed &= outcome.passed;
            }
            Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::ListRecipes => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for name in RECIPE_NAMES {
                writeln!(out, "{name}")?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_outcome_lines(name: &str, details: &[String], passed: bool) {
    for line in details {
        println!("[{name}] {line}");
    }
    println!("recipe {name}: {}", if passed { "PASS" } else { "FAIL" });
}

fn exit_for_bounds(report: &RegretReport, check_bounds: bool) -> ExitCode {
    if check_bounds && report.rows.iter().any(|r| !r.bound_satisfied) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(value) => {
            let seed = value
                .trim()
                .parse::<u64>()
                .with_context(|| format!("{SEED_ENV}={value} is not a u64"))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .with_context(|| format!("'{part}' is not a nonnegative integer"))
        })
        .collect()
}

fn init_pool(parallelism: Option<usize>) -> Result<()> {
    if let Some(threads) = parallelism {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .context("worker pool already initialized")?;
    }
    Ok(())
}

fn write_report(
    report: &RegretReport,
    format: OutputFormat,
    out: Option<&std::path::Path>,
) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("cannot create output file {}", path.display()))?;
            let mut writer = BufWriter::new(file);
            emit(report, format, &mut writer)?;
            writer.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit(report, format, &mut lock)?;
        }
    }
    Ok(())
}

fn emit<W: Write>(report: &RegretReport, format: OutputFormat, out: &mut W) -> io::Result<()> {
    match format {
        OutputFormat::Csv => write_report_csv(report, out),
        OutputFormat::Json => write_report_json(report, out),
    }
}
