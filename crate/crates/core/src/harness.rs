//! Seeded Monte Carlo experiment engine.
//!
//! [`monte_carlo`] executes an [`ExperimentPlan`]: for every query budget in
//! the plan's grid it runs `runs` independent simulations, each seeded by a
//! hash of `(master_seed, k, run_index)` so results are reproducible
//! bit-for-bit regardless of how the runs are scheduled across threads.
//! Stochastic instances draw a fresh loss sequence per run; deterministic
//! ones are sampled once and shared.
//!
//! Regret is measured from the per-step expected losses recorded in the
//! trajectory (exact over the learner's internal randomization at unqueried
//! steps), which roughly halves the run count needed to resolve a bound
//! check; the realized sample path stays available on the trajectory.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::{
    instance_stats, sample_loss_sequence, InstanceError, InstanceSpec, InstanceStats, LossSequence,
};
use crate::learners::{self, LearnerConfig, LearnerError, Trajectory};
use crate::oracles::{theorem_bound, BoundSpec, TheoremId};
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("plan needs runs >= 1")]
    NoRuns,
    #[error("k grid entry {k} exceeds horizon T={horizon}")]
    GridOutOfRange { k: usize, horizon: usize },
    #[error("k grid is empty")]
    EmptyGrid,
    #[error("learner config (n={config_n}, T={config_t}) does not match instance (n={instance_n}, T={instance_t})")]
    ConfigInstanceMismatch {
        config_n: usize,
        config_t: usize,
        instance_n: usize,
        instance_t: usize,
    },
    #[error("pseudo-regret needs an analytic instance law: {source}")]
    PseudoRegretUnavailable { source: InstanceError },
    #[error("trajectory and losses disagree on (n, T)")]
    TrajectoryShapeMismatch,
    #[error("instance generation failed at (k={k}, run={run}): {source}")]
    InstanceFailed { k: usize, run: usize, source: InstanceError },
    #[error("learner failed at (k={k}, run={run}): {source}")]
    LearnerFailed { k: usize, run: usize, source: LearnerError },
    #[error("scaling fit needs at least 4 grid points in range, found {found}")]
    TooFewFitPoints { found: usize },
    #[error("scaling fit found non-positive mean regret {mean} at k={k}; widen runs or the range")]
    NonPositiveMean { k: usize, mean: f64 },
}

/// What the learner's cumulative loss is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    /// Best fixed action on the realized sequence (adversarial regret).
    BestFixedHindsight,
    /// `T` times the best mean action (pseudo-regret; analytic instances only).
    BestMeanPseudo,
}

/// A full experiment: one instance, one learner, a grid of query budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub experiment_id: String,
    pub instance: InstanceSpec,
    pub learner: LearnerConfig,
    pub k_grid: Vec<usize>,
    pub runs: usize,
    pub master_seed: u64,
    pub benchmark: Benchmark,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs == 0 {
            return Err(HarnessError::NoRuns);
        }
        if self.k_grid.is_empty() {
            return Err(HarnessError::EmptyGrid);
        }
        let horizon = self.instance.horizon();
        for &k in &self.k_grid {
            if k > horizon {
                return Err(HarnessError::GridOutOfRange { k, horizon });
            }
        }
        if self.learner.n != self.instance.num_actions() || self.learner.horizon != horizon {
            return Err(HarnessError::ConfigInstanceMismatch {
                config_n: self.learner.n,
                config_t: self.learner.horizon,
                instance_n: self.instance.num_actions(),
                instance_t: horizon,
            });
        }
        Ok(())
    }
}

/// Aggregated result for one query budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub k: usize,
    pub runs: usize,
    pub mean_regret: f64,
    pub std_error: f64,
    pub mean_queries: f64,
    pub bound_name: TheoremId,
    pub bound_value: f64,
    /// `mean + 3 * std_error <= bound_value`.
    pub bound_satisfied: bool,
    /// Whether the bound's precondition holds at this `(T, n, k)`.
    pub precondition_met: bool,
    /// Fitted scaling slope, filled for rows inside a fit window.
    pub slope_window: Option<f64>,
}

/// Monte Carlo statistics per query budget, plus enough plan context to
/// serialize self-contained CSV/JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub experiment_id: String,
    pub algorithm: learners::Algorithm,
    pub horizon: usize,
    pub n: usize,
    pub rows: Vec<RegretRow>,
}

/// Streaming mean/variance accumulator (Welford). Exact on constant input:
/// repeated identical values give a bitwise-stable mean and zero variance,
/// which keeps deterministic cells (e.g. a full-budget learner on a fixed
/// instance) at std_error exactly 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }
}

/// Regret of one trajectory against the chosen benchmark, using the
/// per-step expected losses. Pseudo-regret needs the instance's exact stats
/// (see [`instance_stats`]); passing `None` with
/// [`Benchmark::BestMeanPseudo`] is an error, which is how non-analytic
/// instances are rejected.
pub fn compute_regret(
    trajectory: &Trajectory,
    losses: &LossSequence,
    benchmark: Benchmark,
    stats: Option<&InstanceStats>,
) -> Result<f64, HarnessError> {
    if trajectory.num_actions() != losses.num_actions() || trajectory.horizon() != losses.horizon()
    {
        return Err(HarnessError::TrajectoryShapeMismatch);
    }
    let total = trajectory.total_expected();
    match benchmark {
        Benchmark::BestFixedHindsight => Ok(total - losses.best_fixed_total()),
        Benchmark::BestMeanPseudo => {
            let stats = stats.ok_or(HarnessError::PseudoRegretUnavailable {
                source: InstanceError::NoAnalyticLaw,
            })?;
            Ok(total - losses.horizon() as f64 * stats.means[stats.best_action])
        }
    }
}

// Tags separating the RNG streams of one (k, run) cell.
const STREAM_INSTANCE: u64 = 0;
const STREAM_LEARNER: u64 = 1;

/// Execute the plan. Rows come out in `k_grid` order; per-run seeds are
/// derived from `(master_seed, k, run_index)`, so the report is identical
/// for identical plans no matter the parallelism.
pub fn monte_carlo(plan: &ExperimentPlan) -> Result<RegretReport, HarnessError> {
    plan.validate()?;
    let stats = match plan.benchmark {
        Benchmark::BestMeanPseudo => Some(
            instance_stats(&plan.instance)
                .map_err(|source| HarnessError::PseudoRegretUnavailable { source })?,
        ),
        Benchmark::BestFixedHindsight => None,
    };
    let shared_losses = if plan.instance.is_stochastic() {
        None
    } else {
        let mut rng = derive_rng(plan.master_seed, &[STREAM_INSTANCE]);
        Some(
            sample_loss_sequence(&plan.instance, &mut rng)
                .map_err(|source| HarnessError::InstanceFailed { k: 0, run: 0, source })?,
        )
    };

    let mut rows = Vec::with_capacity(plan.k_grid.len());
    for &k in &plan.k_grid {
        let cells: Vec<(f64, usize)> = (0..plan.runs)
            .into_par_iter()
            .map(|run| -> Result<(f64, usize), HarnessError> {
                let losses_storage;
                let losses: &LossSequence = match &shared_losses {
                    Some(seq) => seq,
                    None => {
                        let mut rng =
                            derive_rng(plan.master_seed, &[k as u64, run as u64, STREAM_INSTANCE]);
                        losses_storage = sample_loss_sequence(&plan.instance, &mut rng)
                            .map_err(|source| HarnessError::InstanceFailed { k, run, source })?;
                        &losses_storage
                    }
                };
                let mut rng = derive_rng(plan.master_seed, &[k as u64, run as u64, STREAM_LEARNER]);
                let config = LearnerConfig { k, ..plan.learner };
                let trajectory = learners::run(&config, losses, &mut rng)
                    .map_err(|source| HarnessError::LearnerFailed { k, run, source })?;
                let regret = compute_regret(&trajectory, losses, plan.benchmark, stats.as_ref())?;
                Ok((regret, trajectory.queries_used()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut regret_stats = RunningStats::default();
        let mut query_stats = RunningStats::default();
        for &(regret, queries) in &cells {
            regret_stats.push(regret);
            query_stats.push(queries as f64);
        }
        let bound = theorem_bound(&BoundSpec {
            theorem: TheoremId::for_algorithm(plan.learner.algorithm),
            horizon: plan.learner.horizon,
            n: plan.learner.n,
            k,
        });
        let mean = regret_stats.mean();
        let se = regret_stats.std_error();
        rows.push(RegretRow {
            k,
            runs: plan.runs,
            mean_regret: mean,
            std_error: se,
            mean_queries: query_stats.mean(),
            bound_name: TheoremId::for_algorithm(plan.learner.algorithm),
            bound_value: bound.value,
            bound_satisfied: mean + 3.0 * se <= bound.value,
            precondition_met: bound.precondition_met,
            slope_window: None,
        });
    }
    Ok(RegretReport {
        experiment_id: plan.experiment_id.clone(),
        algorithm: plan.learner.algorithm,
        horizon: plan.learner.horizon,
        n: plan.learner.n,
        rows,
    })
}

/// Ordinary least squares of `ln(mean_regret)` on `ln(k)` over the rows with
/// `k` in `[k_min, k_max]`. Returns `(slope, r_squared)`. Rows with
/// non-positive mean regret in range are an error (their log is undefined);
/// fewer than 4 usable points is an error.
pub fn fit_scaling_exponent(
    report: &RegretReport,
    k_min: usize,
    k_max: usize,
) -> Result<(f64, f64), HarnessError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in &report.rows {
        if row.k < k_min || row.k > k_max {
            continue;
        }
        if row.mean_regret <= 0.0 {
            return Err(HarnessError::NonPositiveMean { k: row.k, mean: row.mean_regret });
        }
        xs.push((row.k as f64).ln());
        ys.push(row.mean_regret.ln());
    }
    if xs.len() < 4 {
        return Err(HarnessError::TooFewFitPoints { found: xs.len() });
    }
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - xm) * (y - ym);
        sxx += (x - xm) * (x - xm);
        syy += (y - ym) * (y - ym);
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = ym + slope * (x - xm);
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok((slope, r_squared))
}

/// Record a fitted slope on the rows inside the fit window.
pub fn annotate_slope(report: &mut RegretReport, k_min: usize, k_max: usize, slope: f64) {
    for row in &mut report.rows {
        if row.k >= k_min && row.k <= k_max {
            row.slope_window = Some(slope);
        }
    }
}

const REPORT_HEADER: &str = "experiment_id,algorithm,feedback,T,n,k,runs,mean_regret,std_error,\
bound_name,bound_value,bound_satisfied,mean_queries,slope_window";

/// Write the report as CSV, one row per grid entry.
pub fn write_report_csv<W: Write>(report: &RegretReport, mut out: W) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            report.experiment_id,
            report.algorithm,
            report.algorithm.feedback(),
            report.horizon,
            report.n,
            row.k,
            row.runs,
            row.mean_regret,
            row.std_error,
            row.bound_name,
            row.bound_value,
            row.bound_satisfied,
            row.mean_queries,
            row.slope_window.map(|s| s.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    experiment_id: &'a str,
    algorithm: &'a str,
    feedback: String,
    #[serde(rename = "T")]
    horizon: usize,
    n: usize,
    k: usize,
    runs: usize,
    mean_regret: f64,
    std_error: f64,
    bound_name: &'a str,
    bound_value: f64,
    bound_satisfied: bool,
    mean_queries: f64,
    slope_window: Option<f64>,
}

/// Write the report as a JSON array mirroring the CSV columns.
pub fn write_report_json<W: Write>(report: &RegretReport, mut out: W) -> io::Result<()> {
    let rows: Vec<JsonRow> = report
        .rows
        .iter()
        .map(|row| JsonRow {
            experiment_id: &report.experiment_id,
            algorithm: report.algorithm.name(),
            feedback: report.algorithm.feedback().to_string(),
            horizon: report.horizon,
            n: report.n,
            k: row.k,
            runs: row.runs,
            mean_regret: row.mean_regret,
            std_error: row.std_error,
            bound_name: row.bound_name.name(),
            bound_value: row.bound_value,
            bound_satisfied: row.bound_satisfied,
            mean_queries: row.mean_queries,
            slope_window: row.slope_window,
        })
        .collect();
    let text = serde_json::to_string_pretty(&rows).map_err(io::Error::other)?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")
}
