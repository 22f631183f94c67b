//! Experiment-config files.
//!
//! One TOML file describes instance + learner + plan together. All numeric
//! fields are explicit (no defaults for `T`, `n`, `k_grid`) so a
//! misconfigured experiment fails loudly at parse time instead of running
//! with silent fallbacks.
//!
//! ```toml
//! experiment_id = "lb-plus-hedge"
//! k_grid = [100, 200, 1000]
//! runs = 2000
//! master_seed = 7
//! benchmark = "best_fixed_hindsight"
//!
//! [instance]
//! kind = "lower_bound_stochastic"
//! sign = "+"
//! q = 0.25
//! eps = 0.008944
//! T = 10000
//! seed = 1
//!
//! [learner]
//! algorithm = "hedge_full"
//! k = 100
//! n = 2
//! T = 10000
//! ```

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use query_hedge::ExperimentPlan;

/// Load and validate an [`ExperimentPlan`]. Parse failures carry the file
/// path and the TOML line/field diagnostics.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let plan: ExperimentPlan = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    plan.validate().with_context(|| format!("invalid experiment plan in {}", path.display()))?;
    plan.instance.validate().with_context(|| format!("invalid instance in {}", path.display()))?;
    Ok(plan)
}
