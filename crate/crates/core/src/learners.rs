//! Query-budgeted online learners behind one interface.
//!
//! All learners play `n` actions over `T` steps and may spend at most `k`
//! best-action queries; a query reveals the identity of the step's best
//! action and the learner plays it. Feedback differs per algorithm:
//!
//! - [`run_hedge_full`]: multiplicative weights over relative losses
//!   `loss(i) - loss(best_t)` with the query set drawn uniformly among all
//!   `k`-subsets of the horizon. Full feedback: weights update at every
//!   step, so the action distribution is unaffected by where the queries
//!   landed.
//! - [`run_hedge_le_uniform`]: same uniform query set, but losses are only
//!   observed at queried steps, so the update runs just after those steps
//!   and nowhere else.
//! - [`run_hedge_le_bernoulli`]: queries are scheduled by per-step coin
//!   flips of rate `k_hat / T` with `k_hat` chosen below the hard budget so
//!   the budget survives the whole horizon with probability `>= 1 - 1/T`;
//!   observed relative losses are importance-weighted by `T / k_hat`.
//! - [`run_etc`]: explore-then-commit — query the first `k` steps, then
//!   commit to the action with the smallest observed mean.
//! - [`run_ftl`]: follow-the-leader — query the first `k` steps, then play
//!   the smallest running mean over all history (full feedback).
//!
//! Weights are stored in log space: learning-rate times loss-range products
//! reach the hundreds over long horizons, far past `exp` underflow.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::{Feedback, LossSequence};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("relative loss at index {index} is {value}, outside [0, {bound}]")]
    TildeLossOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("query budget k={k} exceeds horizon T={horizon}")]
    BudgetExceedsHorizon { k: usize, horizon: usize },
    #[error("{algorithm} needs k >= 1 (no estimate to commit to with k = 0)")]
    ZeroBudget { algorithm: &'static str },
    #[error("config is for n={config_n}, T={config_t} but losses are n={losses_n}, T={losses_t}")]
    DimensionMismatch { config_n: usize, config_t: usize, losses_n: usize, losses_t: usize },
    #[error("need n >= 1 and T >= 1, got n={n}, T={horizon}")]
    EmptyDimensions { n: usize, horizon: usize },
    #[error("learning rate must be positive and finite, got {eta}")]
    BadLearningRate { eta: f64 },
}

// ---------------------------------------------------------------------------
// Hedge core
// ---------------------------------------------------------------------------

/// Multiplicative-weights state over losses in `[0, U]`.
///
/// Weights start at 1 and evolve as `w(i) *= exp(-eta * loss(i))`; the played
/// distribution is proportional to the weights. Stored as log-weights with a
/// max-shifted normalization so long horizons cannot underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeState {
    log_weights: Vec<f64>,
    eta: f64,
    loss_bound: f64,
}

impl HedgeState {
    /// Fresh state with uniform weights. `loss_bound` is the range bound `U`
    /// the update losses must respect.
    pub fn new(n: usize, eta: f64, loss_bound: f64) -> Self {
        Self { log_weights: vec![0.0; n], eta, loss_bound }
    }

    pub fn num_actions(&self) -> usize {
        self.log_weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn loss_bound(&self) -> f64 {
        self.loss_bound
    }

    /// Write the current action distribution into `out`.
    pub fn distribution_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.log_weights.len());
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &lw) in out.iter_mut().zip(&self.log_weights) {
            let w = (lw - max).exp();
            *o = w;
            total += w;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        debug_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    pub fn distribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.log_weights.len()];
        self.distribution_into(&mut out);
        out
    }

    /// Apply one multiplicative update. Every entry must lie in
    /// `[0, loss_bound]`; violations are reported with their index.
    pub fn update(&mut self, losses: &[f64]) -> Result<(), LearnerError> {
        debug_assert_eq!(losses.len(), self.log_weights.len());
        for (index, &value) in losses.iter().enumerate() {
            if !value.is_finite() || value < 0.0 || value > self.loss_bound {
                return Err(LearnerError::TildeLossOutOfRange {
                    index,
                    value,
                    bound: self.loss_bound,
                });
            }
        }
        for (lw, &value) in self.log_weights.iter_mut().zip(losses) {
            *lw -= self.eta * value;
        }
        Ok(())
    }
}

/// One Hedge step: report the distribution from the pre-update weights, then
/// update with `tilde_loss` if `update` is set. Learners in feedback-starved
/// models pass `update = false` on steps where nothing was observed.
pub fn hedge_step(
    state: &mut HedgeState,
    tilde_loss: &[f64],
    update: bool,
) -> Result<Vec<f64>, LearnerError> {
    let dist = state.distribution();
    if update {
        state.update(tilde_loss)?;
    }
    Ok(dist)
}

// ---------------------------------------------------------------------------
// Config and trajectory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    HedgeFull,
    HedgeLeBernoulli,
    HedgeLeUniform,
    Etc,
    Ftl,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::HedgeFull => "hedge_full",
            Algorithm::HedgeLeBernoulli => "hedge_le_bernoulli",
            Algorithm::HedgeLeUniform => "hedge_le_uniform",
            Algorithm::Etc => "etc",
            Algorithm::Ftl => "ftl",
        }
    }

    /// Feedback model the algorithm operates in.
    pub fn feedback(&self) -> Feedback {
        match self {
            Algorithm::HedgeFull | Algorithm::Ftl => Feedback::Full,
            Algorithm::HedgeLeBernoulli | Algorithm::HedgeLeUniform | Algorithm::Etc => {
                Feedback::LabelEfficient
            }
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    #[serde(default)]
    pub eta_override: Option<f64>,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.n == 0 || self.horizon == 0 {
            return Err(LearnerError::EmptyDimensions { n: self.n, horizon: self.horizon });
        }
        if self.k > self.horizon {
            return Err(LearnerError::BudgetExceedsHorizon { k: self.k, horizon: self.horizon });
        }
        if let Some(eta) = self.eta_override {
            if !eta.is_finite() || eta <= 0.0 {
                return Err(LearnerError::BadLearningRate { eta });
            }
        }
        Ok(())
    }
}

/// Per-step record of a learner run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub queried: bool,
    pub action: usize,
    /// Loss of the realized action (the sampled one at unqueried steps).
    pub incurred_loss: f64,
    /// Loss expectation under the step's distribution: equals
    /// `incurred_loss` at queried steps, `sum_i p(i) loss(i)` otherwise.
    pub expected_loss: f64,
}

/// Full record of one learner run: per-step records plus the action
/// distribution used at each step (a point mass at queried steps).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    num_actions: usize,
    steps: Vec<StepRecord>,
    distributions: Vec<f64>,
    queries_used: usize,
}

impl Trajectory {
    fn with_capacity(num_actions: usize, horizon: usize) -> Self {
        Self {
            num_actions,
            steps: Vec::with_capacity(horizon),
            distributions: Vec::with_capacity(num_actions * horizon),
            queries_used: 0,
        }
    }

    fn push(&mut self, record: StepRecord, distribution: &[f64]) {
        debug_assert_eq!(distribution.len(), self.num_actions);
        if record.queried {
            self.queries_used += 1;
        }
        self.steps.push(record);
        self.distributions.extend_from_slice(distribution);
    }

    fn push_point_mass(&mut self, record: StepRecord) {
        if record.queried {
            self.queries_used += 1;
        }
        let start = self.distributions.len();
        self.distributions.resize(start + self.num_actions, 0.0);
        self.distributions[start + record.action] = 1.0;
        self.steps.push(record);
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Distribution the learner drew from at step `t` (point mass if queried
    /// or the learner is deterministic).
    pub fn distribution(&self, t: usize) -> &[f64] {
        &self.distributions[t * self.num_actions..(t + 1) * self.num_actions]
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    /// Total realized loss, summed in step order.
    pub fn total_incurred(&self) -> f64 {
        let mut total = 0.0;
        for s in &self.steps {
            total += s.incurred_loss;
        }
        total
    }

    /// Total per-step expected loss, summed in step order.
    pub fn total_expected(&self) -> f64 {
        let mut total = 0.0;
        for s in &self.steps {
            total += s.expected_loss;
        }
        total
    }

    /// Write as CSV `t,queried,action,incurred_loss,expected_loss` (0-based
    /// step and action indices, `queried` as 0/1).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,queried,action,incurred_loss,expected_loss")?;
        for (t, s) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                t, s.queried as u8, s.action, s.incurred_loss, s.expected_loss
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Default learning rate of the full-feedback Hedge with `k` queries:
/// `max{sqrt(ln n / T), k / T}`. The max form is what the regret guarantee
/// `min{sqrt(T ln n), T ln n / k}` is proved for; a plain branch on
/// `k <= sqrt(T)` under-tunes the rate in the sliver
/// `sqrt(T ln n) < k <= sqrt(T)` (nonempty only for n = 2) and measurably
/// exceeds the bound's `T ln n / k` branch there.
pub fn hedge_full_default_eta(n: usize, horizon: usize, k: usize) -> f64 {
    let t = horizon as f64;
    ((n as f64).ln() / t).sqrt().max(k as f64 / t)
}

/// Default learning rate of the uniform-subset label-efficient Hedge: `k / T`.
pub fn hedge_le_uniform_default_eta(horizon: usize, k: usize) -> f64 {
    k as f64 / horizon as f64
}

/// Effective Bernoulli numerator `k_hat`: the query rate is lowered from the
/// hard budget `k` by a `sqrt(T ln T / 2)` margin so that the budget is
/// exhausted with probability at most `1/T`, then clamped into `[1, k]` so
/// the learner stays defined for every `k` (the guarantee needs
/// `k >= sqrt(T ln T / 2) - 1`).
pub fn bernoulli_effective_rate(horizon: usize, k: usize) -> usize {
    let t = horizon as f64;
    let margin = (t * t.ln() / 2.0).sqrt().ceil() as usize;
    (k + 1).saturating_sub(margin).max(1).min(k.max(1))
}

/// Default learning rate of the Bernoulli label-efficient Hedge:
/// `max{ sqrt(k_hat ln n / 2) / T, k k_hat / (sqrt(2) T^2) }`.
pub fn hedge_le_bernoulli_default_eta(n: usize, horizon: usize, k: usize, k_hat: usize) -> f64 {
    let t = horizon as f64;
    let kh = k_hat as f64;
    let a = (kh * (n as f64).ln() / 2.0).sqrt() / t;
    let b = (k as f64) * kh / (std::f64::consts::SQRT_2 * t * t);
    a.max(b)
}

/// Uniformly random `k`-subset of `0..horizon`, as a membership mask.
pub fn sample_query_mask(rng: &mut ChaCha8Rng, horizon: usize, k: usize) -> Vec<bool> {
    debug_assert!(k <= horizon);
    let mut idx: Vec<u32> = (0..horizon as u32).collect();
    for pos in 0..k {
        let j = rng.gen_range(pos..horizon);
        idx.swap(pos, j);
    }
    let mut mask = vec![false; horizon];
    for &i in &idx[..k] {
        mask[i as usize] = true;
    }
    mask
}

fn sample_action(rng: &mut ChaCha8Rng, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

// ---------------------------------------------------------------------------
// Learners
// ---------------------------------------------------------------------------

/// Hedge with `k` uniform best-action queries under full feedback.
///
/// Queried steps play the step's best action; the rest sample from the
/// weight distribution. The relative-loss update `loss(i) - loss(best_t)`
/// runs at every step regardless, so the distribution path matches the
/// no-query learner's and the total loss decomposes as a `k/T` mixture of
/// the dynamic benchmark and the no-query loss.
pub fn run_hedge_full(
    losses: &LossSequence,
    k: usize,
    eta_override: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, LearnerError> {
    let (n, horizon) = (losses.num_actions(), losses.horizon());
    if k > horizon {
        return Err(LearnerError::BudgetExceedsHorizon { k, horizon });
    }
    let eta = eta_override.unwrap_or_else(|| hedge_full_default_eta(n, horizon, k));
    let mask = sample_query_mask(rng, horizon, k);
    let mut state = HedgeState::new(n, eta, 1.0);
    let mut traj = Trajectory::with_capacity(n, horizon);
    let mut dist = vec![0.0; n];
    let mut tilde = vec![0.0; n];
    for (t, &queried) in mask.iter().enumerate() {
        let step = losses.step(t);
        let best = losses.step_best(t);
        let min = losses.step_min(t);
        if queried {
            traj.push_point_mass(StepRecord {
                queried: true,
                action: best,
                incurred_loss: min,
                expected_loss: min,
            });
        } else {
            state.distribution_into(&mut dist);
            let action = sample_action(rng, &dist);
            let mut expected = 0.0;
            for i in 0..n {
                expected += dist[i] * step[i];
            }
            traj.push(
                StepRecord {
                    queried: false,
                    action,
                    incurred_loss: step[action],
                    expected_loss: expected,
                },
                &dist,
            );
        }
        for i in 0..n {
            tilde[i] = step[i] - min;
        }
        state.update(&tilde)?;
    }
    Ok(traj)
}

/// Uniform-subset label-efficient Hedge: queries land on a uniform random
/// `k`-subset, losses are observed only there, and the relative-loss update
/// is performed just after the querying steps and nowhere else.
pub fn run_hedge_le_uniform(
    losses: &LossSequence,
    k: usize,
    eta_override: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, LearnerError> {
    let (n, horizon) = (losses.num_actions(), losses.horizon());
    if k > horizon {
        return Err(LearnerError::BudgetExceedsHorizon { k, horizon });
    }
    let eta = eta_override.unwrap_or_else(|| hedge_le_uniform_default_eta(horizon, k));
    let mask = sample_query_mask(rng, horizon, k);
    let mut state = HedgeState::new(n, eta, 1.0);
    let mut traj = Trajectory::with_capacity(n, horizon);
    let mut dist = vec![0.0; n];
    let mut tilde = vec![0.0; n];
    for (t, &queried) in mask.iter().enumerate() {
        let step = losses.step(t);
        let min = losses.step_min(t);
        if queried {
            traj.push_point_mass(StepRecord {
                queried: true,
                action: losses.step_best(t),
                incurred_loss: min,
                expected_loss: min,
            });
            for i in 0..n {
                tilde[i] = step[i] - min;
            }
            state.update(&tilde)?;
        } else {
            state.distribution_into(&mut dist);
            let action = sample_action(rng, &dist);
            let mut expected = 0.0;
            for i in 0..n {
                expected += dist[i] * step[i];
            }
            traj.push(
                StepRecord {
                    queried: false,
                    action,
                    incurred_loss: step[action],
                    expected_loss: expected,
                },
                &dist,
            );
        }
    }
    Ok(traj)
}

/// Bernoulli-scheduled label-efficient Hedge.
///
/// Each step flips a coin of rate `k_hat / T`; on heads (budget permitting)
/// the learner queries, plays the best action, and updates with the
/// importance-weighted relative loss `(T / k_hat) (loss(i) - loss(best_t))`.
/// On tails it plays the weight distribution and, having observed nothing,
/// leaves the weights untouched. Once the budget is gone every remaining
/// step behaves like tails.
pub fn run_hedge_le_bernoulli(
    losses: &LossSequence,
    k: usize,
    eta_override: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, LearnerError> {
    let (n, horizon) = (losses.num_actions(), losses.horizon());
    if k > horizon {
        return Err(LearnerError::BudgetExceedsHorizon { k, horizon });
    }
    let k_hat = bernoulli_effective_rate(horizon, k);
    let eta = eta_override.unwrap_or_else(|| hedge_le_bernoulli_default_eta(n, horizon, k, k_hat));
    let rate = k_hat as f64 / horizon as f64;
    let scale = horizon as f64 / k_hat as f64;
    let mut state = HedgeState::new(n, eta, scale);
    let mut traj = Trajectory::with_capacity(n, horizon);
    let mut dist = vec![0.0; n];
    let mut tilde = vec![0.0; n];
    for t in 0..horizon {
        let step = losses.step(t);
        let min = losses.step_min(t);
        let heads = rng.gen::<f64>() < rate;
        if heads && traj.queries_used() < k {
            traj.push_point_mass(StepRecord {
                queried: true,
                action: losses.step_best(t),
                incurred_loss: min,
                expected_loss: min,
            });
            for i in 0..n {
                tilde[i] = scale * (step[i] - min);
            }
            state.update(&tilde)?;
        } else {
            state.distribution_into(&mut dist);
            let action = sample_action(rng, &dist);
            let mut expected = 0.0;
            for i in 0..n {
                expected += dist[i] * step[i];
            }
            traj.push(
                StepRecord {
                    queried: false,
                    action,
                    incurred_loss: step[action],
                    expected_loss: expected,
                },
                &dist,
            );
        }
    }
    Ok(traj)
}

/// Explore-then-commit with query warm start: query the first `k` steps
/// (observing the full loss vector each time), then commit to the action
/// with the smallest mean over those `k` steps, lowest index on ties.
pub fn run_etc(losses: &LossSequence, k: usize) -> Result<Trajectory, LearnerError> {
    let (n, horizon) = (losses.num_actions(), losses.horizon());
    if k == 0 {
        return Err(LearnerError::ZeroBudget { algorithm: "etc" });
    }
    if k > horizon {
        return Err(LearnerError::BudgetExceedsHorizon { k, horizon });
    }
    let mut sums = vec![0.0; n];
    let mut traj = Trajectory::with_capacity(n, horizon);
    for t in 0..k {
        let step = losses.step(t);
        for i in 0..n {
            sums[i] += step[i];
        }
        let min = losses.step_min(t);
        traj.push_point_mass(StepRecord {
            queried: true,
            action: losses.step_best(t),
            incurred_loss: min,
            expected_loss: min,
        });
    }
    let mut commit = 0;
    for i in 1..n {
        if sums[i] < sums[commit] {
            commit = i;
        }
    }
    for t in k..horizon {
        let loss = losses.loss(t, commit);
        traj.push_point_mass(StepRecord {
            queried: false,
            action: commit,
            incurred_loss: loss,
            expected_loss: loss,
        });
    }
    Ok(traj)
}

/// Follow-the-leader with query warm start: query the first `k` steps, then
/// play the action with the smallest running mean over all of history
/// (feedback is full, so every step is observed), lowest index on ties.
pub fn run_ftl(losses: &LossSequence, k: usize) -> Result<Trajectory, LearnerError> {
    let (n, horizon) = (losses.num_actions(), losses.horizon());
    if k == 0 {
        return Err(LearnerError::ZeroBudget { algorithm: "ftl" });
    }
    if k > horizon {
        return Err(LearnerError::BudgetExceedsHorizon { k, horizon });
    }
    let mut sums = vec![0.0; n];
    let mut traj = Trajectory::with_capacity(n, horizon);
    for t in 0..horizon {
        let step = losses.step(t);
        if t < k {
            let min = losses.step_min(t);
            traj.push_point_mass(StepRecord {
                queried: true,
                action: losses.step_best(t),
                incurred_loss: min,
                expected_loss: min,
            });
        } else {
            // counts are equal across actions, so the smallest sum leads
            let mut leader = 0;
            for i in 1..n {
                if sums[i] < sums[leader] {
                    leader = i;
                }
            }
            let loss = step[leader];
            traj.push_point_mass(StepRecord {
                queried: false,
                action: leader,
                incurred_loss: loss,
                expected_loss: loss,
            });
        }
        for i in 0..n {
            sums[i] += step[i];
        }
    }
    Ok(traj)
}

/// Run the configured learner on `losses`. The config's `(n, T)` must match
/// the sequence.
pub fn run(
    config: &LearnerConfig,
    losses: &LossSequence,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, LearnerError> {
    config.validate()?;
    if config.n != losses.num_actions() || config.horizon != losses.horizon() {
        return Err(LearnerError::DimensionMismatch {
            config_n: config.n,
            config_t: config.horizon,
            losses_n: losses.num_actions(),
            losses_t: losses.horizon(),
        });
    }
    match config.algorithm {
        Algorithm::HedgeFull => run_hedge_full(losses, config.k, config.eta_override, rng),
        Algorithm::HedgeLeBernoulli => {
            run_hedge_le_bernoulli(losses, config.k, config.eta_override, rng)
        }
        Algorithm::HedgeLeUniform => {
            run_hedge_le_uniform(losses, config.k, config.eta_override, rng)
        }
        Algorithm::Etc => run_etc(losses, config.k),
        Algorithm::Ftl => run_ftl(losses, config.k),
    }
}
