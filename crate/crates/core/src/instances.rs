//! Loss-sequence generators and their exact statistics.
//!
//! The simulator consumes an `n x T` matrix of losses in `[0, 1]`. Four
//! generators cover the cases of interest:
//!
//! - [`InstanceKind::Fixed`]: an arbitrary matrix, passed through verbatim.
//! - [`InstanceKind::LowerBoundStochastic`]: a two-action i.i.d. family
//!   parameterized by `(sign, q, eps)`. Each step draws one of four joint
//!   outcomes: `(1,1)` w.p. 1/2, `(0,0)` w.p. 1/2 - 2q, `(0,1)` w.p. q + eps
//!   and `(1,0)` w.p. q - eps under sign `+` (swapped under sign `-`).
//!   The two signs are statistically close (per-step KL of order eps^2/q)
//!   yet favor different actions, which is what makes the family hard.
//! - [`InstanceKind::IidBernoulli`]: independent Bernoulli losses with
//!   per-action means.
//! - [`InstanceKind::TwoExpertEps`]: a two-expert sequence described by the
//!   per-step gap `eps_t = loss(2) - loss(1)`, materialized with minimal
//!   magnitude as `loss(1) = max(0, -eps_t)`, `loss(2) = max(0, eps_t)`.
//!
//! [`instance_stats`] computes exact (enumeration-based, never sampled)
//! per-action means, gaps and absolute gaps for the analytic families.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which of the two statistically-close laws a lower-bound instance follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+"),
            Sign::Minus => write!(f, "-"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("loss at (t={t}, action={action}) is {value}, outside [0, 1]")]
    LossOutOfRange { t: usize, action: usize, value: f64 },
    #[error("matrix has {got} entries, expected n*T = {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("need n >= 1 and T >= 1, got n={n}, T={horizon}")]
    EmptyDimensions { n: usize, horizon: usize },
    #[error("fixed matrix rows have unequal lengths")]
    RaggedMatrix,
    #[error("lower-bound parameters violate eps <= q: eps={eps}, q={q}")]
    EpsExceedsQ { eps: f64, q: f64 },
    #[error("lower-bound parameter q={q} violates q <= 1/4")]
    QTooLarge { q: f64 },
    #[error("lower-bound parameter {name}={value} must be nonnegative")]
    NegativeParameter { name: &'static str, value: f64 },
    #[error("Bernoulli mean for action {action} is {value}, outside [0, 1]")]
    MeanOutOfRange { action: usize, value: f64 },
    #[error("two-expert gap at t={t} is {value}, outside [-1, 1]")]
    GapOutOfRange { t: usize, value: f64 },
    #[error("looping/increasing schedule needs 0 <= T_tilde <= T and T - T_tilde even; got T={horizon}, T_tilde={plateau}")]
    BadPhaseSplit { horizon: usize, plateau: usize },
    #[error("exact stats require an analytic law (lower_bound_stochastic or iid_bernoulli)")]
    NoAnalyticLaw,
    #[error(
        "exact enumeration supports at most 20 actions, got {n}; estimate by Monte Carlo instead"
    )]
    TooManyActions { n: usize },
    #[error("query budget k={k} exceeds horizon T={horizon}")]
    BudgetExceedsHorizon { k: usize, horizon: usize },
}

// ---------------------------------------------------------------------------
// LossSequence
// ---------------------------------------------------------------------------

/// An `n x T` matrix of losses in `[0, 1]` with cached per-step minima and
/// per-action totals.
///
/// Storage is step-major: the losses of step `t` are the contiguous slice
/// returned by [`LossSequence::step`]. Per-step best actions break ties
/// toward the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSequence {
    n: usize,
    horizon: usize,
    // [t * n + i]
    losses: Vec<f64>,
    step_min: Vec<f64>,
    step_best: Vec<usize>,
    action_totals: Vec<f64>,
    min_total: f64,
}

impl LossSequence {
    /// Build from step-major data (`data[t * n + i]`), validating every entry.
    pub fn new(n: usize, horizon: usize, data: Vec<f64>) -> Result<Self, InstanceError> {
        if n == 0 || horizon == 0 {
            return Err(InstanceError::EmptyDimensions { n, horizon });
        }
        if data.len() != n * horizon {
            return Err(InstanceError::ShapeMismatch { got: data.len(), expected: n * horizon });
        }
        for t in 0..horizon {
            for i in 0..n {
                let v = data[t * n + i];
                if !(0.0..=1.0).contains(&v) {
                    return Err(InstanceError::LossOutOfRange { t, action: i, value: v });
                }
            }
        }
        let mut step_min = Vec::with_capacity(horizon);
        let mut step_best = Vec::with_capacity(horizon);
        let mut action_totals = vec![0.0; n];
        let mut min_total = 0.0;
        for t in 0..horizon {
            let row = &data[t * n..(t + 1) * n];
            let mut best = 0;
            for i in 1..n {
                if row[i] < row[best] {
                    best = i;
                }
            }
            step_min.push(row[best]);
            step_best.push(best);
            min_total += row[best];
            for i in 0..n {
                action_totals[i] += row[i];
            }
        }
        Ok(Self { n, horizon, losses: data, step_min, step_best, action_totals, min_total })
    }

    /// Build from one row per action (`rows[i][t]`).
    pub fn from_action_rows(rows: &[Vec<f64>]) -> Result<Self, InstanceError> {
        let n = rows.len();
        if n == 0 {
            return Err(InstanceError::EmptyDimensions { n: 0, horizon: 0 });
        }
        let horizon = rows[0].len();
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(InstanceError::RaggedMatrix);
        }
        let mut data = vec![0.0; n * horizon];
        for (i, row) in rows.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                data[t * n + i] = v;
            }
        }
        Self::new(n, horizon, data)
    }

    pub fn num_actions(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn loss(&self, t: usize, action: usize) -> f64 {
        self.losses[t * self.n + action]
    }

    /// Losses of all actions at step `t`.
    #[inline]
    pub fn step(&self, t: usize) -> &[f64] {
        &self.losses[t * self.n..(t + 1) * self.n]
    }

    /// `min_i loss_t(i)`.
    #[inline]
    pub fn step_min(&self, t: usize) -> f64 {
        self.step_min[t]
    }

    /// The step's best action (lowest index on ties).
    #[inline]
    pub fn step_best(&self, t: usize) -> usize {
        self.step_best[t]
    }

    /// Cumulative loss of one action over the whole horizon.
    pub fn action_total(&self, action: usize) -> f64 {
        self.action_totals[action]
    }

    /// Sum over steps of the per-step minimum (the best dynamic benchmark).
    pub fn min_total(&self) -> f64 {
        self.min_total
    }

    /// Cumulative loss of the best fixed action in hindsight.
    pub fn best_fixed_total(&self) -> f64 {
        self.action_totals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Write as CSV `t,action,loss`, row-major by step. Indices are 0-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,action,loss")?;
        for t in 0..self.horizon {
            for i in 0..self.n {
                writeln!(out, "{},{},{}", t, i, self.loss(t, i))?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// InstanceSpec
// ---------------------------------------------------------------------------

/// Declarative description of how a [`LossSequence`] is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    /// A fixed matrix, one row per action.
    Fixed { matrix: Vec<Vec<f64>> },
    /// The two-action hard stochastic family.
    LowerBoundStochastic {
        sign: Sign,
        q: f64,
        eps: f64,
        #[serde(rename = "T")]
        horizon: usize,
    },
    /// Independent Bernoulli losses with the given per-action means.
    IidBernoulli {
        means: Vec<f64>,
        #[serde(rename = "T")]
        horizon: usize,
    },
    /// Two experts with per-step gap `eps_t = loss(2) - loss(1)`.
    TwoExpertEps { eps_sequence: Vec<f64> },
}

/// An [`InstanceKind`] plus the seed used when the instance is sampled on its
/// own (the Monte Carlo harness derives per-run seeds from its master seed
/// instead).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub kind: InstanceKind,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(kind: InstanceKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// Number of actions this description generates.
    pub fn num_actions(&self) -> usize {
        match &self.kind {
            InstanceKind::Fixed { matrix } => matrix.len(),
            InstanceKind::LowerBoundStochastic { .. } | InstanceKind::TwoExpertEps { .. } => 2,
            InstanceKind::IidBernoulli { means, .. } => means.len(),
        }
    }

    /// Horizon this description generates.
    pub fn horizon(&self) -> usize {
        match &self.kind {
            InstanceKind::Fixed { matrix } => matrix.first().map_or(0, Vec::len),
            InstanceKind::LowerBoundStochastic { horizon, .. }
            | InstanceKind::IidBernoulli { horizon, .. } => *horizon,
            InstanceKind::TwoExpertEps { eps_sequence } => eps_sequence.len(),
        }
    }

    /// Whether sampling consumes randomness (a fresh draw per run is needed).
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self.kind,
            InstanceKind::LowerBoundStochastic { .. } | InstanceKind::IidBernoulli { .. }
        )
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        match &self.kind {
            InstanceKind::Fixed { matrix } => {
                let n = matrix.len();
                let horizon = matrix.first().map_or(0, Vec::len);
                if n == 0 || horizon == 0 {
                    return Err(InstanceError::EmptyDimensions { n, horizon });
                }
                if matrix.iter().any(|r| r.len() != horizon) {
                    return Err(InstanceError::RaggedMatrix);
                }
                for (i, row) in matrix.iter().enumerate() {
                    for (t, &v) in row.iter().enumerate() {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(InstanceError::LossOutOfRange { t, action: i, value: v });
                        }
                    }
                }
                Ok(())
            }
            InstanceKind::LowerBoundStochastic { q, eps, horizon, .. } => {
                if *horizon == 0 {
                    return Err(InstanceError::EmptyDimensions { n: 2, horizon: 0 });
                }
                validate_lower_bound_pair(*eps, *q)
            }
            InstanceKind::IidBernoulli { means, horizon } => {
                if means.is_empty() || *horizon == 0 {
                    return Err(InstanceError::EmptyDimensions {
                        n: means.len(),
                        horizon: *horizon,
                    });
                }
                for (i, &m) in means.iter().enumerate() {
                    if !(0.0..=1.0).contains(&m) {
                        return Err(InstanceError::MeanOutOfRange { action: i, value: m });
                    }
                }
                Ok(())
            }
            InstanceKind::TwoExpertEps { eps_sequence } => {
                if eps_sequence.is_empty() {
                    return Err(InstanceError::EmptyDimensions { n: 2, horizon: 0 });
                }
                for (t, &e) in eps_sequence.iter().enumerate() {
                    if !(-1.0..=1.0).contains(&e) {
                        return Err(InstanceError::GapOutOfRange { t, value: e });
                    }
                }
                Ok(())
            }
        }
    }
}

fn validate_lower_bound_pair(eps: f64, q: f64) -> Result<(), InstanceError> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(InstanceError::NegativeParameter { name: "eps", value: eps });
    }
    if q < 0.0 || !q.is_finite() {
        return Err(InstanceError::NegativeParameter { name: "q", value: q });
    }
    if eps > q {
        return Err(InstanceError::EpsExceedsQ { eps, q });
    }
    if q > 0.25 {
        return Err(InstanceError::QTooLarge { q });
    }
    Ok(())
}

/// Outcome probabilities `((1,1), (0,0), (0,1), (1,0))` of the hard family.
pub fn lower_bound_outcome_probs(sign: Sign, q: f64, eps: f64) -> [f64; 4] {
    let (p01, p10) = match sign {
        Sign::Plus => (q + eps, q - eps),
        Sign::Minus => (q - eps, q + eps),
    };
    [0.5, 0.5 - 2.0 * q, p01, p10]
}

/// Generate the loss sequence described by `spec`, consuming `rng` for the
/// stochastic kinds. Rejects invalid parameters before sampling.
pub fn sample_loss_sequence(
    spec: &InstanceSpec,
    rng: &mut ChaCha8Rng,
) -> Result<LossSequence, InstanceError> {
    spec.validate()?;
    match &spec.kind {
        InstanceKind::Fixed { matrix } => LossSequence::from_action_rows(matrix),
        InstanceKind::LowerBoundStochastic { sign, q, eps, horizon } => {
            let probs = lower_bound_outcome_probs(*sign, *q, *eps);
            // cumulative thresholds over (1,1), (0,0), (0,1), (1,0)
            let c1 = probs[0];
            let c2 = c1 + probs[1];
            let c3 = c2 + probs[2];
            let mut data = vec![0.0; 2 * horizon];
            for t in 0..*horizon {
                let u: f64 = rng.gen();
                let (l1, l2) = if u < c1 {
                    (1.0, 1.0)
                } else if u < c2 {
                    (0.0, 0.0)
                } else if u < c3 {
                    (0.0, 1.0)
                } else {
                    (1.0, 0.0)
                };
                data[2 * t] = l1;
                data[2 * t + 1] = l2;
            }
            LossSequence::new(2, *horizon, data)
        }
        InstanceKind::IidBernoulli { means, horizon } => {
            let n = means.len();
            let mut data = vec![0.0; n * horizon];
            for t in 0..*horizon {
                for i in 0..n {
                    let u: f64 = rng.gen();
                    data[t * n + i] = if u < means[i] { 1.0 } else { 0.0 };
                }
            }
            LossSequence::new(n, *horizon, data)
        }
        InstanceKind::TwoExpertEps { eps_sequence } => {
            let horizon = eps_sequence.len();
            let mut data = vec![0.0; 2 * horizon];
            for (t, &e) in eps_sequence.iter().enumerate() {
                data[2 * t] = (-e).max(0.0);
                data[2 * t + 1] = e.max(0.0);
            }
            LossSequence::new(2, horizon, data)
        }
    }
}

// ---------------------------------------------------------------------------
// Hard-instance parameter schedules
// ---------------------------------------------------------------------------

const E2: f64 = std::f64::consts::E * std::f64::consts::E;
const E8: f64 = E2 * E2 * E2 * E2;
const SQRT_5: f64 = 2.236_067_977_499_79;

/// `c0 = 1 / (e^8 * sqrt(5))`: budget threshold constant of the hardness
/// results.
pub const C0: f64 = 1.0 / (E8 * SQRT_5);

/// `c1 = 1 / (320 e^2)`: constant in front of the large-budget regret floors
/// `c1 T / k` (full feedback) and `c1 T^2 / k^2` (label-efficient).
pub const C1: f64 = 1.0 / (320.0 * E2);

/// Feedback model a parameter schedule targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Full,
    LabelEfficient,
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feedback::Full => write!(f, "full"),
            Feedback::LabelEfficient => write!(f, "label_efficient"),
        }
    }
}

/// Which branch of the schedule applies for a given `(T, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SmallK,
    LargeK,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundParams {
    pub eps: f64,
    pub q: f64,
    pub regime: Regime,
}

/// Hard-instance parameters `(eps, q)` for a given feedback model, horizon
/// and query budget.
///
/// Full feedback: below the threshold `k < c0 sqrt(T)` the schedule is
/// `eps = 2/sqrt(5T)`, `q = 1/4`; above it, `eps = 1/(40ek) + (4e-1)/(40eT)`
/// and `q = 5 eps^2 T`. Label-efficient: the threshold condition
/// `k < c0 T / sqrt(k)` is restated as `k^(3/2) < c0 T`; below it
/// `eps = 2/sqrt(5k)`, `q = 1/4`, above it `eps = T/(40ek^2) + (4e-1)/(40ek)`
/// and `q = 5 eps^2 T`.
///
/// The large-budget formulas can leave the valid range (`eps <= q <= 1/4`)
/// for extreme `(T, k)` combinations; those return an error naming the
/// violated constraint instead of an unusable distribution.
pub fn lower_bound_params(
    feedback: Feedback,
    horizon: usize,
    k: usize,
) -> Result<LowerBoundParams, InstanceError> {
    let t = horizon as f64;
    let kf = k as f64;
    let e = std::f64::consts::E;
    let (eps, q, regime) = match feedback {
        Feedback::Full => {
            if kf < C0 * t.sqrt() {
                (2.0 / (5.0 * t).sqrt(), 0.25, Regime::SmallK)
            } else {
                let eps = 1.0 / (40.0 * e * kf) + (4.0 * e - 1.0) / (40.0 * e * t);
                (eps, 5.0 * eps * eps * t, Regime::LargeK)
            }
        }
        Feedback::LabelEfficient => {
            if kf.powf(1.5) < C0 * t {
                (2.0 / (5.0 * kf).sqrt(), 0.25, Regime::SmallK)
            } else {
                let eps = t / (40.0 * e * kf * kf) + (4.0 * e - 1.0) / (40.0 * e * kf);
                (eps, 5.0 * eps * eps * t, Regime::LargeK)
            }
        }
    };
    validate_lower_bound_pair(eps, q)?;
    Ok(LowerBoundParams { eps, q, regime })
}

/// Order of the two phases in [`looping_increasing_adversary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseOrder {
    LoopFirst,
    IncreaseFirst,
}

/// Two-expert gap schedule made of a looping phase (alternating `+1, -1`, net
/// gap change zero) of length `T - T_tilde` and an increasing phase (all
/// `+1`) of length `T_tilde`, in the requested order. This is the structure
/// of the strongest oblivious opponent of Hedge with uniform querying.
pub fn looping_increasing_adversary(
    horizon: usize,
    plateau: usize,
    order: PhaseOrder,
) -> Result<Vec<f64>, InstanceError> {
    if plateau > horizon || !(horizon - plateau).is_multiple_of(2) {
        return Err(InstanceError::BadPhaseSplit { horizon, plateau });
    }
    let loop_len = horizon - plateau;
    let mut eps = Vec::with_capacity(horizon);
    let looping = (0..loop_len).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 });
    match order {
        PhaseOrder::LoopFirst => {
            eps.extend(looping);
            eps.extend(std::iter::repeat_n(1.0, plateau));
        }
        PhaseOrder::IncreaseFirst => {
            eps.extend(std::iter::repeat_n(1.0, plateau));
            eps.extend(looping);
        }
    }
    Ok(eps)
}

// ---------------------------------------------------------------------------
// Exact instance statistics
// ---------------------------------------------------------------------------

/// Exact per-step statistics of an analytic instance law.
///
/// `gap` and `abs_gap` are the expected gap and expected absolute gap between
/// the best action and the best of the others:
/// `gap = E[min_{i != i*} loss(i) - loss(i*)]`,
/// `abs_gap = E|min_{i != i*} loss(i) - loss(i*)|`. Per-action variants
/// compare action `i` against `i*` directly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceStats {
    pub means: Vec<f64>,
    pub best_action: usize,
    /// `Delta_i = mean(i) - mean(i*)` per action.
    pub gaps: Vec<f64>,
    /// `Psi_i = E|loss(i) - loss(i*)|` per action.
    pub abs_gaps: Vec<f64>,
    /// `Delta`: expected gap of the best non-`i*` action.
    pub gap: f64,
    /// `Psi`: expected absolute gap of the best non-`i*` action.
    pub abs_gap: f64,
    /// `E[min_i loss(i)]`, the per-step dynamic benchmark.
    pub expected_dynamic_min: f64,
}

/// Exact statistics by closed-form enumeration of the instance's outcome law.
///
/// Supports the two analytic kinds: the four-outcome hard family and
/// Bernoulli products with at most 20 actions (enumeration over `2^n` joint
/// outcomes).
pub fn instance_stats(spec: &InstanceSpec) -> Result<InstanceStats, InstanceError> {
    spec.validate()?;
    match &spec.kind {
        InstanceKind::LowerBoundStochastic { sign, q, eps, .. } => {
            let probs = lower_bound_outcome_probs(*sign, *q, *eps);
            let outcomes = [[1.0, 1.0], [0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
            let mut acc = StatsAccumulator::new(2);
            for (losses, &p) in outcomes.iter().zip(probs.iter()) {
                acc.first_pass(losses, p);
            }
            let best = acc.best_action();
            for (losses, &p) in outcomes.iter().zip(probs.iter()) {
                acc.second_pass(losses, p, best);
            }
            Ok(acc.finish(best))
        }
        InstanceKind::IidBernoulli { means, .. } => {
            let n = means.len();
            if n > 20 {
                return Err(InstanceError::TooManyActions { n });
            }
            let mut acc = StatsAccumulator::new(n);
            let mut losses = vec![0.0; n];
            for_each_bernoulli_outcome(means, &mut losses, |l, p| acc.first_pass(l, p));
            let best = acc.best_action();
            let mut losses = vec![0.0; n];
            for_each_bernoulli_outcome(means, &mut losses, |l, p| acc.second_pass(l, p, best));
            Ok(acc.finish(best))
        }
        _ => Err(InstanceError::NoAnalyticLaw),
    }
}

fn for_each_bernoulli_outcome(means: &[f64], losses: &mut [f64], mut f: impl FnMut(&[f64], f64)) {
    let n = means.len();
    for mask in 0u32..(1u32 << n) {
        let mut p = 1.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                losses[i] = 1.0;
                p *= means[i];
            } else {
                losses[i] = 0.0;
                p *= 1.0 - means[i];
            }
        }
        if p > 0.0 {
            f(losses, p);
        }
    }
}

struct StatsAccumulator {
    n: usize,
    means: Vec<f64>,
    abs_gaps: Vec<f64>,
    abs_gap: f64,
    expected_min: f64,
    expected_min_others: f64,
}

impl StatsAccumulator {
    fn new(n: usize) -> Self {
        Self {
            n,
            means: vec![0.0; n],
            abs_gaps: vec![0.0; n],
            abs_gap: 0.0,
            expected_min: 0.0,
            expected_min_others: 0.0,
        }
    }

    fn first_pass(&mut self, losses: &[f64], p: f64) {
        for (mean, &loss) in self.means.iter_mut().zip(losses) {
            *mean += p * loss;
        }
        self.expected_min += p * losses.iter().copied().fold(f64::INFINITY, f64::min);
    }

    fn best_action(&self) -> usize {
        let mut best = 0;
        for i in 1..self.n {
            if self.means[i] < self.means[best] {
                best = i;
            }
        }
        best
    }

    fn second_pass(&mut self, losses: &[f64], p: f64, best: usize) {
        let at_best = losses[best];
        for (gap, &loss) in self.abs_gaps.iter_mut().zip(losses) {
            *gap += p * (loss - at_best).abs();
        }
        if self.n > 1 {
            let min_others = losses
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != best)
                .map(|(_, &v)| v)
                .fold(f64::INFINITY, f64::min);
            self.abs_gap += p * (min_others - at_best).abs();
            self.expected_min_others += p * min_others;
        }
    }

    fn finish(self, best: usize) -> InstanceStats {
        let gaps: Vec<f64> = self.means.iter().map(|&m| m - self.means[best]).collect();
        let gap = if self.n > 1 { self.expected_min_others - self.means[best] } else { 0.0 };
        InstanceStats {
            means: self.means,
            best_action: best,
            gaps,
            abs_gaps: self.abs_gaps,
            gap,
            abs_gap: self.abs_gap,
            expected_dynamic_min: self.expected_min,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use proptest::prelude::*;

    fn unit(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        rand::Rng::gen(rng)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn fixed_matrix_round_trips() {
        let spec = InstanceSpec::new(
            InstanceKind::Fixed { matrix: vec![vec![0.0, 0.5, 1.0], vec![1.0, 0.25, 0.0]] },
            0,
        );
        let mut rng = derive_rng(0, &[]);
        let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
        assert_eq!(seq.num_actions(), 2);
        assert_eq!(seq.horizon(), 3);
        assert_eq!(seq.loss(1, 0), 0.5);
        assert_eq!(seq.loss(2, 1), 0.0);
        assert_eq!(seq.step_best(0), 0);
        assert_eq!(seq.step_best(1), 1);
        assert_eq!(seq.min_total(), 0.25);
        assert_eq!(seq.best_fixed_total(), 1.25);
    }

    #[test]
    fn fixed_matrix_rejects_out_of_range() {
        let spec = InstanceSpec::new(InstanceKind::Fixed { matrix: vec![vec![0.0], vec![1.5]] }, 0);
        let mut rng = derive_rng(0, &[]);
        let err = sample_loss_sequence(&spec, &mut rng).unwrap_err();
        assert_eq!(err, InstanceError::LossOutOfRange { t: 0, action: 1, value: 1.5 });
    }

    #[test]
    fn lower_bound_symmetric_case_frequencies() {
        // eps = 0, q = 1/4: outcomes (1,1) w.p. 1/2, (0,1) and (1,0) w.p. 1/4.
        let horizon = 1_000_000;
        let spec = InstanceSpec::new(
            InstanceKind::LowerBoundStochastic { sign: Sign::Plus, q: 0.25, eps: 0.0, horizon },
            0,
        );
        let mut rng = derive_rng(7, &[0]);
        let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for t in 0..horizon {
            let (a, b) = (seq.loss(t, 0), seq.loss(t, 1));
            let idx = match (a as u8, b as u8) {
                (1, 1) => 0,
                (0, 0) => 1,
                (0, 1) => 2,
                _ => 3,
            };
            counts[idx] += 1;
        }
        let tf = horizon as f64;
        for (idx, &expect) in [0.5, 0.0, 0.25, 0.25].iter().enumerate() {
            let freq = counts[idx] as f64 / tf;
            let se = (expect * (1.0 - expect) / tf).sqrt();
            assert!(
                close(freq, expect, 3.0 * se + 1e-12),
                "outcome {idx}: freq {freq} vs {expect}"
            );
        }
    }

    #[test]
    fn lower_bound_sign_swap_swaps_asymmetric_outcomes() {
        let horizon = 1_000_000;
        let (q, eps) = (0.2, 0.05);
        let mut freqs = Vec::new();
        for sign in [Sign::Plus, Sign::Minus] {
            let spec =
                InstanceSpec::new(InstanceKind::LowerBoundStochastic { sign, q, eps, horizon }, 0);
            let mut rng = derive_rng(11, &[sign as u64]);
            let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
            let mut counts = [0usize; 4];
            for t in 0..horizon {
                let idx = match (seq.loss(t, 0) as u8, seq.loss(t, 1) as u8) {
                    (1, 1) => 0,
                    (0, 0) => 1,
                    (0, 1) => 2,
                    _ => 3,
                };
                counts[idx] += 1;
            }
            freqs.push(counts.map(|c| c as f64 / horizon as f64));
        }
        let se = |p: f64| (p * (1.0 - p) / horizon as f64).sqrt();
        // (1,1) and (0,0) marginals agree across signs; (0,1)/(1,0) swap.
        assert!(close(freqs[0][0], freqs[1][0], 3.0 * se(0.5) * 1.5));
        assert!(close(freqs[0][1], freqs[1][1], 3.0 * se(0.1) * 1.5));
        assert!(close(freqs[0][2], freqs[1][3], 3.0 * se(q + eps) * 1.5));
        assert!(close(freqs[0][3], freqs[1][2], 3.0 * se(q - eps) * 1.5));
    }

    #[test]
    fn iid_bernoulli_column_mean() {
        let horizon = 100_000;
        let spec =
            InstanceSpec::new(InstanceKind::IidBernoulli { means: vec![0.3, 0.5], horizon }, 0);
        let mut rng = derive_rng(3, &[]);
        let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
        let mean0 = seq.action_total(0) / horizon as f64;
        let se = (0.3f64 * 0.7 / horizon as f64).sqrt();
        assert!(close(mean0, 0.3, 3.0 * se), "mean {mean0}");
    }

    #[test]
    fn two_expert_eps_materialization() {
        let spec =
            InstanceSpec::new(InstanceKind::TwoExpertEps { eps_sequence: vec![1.0, -0.5, 0.0] }, 0);
        let mut rng = derive_rng(0, &[]);
        let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
        assert_eq!(seq.step(0), &[0.0, 1.0]);
        assert_eq!(seq.step(1), &[0.5, 0.0]);
        assert_eq!(seq.step(2), &[0.0, 0.0]);
        // gap realized with minimal magnitude: min loss is 0 every step
        assert_eq!(seq.min_total(), 0.0);
    }

    #[test]
    fn lower_bound_params_full_large_budget() {
        // direct evaluation of the large-budget schedule at T = 10^4, k = 50
        let p = lower_bound_params(Feedback::Full, 10_000, 50).unwrap();
        assert_eq!(p.regime, Regime::LargeK);
        assert!(close(p.eps, 1.9302002198279259e-4, 1e-16));
        assert!(close(p.q, 1.8628364443118866e-3, 1e-15));
    }

    #[test]
    fn lower_bound_params_full_k1_is_large_budget() {
        // c0 * sqrt(10^4) = 0.015..., so even k = 1 clears the threshold into
        // the large-budget branch; there the schedule yields q > 1/4, which
        // only that branch can produce and which is reported as invalid
        let threshold = C0 * 100.0;
        assert!(threshold < 1.0, "{threshold}");
        let err = lower_bound_params(Feedback::Full, 10_000, 1).unwrap_err();
        assert!(matches!(err, InstanceError::QTooLarge { .. }), "{err}");
    }

    #[test]
    fn lower_bound_params_small_budget_q_is_quarter() {
        // full feedback needs k < c0 sqrt(T): only k = 0 qualifies at desk scale
        let p = lower_bound_params(Feedback::Full, 10_000, 0).unwrap();
        assert_eq!(p.regime, Regime::SmallK);
        assert_eq!(p.q, 0.25);
        assert!(close(p.eps, 2.0 / (5.0f64 * 10_000.0).sqrt(), 1e-15));
        // label-efficient small-k regime asks for k^(3/2) < c0 T
        let k = 25usize;
        assert!((k as f64).powf(1.5) < C0 * 1_000_000.0);
        let p = lower_bound_params(Feedback::LabelEfficient, 1_000_000, k).unwrap();
        assert_eq!(p.regime, Regime::SmallK);
        assert_eq!(p.q, 0.25);
        assert!(close(p.eps, 2.0 / (5.0f64 * 25.0).sqrt(), 1e-15));
    }

    #[test]
    fn lower_bound_params_reports_invalid_combinations() {
        // large k pushes eps above q = 5 eps^2 T in full feedback
        let err = lower_bound_params(Feedback::Full, 10_000, 2500).unwrap_err();
        assert!(matches!(err, InstanceError::EpsExceedsQ { .. }), "{err}");
    }

    #[test]
    fn lower_bound_params_label_efficient_values() {
        let p = lower_bound_params(Feedback::LabelEfficient, 10_000, 1000).unwrap();
        assert_eq!(p.regime, Regime::LargeK);
        let e = std::f64::consts::E;
        let eps = 10_000.0 / (40.0 * e * 1e6) + (4.0 * e - 1.0) / (40.0 * e * 1000.0);
        assert!(close(p.eps, eps, 1e-18));
        assert!(close(p.q, 5.0 * eps * eps * 10_000.0, 1e-18));
    }

    #[test]
    fn adversary_schedule_examples() {
        assert_eq!(
            looping_increasing_adversary(4, 2, PhaseOrder::LoopFirst).unwrap(),
            vec![1.0, -1.0, 1.0, 1.0]
        );
        assert_eq!(
            looping_increasing_adversary(4, 4, PhaseOrder::LoopFirst).unwrap(),
            vec![1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(
            looping_increasing_adversary(4, 0, PhaseOrder::LoopFirst).unwrap(),
            vec![1.0, -1.0, 1.0, -1.0]
        );
        assert_eq!(
            looping_increasing_adversary(4, 2, PhaseOrder::IncreaseFirst).unwrap(),
            vec![1.0, 1.0, 1.0, -1.0]
        );
        assert!(looping_increasing_adversary(4, 1, PhaseOrder::LoopFirst).is_err());
    }

    #[test]
    fn stats_iid_bernoulli_two_actions() {
        let spec =
            InstanceSpec::new(InstanceKind::IidBernoulli { means: vec![0.3, 0.5], horizon: 10 }, 0);
        let s = instance_stats(&spec).unwrap();
        assert_eq!(s.best_action, 0);
        assert!(close(s.means[0], 0.3, 1e-15));
        assert!(close(s.gap, 0.2, 1e-15));
        // P(losses differ) = 0.3*0.5 + 0.7*0.5
        assert!(close(s.abs_gap, 0.5, 1e-15));
        assert!(close(s.expected_dynamic_min, 0.15, 1e-15));
        assert!(close(s.gaps[1], 0.2, 1e-15));
        assert!(close(s.abs_gaps[1], 0.5, 1e-15));
    }

    #[test]
    fn stats_identical_fair_coins() {
        let spec =
            InstanceSpec::new(InstanceKind::IidBernoulli { means: vec![0.5, 0.5], horizon: 10 }, 0);
        let s = instance_stats(&spec).unwrap();
        assert_eq!(s.best_action, 0);
        assert!(close(s.gap, 0.0, 1e-15));
        assert!(close(s.abs_gap, 0.5, 1e-15));
        assert!(close(s.gaps[1], 0.0, 1e-15));
        assert!(close(s.expected_dynamic_min, 0.25, 1e-15));
    }

    #[test]
    fn stats_lower_bound_closed_form() {
        let (q, eps) = (0.2, 0.05);
        for sign in [Sign::Plus, Sign::Minus] {
            let spec = InstanceSpec::new(
                InstanceKind::LowerBoundStochastic { sign, q, eps, horizon: 10 },
                0,
            );
            let s = instance_stats(&spec).unwrap();
            let best = if sign == Sign::Plus { 0 } else { 1 };
            assert_eq!(s.best_action, best);
            assert!(close(s.means[best], 0.5 + q - eps, 1e-15));
            assert!(close(s.means[1 - best], 0.5 + q + eps, 1e-15));
            // the per-step minimum is 1 only on the (1,1) outcome
            assert!(close(s.expected_dynamic_min, 0.5, 1e-15));
            assert!(close(s.gap, 2.0 * eps, 1e-15));
            assert!(close(s.abs_gap, 2.0 * q, 1e-15));
        }
    }

    #[test]
    fn stats_reject_non_analytic_and_large_n() {
        let fixed = InstanceSpec::new(InstanceKind::Fixed { matrix: vec![vec![0.0]] }, 0);
        assert_eq!(instance_stats(&fixed).unwrap_err(), InstanceError::NoAnalyticLaw);
        let big =
            InstanceSpec::new(InstanceKind::IidBernoulli { means: vec![0.5; 21], horizon: 1 }, 0);
        assert_eq!(instance_stats(&big).unwrap_err(), InstanceError::TooManyActions { n: 21 });
    }

    #[test]
    fn stats_three_actions_hand_check() {
        // means (0.2, 0.4, 0.9): best = 0
        let spec = InstanceSpec::new(
            InstanceKind::IidBernoulli { means: vec![0.2, 0.4, 0.9], horizon: 5 },
            0,
        );
        let s = instance_stats(&spec).unwrap();
        assert_eq!(s.best_action, 0);
        // Psi_1 = P(l1 != l0) = 0.2*0.6 + 0.8*0.4 = 0.44
        assert!(close(s.abs_gaps[1], 0.44, 1e-12));
        // E[min(l1, l2)] = P(both 1) = 0.36; Delta = 0.36 - 0.2
        assert!(close(s.gap, 0.16, 1e-12));
        // E[min over all] = 0.2*0.4*0.9
        assert!(close(s.expected_dynamic_min, 0.072, 1e-12));
    }

    #[test]
    fn rewrite_identity_links_dynamic_min_and_gaps() {
        // E[min_i l(i)] = (mean(i*) + E[min_{i != i*} l(i)] - Psi) / 2
        for seed in 0..50u64 {
            let mut rng = derive_rng(100 + seed, &[]);
            let n = 2 + (seed % 4) as usize;
            let means: Vec<f64> = (0..n).map(|_| unit(&mut rng)).collect();
            let spec = InstanceSpec::new(InstanceKind::IidBernoulli { means, horizon: 3 }, 0);
            let s = instance_stats(&spec).unwrap();
            let min_others = s.gap + s.means[s.best_action];
            let rhs = (s.means[s.best_action] + min_others - s.abs_gap) / 2.0;
            assert!(close(s.expected_dynamic_min, rhs, 1e-12));
        }
    }

    #[test]
    fn gap_ordering_invariant_on_random_specs() {
        // Psi_i - Delta_i <= Psi - Delta on 200 random Bernoulli products
        for seed in 0..200u64 {
            let mut rng = derive_rng(7000 + seed, &[]);
            let n = 2 + (rand::Rng::gen::<u64>(&mut rng) % 5) as usize;
            let means: Vec<f64> = (0..n).map(|_| unit(&mut rng)).collect();
            let spec = InstanceSpec::new(InstanceKind::IidBernoulli { means, horizon: 3 }, 0);
            let s = instance_stats(&spec).unwrap();
            for i in 0..n {
                assert!(s.gaps[i] >= -1e-15);
                assert!(s.abs_gaps[i] >= s.gaps[i] - 1e-12);
                assert!(
                    s.abs_gaps[i] - s.gaps[i] <= s.abs_gap - s.gap + 1e-12,
                    "action {i}: psi_i - delta_i = {} > {}",
                    s.abs_gaps[i] - s.gaps[i],
                    s.abs_gap - s.gap
                );
            }
        }
    }

    #[test]
    fn per_step_kl_bound_on_grid() {
        // exact two-term KL between the sign+ and sign- informative outcomes
        // stays below 5 eps^2 / q across the schedule's validity range
        let mut checked = 0;
        for &q in &[0.05, 0.1, 0.2, 0.25] {
            for j in 1..=20 {
                let eps = q / 5.0f64.sqrt() * (j as f64) / 21.0;
                let kl = (q + eps) * ((q + eps) / (q - eps)).ln()
                    + (q - eps) * ((q - eps) / (q + eps)).ln();
                assert!(kl <= 5.0 * eps * eps / q, "q={q} eps={eps}: {kl}");
                checked += 1;
            }
        }
        assert_eq!(checked, 80);
        // spot value
        let kl = 0.25f64 * (0.25f64 / 0.15).ln() + 0.15 * (0.15f64 / 0.25).ln();
        assert!(close(kl, 0.05108256237659907, 1e-15));
    }

    #[test]
    fn csv_export_layout() {
        let spec = InstanceSpec::new(
            InstanceKind::Fixed { matrix: vec![vec![0.0, 0.5], vec![1.0, 0.25]] },
            0,
        );
        let mut rng = derive_rng(0, &[]);
        let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,action,loss\n0,0,0\n0,1,1\n1,0,0.5\n1,1,0.25\n");
    }

    #[test]
    fn toml_round_trip_field_names() {
        let spec = InstanceSpec::new(
            InstanceKind::LowerBoundStochastic {
                sign: Sign::Minus,
                q: 0.25,
                eps: 0.01,
                horizon: 100,
            },
            42,
        );
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"lower_bound_stochastic\""), "{json}");
        assert!(json.contains("\"sign\":\"-\""));
        assert!(json.contains("\"T\":100"));
        assert!(json.contains("\"seed\":42"));
        let back: InstanceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn sampled_sequences_stay_in_unit_range(
            seed in 0u64..1000,
            q in 0.0f64..0.25,
            ratio in 0.0f64..1.0,
            horizon in 1usize..200,
        ) {
            let eps = q * ratio;
            let spec = InstanceSpec::new(
                InstanceKind::LowerBoundStochastic { sign: Sign::Plus, q, eps, horizon },
                0,
            );
            let mut rng = derive_rng(seed, &[9]);
            let seq = sample_loss_sequence(&spec, &mut rng).unwrap();
            for t in 0..horizon {
                for i in 0..2 {
                    prop_assert!((0.0..=1.0).contains(&seq.loss(t, i)));
                }
                prop_assert_eq!(seq.step_min(t), seq.loss(t, seq.step_best(t)));
            }
        }

        #[test]
        fn adversary_schedule_sums_to_plateau_length(
            horizon in 0usize..300,
            frac in 0.0f64..=1.0,
            loop_first in proptest::bool::ANY,
        ) {
            let mut plateau = (horizon as f64 * frac) as usize;
            if (horizon - plateau) % 2 == 1 {
                plateau += 1;
            }
            prop_assume!(plateau <= horizon);
            let order = if loop_first { PhaseOrder::LoopFirst } else { PhaseOrder::IncreaseFirst };
            let eps = looping_increasing_adversary(horizon, plateau, order).unwrap();
            prop_assert_eq!(eps.len(), horizon);
            prop_assert!(eps.iter().all(|&e| e == 1.0 || e == -1.0));
            let sum: f64 = eps.iter().sum();
            prop_assert!((sum - plateau as f64).abs() < 1e-9);
        }
    }
}
