//! Simulation library for online learning with a budget of best-action queries.
//!
//! A learner repeatedly picks one of `n` actions over `T` steps and suffers a
//! loss in `[0, 1]`. On at most `k` steps of its choice it may instead query an
//! oracle that reveals the identity of the step's best action and play it. The
//! library provides:
//!
//! - [`instances`]: loss-sequence generators — fixed matrices, a two-action
//!   stochastic family that is hard for query-budgeted learners, i.i.d.
//!   Bernoulli products, and two-expert gap sequences — plus exact
//!   closed-form statistics for the analytic families.
//! - [`learners`]: the query-budgeted algorithms behind one interface —
//!   Hedge with uniform queries (full feedback), two label-efficient Hedge
//!   variants (Bernoulli-scheduled and uniform-subset), and
//!   explore-then-commit / follow-the-leader with query warm starts.
//! - [`oracles`]: sampling-free reference computations — a closed-form
//!   two-expert regret expression with an independent exact recursion to
//!   cross-check it, and evaluators for the regret bounds of every
//!   algorithm along with the lower-bound thresholds.
//! - [`harness`]: a seeded, reproducible Monte Carlo engine that sweeps
//!   (learner × instance × query grid), aggregates regret statistics,
//!   checks theorem bounds, and fits regret-vs-budget scaling exponents.
//!
//! Everything stochastic takes an explicit counter-based RNG derived from a
//! 64-bit master seed (see [`rng`]), so identical seeds give bit-identical
//! results across runs and platforms.
//!
//! References: Cesa-Bianchi & Lugosi, "Prediction, Learning, and Games"
//! (2006); Lattimore & Szepesvári, "Bandit Algorithms" (2020).

pub mod harness;
pub mod instances;
pub mod learners;
pub mod oracles;
pub mod rng;

pub use harness::{Benchmark, ExperimentPlan, RegretReport, RegretRow};
pub use instances::{InstanceKind, InstanceSpec, InstanceStats, LossSequence, Sign};
pub use learners::{Algorithm, HedgeState, LearnerConfig, Trajectory};
pub use oracles::{BoundSpec, BoundValue, TheoremId};
