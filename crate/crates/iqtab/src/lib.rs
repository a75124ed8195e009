//! Exact imitation learning on finite MDPs.
//!
//! This crate recovers a soft Q-function, its induced policy, and a reward
//! table from expert demonstrations by maximizing a single concave objective
//! over Q. Everything is tabular and exact: occupancy measures come from
//! linear solves, Bellman operators use full transition expectations, and
//! gradients are analytic. That makes the library small enough to verify
//! against closed forms and brute-force oracles, which the test suite does.
//!
//! The pieces fit together like this:
//!
//! | module         | provides                                                        |
//! |----------------|-----------------------------------------------------------------|
//! | [`mdp`]        | `TabularMdp`, occupancy measures, trajectory sampling, datasets |
//! | [`soft`]       | soft value/policy, soft Bellman operators and their inverses    |
//! | [`divergence`] | the φ registry: per-divergence concave weights and estimators   |
//! | [`iq`]         | the imitation objective, analytic gradients, training loops     |
//! | [`baselines`]  | behavioral cloning, constant-reward soft-Q, max-entropy IRL     |
//! | [`envs`]       | grid world, three-state loop task, seeded random MDPs           |
//! | [`eval`]       | seeded rollouts, returns, correlation and occupancy metrics     |
//! | [`io`]         | JSON MDP files and JSONL demonstration files                    |
//!
//! A rendered guide with worked examples lives in `book/`; its code samples
//! are compiled as doc-tests through the [`guide`] module.
//!
//! # Conventions
//!
//! Occupancy measures are normalized: `μ(s,a) = (1−γ) Σ_t γ^t P(s_t=s, a_t=a)`
//! sums to one and is a plain distribution over state-action pairs. Soft
//! values use a temperature `τ > 0` throughout, with `V*(s) =
//! τ·logsumexp(Q(s,·)/τ)` and `π(a|s) = softmax(Q(s,·)/τ)`. Tables are dense
//! `Vec` matrices indexed `[state][action]`.
//!
//! Randomness is always explicit: every sampling function takes an
//! [`mdp::RngSeed`] and is a pure function of its arguments. Rollout
//! evaluation parallelizes across a worker pool (`IQTAB_THREADS` caps it)
//! without changing results, because each rollout derives its own stream
//! from the seed and its index.

// The numeric kernels index several tables by the same `(s, a)` pair to
// mirror the Σ_{s,a} notation they implement; iterator/enumerate rewrites
// obscure which axis is which.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod divergence;
pub mod envs;
pub mod eval;
pub mod guide;
pub mod io;
pub mod iq;
pub mod mdp;
pub mod soft;

/// Everything that can go wrong in this crate.
///
/// Numerical routines return `Err` rather than panicking for conditions a
/// caller can plausibly hit with valid-looking inputs (non-convergence,
/// empty datasets, rejection-sampling exhaustion). Shape mismatches between
/// tables that the caller constructed are treated the same way so the CLI
/// can surface them as ordinary errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("discount factor must lie in [0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("iteration limit {max_iters} reached, residual {residual:e} above tolerance {tol:e}")]
    MaxItersExceeded {
        max_iters: usize,
        residual: f64,
        tol: f64,
    },
    #[error("rejection sampling exhausted {attempts} attempts for episode {episode}")]
    RejectionCapExceeded { episode: usize, attempts: usize },
    #[error("demonstration dataset is empty")]
    EmptyDataset,
    #[error("reward argument {value} outside divergence domain [{lo}, {hi}]")]
    DomainViolation { value: f64, lo: f64, hi: f64 },
    #[error("divergence has no closed-form reward estimator")]
    EstimatorUndefined,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("environment geometry is invalid: {0}")]
    InvalidGeometry(String),
    #[error("MDP has no true reward table, required for {0}")]
    MissingTrueReward(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
