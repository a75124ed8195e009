//! Experiment driver behind the `iqtab` binary.
//!
//! Everything the binary does lives here so the config schema, artifact
//! shapes, and command implementations are testable as a library:
//!
//! * [`config`] — the experiment file (`.toml` or `.json`): environment,
//!   demonstrations, method, evaluation, and comparison tables;
//! * [`artifact`] — what runs write to disk: the trained model
//!   (`result.json`), the metrics report (`metrics.json`), CSV reward
//!   exports, and the comparison report (`compare.json`);
//! * [`rollout`] — seeded evaluation rollouts that record transitions,
//!   parallel over episodes with per-episode RNG streams so the worker
//!   count (`IQTAB_THREADS`) changes speed, never numbers;
//! * [`commands`] — `gen-demos`, `train`, `eval`, and `compare`.
//!
//! Every command is deterministic under a fixed seed: rerunning a config
//! reproduces each artifact byte for byte, except measured wall-clock
//! fields. Output files are written atomically, so a crashed run never
//! leaves a truncated artifact behind.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod rollout;
