//! On-disk run artifacts: the trained model, the metrics report, CSV
//! reward exports, and the comparison report.
//!
//! Everything here serializes deterministically (fixed field order,
//! shortest-round-trip float formatting), so reruns under the same seed
//! reproduce files byte for byte — wall-clock fields are the one
//! documented exception. CSV output uses `.` as the decimal separator and
//! `\n` line endings on every platform.

use serde::{Deserialize, Serialize};

use iqtab::envs::GridLayout;
use iqtab::mdp::PolicyTable;
use iqtab::soft::{QTable, RewardTable};

/// `result.json`: the trained model plus its optimization record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedArtifact {
    /// One of `iq`, `bc`, `sqil`, `maxent_irl`.
    pub method: String,
    pub seed: u64,
    /// Discount the model was trained under (differs from the
    /// environment's when the method overrode it); recovered
    /// per-transition rewards invert the soft Bellman map at this value.
    pub gamma: f64,
    /// Softmax temperature of the trained Q-function; absent when the
    /// method carries no Q.
    pub temperature: Option<f64>,
    pub q: Option<QTable>,
    pub policy: PolicyTable,
    pub reward_sa: Option<RewardTable>,
    pub iterations: usize,
    pub converged: bool,
    /// Training time; exempt from byte-for-byte determinism.
    pub wall_clock_seconds: f64,
    pub objective_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
}

/// `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean undiscounted return over the seeded evaluation rollouts.
    pub mean_return: f64,
    /// Population standard deviation of those returns.
    pub std_return: f64,
    /// Pearson correlation between recovered and true rewards along the
    /// same rollouts; `null` when the method recovers no reward or when
    /// the correlation is undefined (a constant series).
    pub pearson_reward_correlation: Option<f64>,
    /// TV distance between the trained stochastic policy's exact
    /// occupancy and the empirical occupancy of the training demos;
    /// `null` when no demos were involved.
    pub occupancy_tv_to_expert: Option<f64>,
    /// Training time for `train`/`compare`, evaluation time for `eval`;
    /// exempt from byte-for-byte determinism.
    pub wall_clock_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `compare.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub methods: Vec<CompareEntry>,
    pub reward_agreement: Vec<PairCorrelation>,
    pub wall_clock: Vec<PairRatio>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareEntry {
    pub name: String,
    pub metrics: MetricsReport,
}

/// Pearson correlation between two methods' recovered state rewards
/// (state-action rewards averaged under each method's own policy);
/// `null` when either method recovers no reward.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: String,
    pub b: String,
    pub state_reward_pearson: Option<f64>,
}

/// Training wall-clock of `a` over `b`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRatio {
    pub a: String,
    pub b: String,
    pub ratio: f64,
}

/// Headerless numeric CSV: one row per state, one column per action.
pub fn reward_csv(reward: &RewardTable) -> String {
    let mut out = String::new();
    for s in 0..reward.n_states() {
        let row: Vec<String> = (0..reward.n_actions())
            .map(|a| reward.get(s, a).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `height x width` CSV of per-state values mapped onto grid cells,
/// `nan` at obstacle cells — plot-ready as a heatmap.
pub fn grid_csv(state_values: &[f64], layout: &GridLayout, width: usize, height: usize) -> String {
    let mut out = String::new();
    for y in 0..height {
        let row: Vec<String> = (0..width)
            .map(|x| match layout.state_of(x, y) {
                Some(s) => state_values[s].to_string(),
                None => "nan".to_string(),
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
