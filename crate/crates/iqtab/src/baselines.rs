//! Comparison methods: behavioral cloning, indicator-reward soft Q
//! (SQIL-style), and classical maximum-entropy IRL.
//!
//! All three are exact-dynamics idealizations — no replay buffers or
//! sampling — so differences against the imitation objective in
//! [`crate::iq`] isolate what the methods *compute*, not how noisily they
//! estimate it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::mdp::{
    compute_occupancy, DemoDataset, OccupancyTable, PolicyTable, RngSeed, TabularMdp,
};
use crate::soft::{
    soft_policy, soft_q_iteration_with_stats, QTable, RewardTable, DEFAULT_SOLVER_MAX_ITERS,
    DEFAULT_SOLVER_TOL,
};
use crate::{Error, Result};

/// Behavioral cloning on a tabular MDP: per-state action frequencies with a
/// Laplace pseudo-count.
///
/// `π(a|s) = (count(s,a) + smoothing) / (count(s) + smoothing·|A|)`;
/// states never visited in the demonstrations fall back to the uniform row
/// (the `smoothing → 0⁺` limit), so the table is always a valid policy.
pub fn bc_tabular(demos: &DemoDataset, mdp: &TabularMdp, smoothing: f64) -> Result<PolicyTable> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if smoothing < 0.0 || !smoothing.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be a finite nonnegative pseudo-count, got {smoothing}"
        )));
    }
    demos.validate(mdp)?;
    let mut counts = vec![vec![0.0_f64; mdp.n_actions]; mdp.n_states];
    for d in &demos.transitions {
        counts[d.s][d.a] += 1.0;
    }
    let rows = counts
        .into_iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                vec![1.0 / mdp.n_actions as f64; mdp.n_actions]
            } else {
                let denom = total + smoothing * mdp.n_actions as f64;
                row.into_iter().map(|c| (c + smoothing) / denom).collect()
            }
        })
        .collect();
    PolicyTable::new(rows)
}

/// The 0/1 indicator reward on demonstrated pairs: `r(s,a) = 1` iff `(s,a)`
/// appears in `demos`.
pub fn indicator_reward(demos: &DemoDataset, mdp: &TabularMdp) -> Result<RewardTable> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    demos.validate(mdp)?;
    let mut r = RewardTable::zeros(mdp.n_states, mdp.n_actions);
    for d in &demos.transitions {
        r.set(d.s, d.a, 1.0);
    }
    Ok(r)
}

/// Soft Q-iteration under the demonstration indicator reward — the
/// exact-dynamics form of imitating by "reward 1 on expert pairs, 0
/// elsewhere". Identical to [`soft_q_iteration`](crate::soft::soft_q_iteration)
/// on [`indicator_reward`] by construction.
pub fn sqil_tabular(
    mdp: &TabularMdp,
    demos: &DemoDataset,
    temperature: f64,
    tol: f64,
    max_iters: usize,
) -> Result<QTable> {
    let reward = indicator_reward(demos, mdp)?;
    soft_q_iteration_with_stats(mdp, &reward, temperature, tol, max_iters).map(|(q, _)| q)
}

/// Settings for [`maxent_irl`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxEntIrlConfig {
    pub learning_rate: f64,
    pub max_outer_iters: usize,
    /// Tolerance of the inner soft value iteration (the backward pass).
    pub inner_tol: f64,
    /// Outer convergence: stop when the sup-norm of the marginal gap
    /// (expert minus policy state visitation) falls below this.
    pub grad_tol: f64,
    /// A returned iterate only counts as converged if its induced state
    /// marginal is within this TV distance of the expert's.
    pub occupancy_tol: f64,
    /// Laplace pseudo-count mixed into the expert state marginal.
    pub smoothing: f64,
    pub temperature: f64,
    /// Unused by this deterministic exact-expectation implementation; kept
    /// so stochastic-estimate variants share the config shape.
    pub seed: RngSeed,
    /// Learn a reward per state-action pair instead of per state.
    pub state_action_features: bool,
}

impl Default for MaxEntIrlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_outer_iters: 2_000,
            inner_tol: DEFAULT_SOLVER_TOL,
            grad_tol: 1e-6,
            occupancy_tol: 0.02,
            smoothing: 0.0,
            temperature: 1.0,
            seed: RngSeed(0),
            state_action_features: false,
        }
    }
}

impl MaxEntIrlConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("inner_tol", self.inner_tol),
            ("grad_tol", self.grad_tol),
            ("occupancy_tol", self.occupancy_tol),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.smoothing < 0.0 || !self.smoothing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "smoothing must be nonnegative, got {}",
                self.smoothing
            )));
        }
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

/// What [`maxent_irl`] produced, with the instrumentation the cost
/// comparisons need.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxEntIrlResult {
    /// Learned reward broadcast to state-action shape (rows are constant
    /// unless `state_action_features` was set).
    pub reward_sa: RewardTable,
    /// Per-state view of the learned reward (under the final policy when
    /// the reward is state-action).
    pub state_reward: Vec<f64>,
    /// Soft-optimal policy under the returned reward.
    pub policy: PolicyTable,
    /// TV distance between that policy's state marginal and the
    /// (smoothed) expert target.
    pub occupancy_tv: f64,
    /// Sup-norm of the marginal gap per outer iteration.
    pub grad_norm_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// One backward (soft VI) and one forward (visitation) pass per outer
    /// iteration, plus the final evaluation pass.
    pub backward_passes: usize,
    pub forward_passes: usize,
    /// Total Bellman sweeps across all backward passes.
    pub inner_sweeps: usize,
    pub wall_clock_seconds: f64,
}

fn broadcast_state_reward(r: &[f64], n_actions: usize) -> RewardTable {
    let mut table = RewardTable::zeros(r.len(), n_actions);
    for (s, &v) in r.iter().enumerate() {
        for a in 0..n_actions {
            table.set(s, a, v);
        }
    }
    table
}

/// Classical maximum-entropy IRL by alternating passes: a backward soft
/// value iteration under the current reward, a forward exact visitation
/// computation of the induced policy, then the ascent step
/// `r ← r + lr·(expert − policy)` on the matched marginals.
///
/// Running out of outer iterations is not an error: the best iterate seen
/// (smallest marginal gap) is returned with `converged = false`.
pub fn maxent_irl(
    mdp: &TabularMdp,
    expert_occ: &OccupancyTable,
    cfg: &MaxEntIrlConfig,
) -> Result<MaxEntIrlResult> {
    cfg.validate()?;
    if expert_occ.n_states() != mdp.n_states || expert_occ.n_actions() != mdp.n_actions {
        return Err(Error::ShapeMismatch(format!(
            "occupancy is {}x{}, MDP is {}x{}",
            expert_occ.n_states(),
            expert_occ.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    let start = Instant::now();
    let tau = cfg.temperature;

    // Expert targets, optionally smoothed toward uniform.
    let smooth = |raw: Vec<f64>| -> Vec<f64> {
        if cfg.smoothing == 0.0 {
            return raw;
        }
        let total: f64 = raw.iter().map(|v| v + cfg.smoothing).sum();
        raw.iter().map(|v| (v + cfg.smoothing) / total).collect()
    };
    let target_state = smooth(expert_occ.state_marginal());
    let target_sa: Vec<Vec<f64>> = if cfg.state_action_features {
        let flat: Vec<f64> = expert_occ.rows().iter().flatten().copied().collect();
        let sm = smooth(flat);
        sm.chunks(mdp.n_actions).map(|c| c.to_vec()).collect()
    } else {
        Vec::new()
    };

    let n_params = if cfg.state_action_features {
        mdp.n_states * mdp.n_actions
    } else {
        mdp.n_states
    };
    let mut params = vec![0.0_f64; n_params];
    let mut best_params = params.clone();
    let mut best_gap = f64::INFINITY;
    let mut grad_norm_trace = Vec::new();
    let mut inner_sweeps = 0;
    let mut outer = 0;
    let mut grad_converged = false;

    let reward_of = |params: &[f64]| -> RewardTable {
        if cfg.state_action_features {
            let rows = params.chunks(mdp.n_actions).map(|c| c.to_vec()).collect();
            RewardTable::new(rows).expect("parameter vector has table shape")
        } else {
            broadcast_state_reward(params, mdp.n_actions)
        }
    };

    while outer < cfg.max_outer_iters {
        // Backward pass: soft-optimal Q under the current reward.
        let reward = reward_of(&params);
        let (q, sweeps) =
            soft_q_iteration_with_stats(mdp, &reward, tau, cfg.inner_tol, DEFAULT_SOLVER_MAX_ITERS)?;
        inner_sweeps += sweeps;
        // Forward pass: exact visitation of the induced policy.
        let policy = soft_policy(&q, tau)?;
        let occ = compute_occupancy(mdp, &policy)?;
        // Ascent on the marginal gap.
        let grad: Vec<f64> = if cfg.state_action_features {
            let mut g = Vec::with_capacity(n_params);
            for s in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    g.push(target_sa[s][a] - occ.mass(s, a));
                }
            }
            g
        } else {
            let marginal = occ.state_marginal();
            target_state
                .iter()
                .zip(&marginal)
                .map(|(t, m)| t - m)
                .collect()
        };
        let gap = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        grad_norm_trace.push(gap);
        outer += 1;
        if gap < best_gap {
            best_gap = gap;
            best_params = params.clone();
        }
        if gap <= cfg.grad_tol {
            grad_converged = true;
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p += cfg.learning_rate * g;
        }
    }

    // Final evaluation pass for the returned (best) iterate.
    let reward_sa = reward_of(&best_params);
    let (q, sweeps) =
        soft_q_iteration_with_stats(mdp, &reward_sa, tau, cfg.inner_tol, DEFAULT_SOLVER_MAX_ITERS)?;
    inner_sweeps += sweeps;
    let policy = soft_policy(&q, tau)?;
    let occ = compute_occupancy(mdp, &policy)?;
    let marginal = occ.state_marginal();
    let occupancy_tv = 0.5
        * target_state
            .iter()
            .zip(&marginal)
            .map(|(t, m)| (t - m).abs())
            .sum::<f64>();
    let state_reward = if cfg.state_action_features {
        crate::eval::expected_state_reward(&reward_sa, &policy)?
    } else {
        best_params
    };

    Ok(MaxEntIrlResult {
        reward_sa,
        state_reward,
        policy,
        occupancy_tv,
        grad_norm_trace,
        outer_iterations: outer,
        converged: grad_converged && occupancy_tv <= cfg.occupancy_tol,
        backward_passes: outer + 1,
        forward_passes: outer + 1,
        inner_sweeps,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
