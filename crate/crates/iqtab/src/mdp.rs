//! Finite MDPs, exact occupancy measures, and demonstration datasets.
//!
//! The central type is [`TabularMdp`]: dense transition tensor, initial state
//! distribution, discount, and an optional ground-truth reward used only for
//! evaluation. Occupancy measures are normalized to sum to one, so
//! `μ(s,a) = (1−γ)·Σ_t γ^t·P(s_t=s, a_t=a)` is an ordinary distribution over
//! state-action pairs and expectations under it need no extra `(1−γ)`
//! factors. [`compute_occupancy`] solves the flow equation exactly with a
//! dense linear solve; [`empirical_occupancy`] estimates the same object from
//! sampled episodes with discount weights.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for validating that probability rows sum to one.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Tolerance for validating that an occupancy sums to one.
pub const OCC_SUM_TOL: f64 = 1e-10;
/// Tolerance on the occupancy flow-equation residual.
pub const FLOW_RESIDUAL_TOL: f64 = 1e-10;
/// Rejection-sampling attempt cap per episode in [`sample_trajectories`].
pub const REJECTION_CAP: usize = 10_000;
/// Default bound on the discount mass a sampling horizon may discard:
/// `gamma^horizon` must stay below this unless the caller overrides.
pub const HORIZON_TAIL_TOL: f64 = 1e-4;

/// Seed for all sampling in this crate.
///
/// Identical seeds produce identical outputs for identical inputs. Derived
/// streams (one per episode or rollout) are obtained with [`RngSeed::stream`]
/// so that parallel evaluation is independent of worker scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// RNG seeded directly from this seed.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Deterministic sub-seed for the `index`-th independent stream.
    ///
    /// Uses a splitmix-style finalizer, so neighbouring indices give
    /// uncorrelated streams.
    pub fn stream(self, index: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
            .wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        RngSeed(z ^ (z >> 31))
    }
}

/// A stochastic policy as a dense `π[s][a]` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyTable {
    probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    /// Validates that every row is a probability distribution.
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() {
            return Err(Error::ShapeMismatch("policy must be non-empty".into()));
        }
        let n_actions = probs[0].len();
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "policy row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            validate_distribution(row, PROB_SUM_TOL)
                .map_err(|e| Error::InvalidDistribution(format!("policy row {s}: {e}")))?;
        }
        Ok(Self { probs })
    }

    /// Uniform policy over `n_actions` in each of `n_states` states.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            probs: vec![vec![p; n_actions]; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

/// A normalized discounted occupancy measure over `(s, a)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupancyTable {
    mu: Vec<Vec<f64>>,
}

impl OccupancyTable {
    /// Validates non-negativity and total mass 1 (within [`OCC_SUM_TOL`]).
    pub fn new(mu: Vec<Vec<f64>>) -> Result<Self> {
        if mu.is_empty() || mu[0].is_empty() {
            return Err(Error::ShapeMismatch("occupancy must be non-empty".into()));
        }
        let n_actions = mu[0].len();
        let mut total = 0.0;
        for (s, row) in mu.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "occupancy row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            for &m in row {
                if m < 0.0 || !m.is_finite() {
                    return Err(Error::InvalidDistribution(format!(
                        "occupancy entry {m} at state {s} is negative or non-finite"
                    )));
                }
                total += m;
            }
        }
        if (total - 1.0).abs() > OCC_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "occupancy sums to {total}, expected 1"
            )));
        }
        Ok(Self { mu })
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn n_actions(&self) -> usize {
        self.mu[0].len()
    }

    pub fn mass(&self, s: usize, a: usize) -> f64 {
        self.mu[s][a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.mu
    }

    /// Marginal distribution over states, `Σ_a μ(s,a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.mu.iter().map(|row| row.iter().sum()).collect()
    }

    /// Total-variation distance to another occupancy of the same shape.
    pub fn tv_distance(&self, other: &OccupancyTable) -> f64 {
        let mut acc = 0.0;
        for (ra, rb) in self.mu.iter().zip(other.mu.iter()) {
            for (a, b) in ra.iter().zip(rb.iter()) {
                acc += (a - b).abs();
            }
        }
        0.5 * acc
    }
}

/// One logged environment step.
///
/// `terminal` marks the last step of an episode; environments here have no
/// absorbing terminal semantics, so the flag only delimits episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTransition {
    pub episode: u64,
    pub t: u64,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub terminal: bool,
}

/// A demonstration dataset: a flat list of transitions grouped by episode id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemoDataset {
    pub transitions: Vec<DemoTransition>,
}

impl DemoDataset {
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    /// Number of distinct episode ids.
    pub fn n_episodes(&self) -> usize {
        let mut ids: Vec<u64> = self.transitions.iter().map(|d| d.episode).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Checks id bounds against the MDP and within-episode continuity
    /// (`s_next` of step `t` equals `s` of step `t+1`).
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        for d in &self.transitions {
            if d.s >= mdp.n_states || d.s_next >= mdp.n_states || d.a >= mdp.n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "transition ({}, {}, {}) out of bounds for {}x{} MDP",
                    d.s, d.a, d.s_next, mdp.n_states, mdp.n_actions
                )));
            }
        }
        for w in self.transitions.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if prev.episode == next.episode && next.t == prev.t + 1 && prev.s_next != next.s {
                return Err(Error::InvalidArgument(format!(
                    "episode {} breaks continuity at step {}: s_next {} then s {}",
                    prev.episode, prev.t, prev.s_next, next.s
                )));
            }
        }
        Ok(())
    }
}

/// A finite MDP with dense dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s_next]`, each row a distribution over next states.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Initial state distribution.
    pub p0: Vec<f64>,
    /// Discount in `[0, 1)`.
    pub gamma: f64,
    /// Ground-truth reward, carried for evaluation only; learners never read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_reward: Option<Vec<Vec<f64>>>,
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        p0: Vec<f64>,
        gamma: f64,
        true_reward: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 || transition[0].is_empty() {
            return Err(Error::ShapeMismatch("transition tensor is empty".into()));
        }
        let n_actions = transition[0].len();
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            p0,
            gamma,
            true_reward,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Revalidates all structural invariants. Cheap; used after deserializing.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidDiscount(self.gamma));
        }
        if self.transition.len() != self.n_states {
            return Err(Error::ShapeMismatch(format!(
                "transition has {} states, header says {}",
                self.transition.len(),
                self.n_states
            )));
        }
        for (s, per_action) in self.transition.iter().enumerate() {
            if per_action.len() != self.n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "state {s} has {} action rows, expected {}",
                    per_action.len(),
                    self.n_actions
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != self.n_states {
                    return Err(Error::ShapeMismatch(format!(
                        "transition row ({s},{a}) has length {}, expected {}",
                        row.len(),
                        self.n_states
                    )));
                }
                validate_distribution(row, PROB_SUM_TOL).map_err(|e| {
                    Error::InvalidDistribution(format!("transition row ({s},{a}): {e}"))
                })?;
            }
        }
        if self.p0.len() != self.n_states {
            return Err(Error::ShapeMismatch(format!(
                "p0 has length {}, expected {}",
                self.p0.len(),
                self.n_states
            )));
        }
        validate_distribution(&self.p0, PROB_SUM_TOL)
            .map_err(|e| Error::InvalidDistribution(format!("p0: {e}")))?;
        if let Some(r) = &self.true_reward {
            if r.len() != self.n_states || r.iter().any(|row| row.len() != self.n_actions) {
                return Err(Error::ShapeMismatch("true_reward shape mismatch".into()));
            }
        }
        Ok(())
    }

    /// Same MDP with a different discount; used for discount ablations.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut m = self.clone();
        m.gamma = gamma;
        m.validate()?;
        Ok(m)
    }

    /// `Σ_{s′} P(s′|s,a)·v[s′]`.
    pub fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition[s][a]
            .iter()
            .zip(v.iter())
            .map(|(p, x)| p * x)
            .sum()
    }

    /// Ground-truth reward entry; errors if the MDP carries none.
    pub fn true_reward_at(&self, s: usize, a: usize) -> Result<f64> {
        self.true_reward
            .as_ref()
            .map(|r| r[s][a])
            .ok_or(Error::MissingTrueReward("reward lookup"))
    }

    /// Checks that the policy shape matches this MDP.
    pub fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::ShapeMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

fn validate_distribution(row: &[f64], tol: f64) -> std::result::Result<(), String> {
    let mut total = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(format!("entry {p} is negative or non-finite"));
        }
        total += p;
    }
    if (total - 1.0).abs() > tol {
        return Err(format!("sums to {total}, expected 1 within {tol:e}"));
    }
    Ok(())
}

/// Whether `horizon` keeps the discarded discount tail below
/// [`HORIZON_TAIL_TOL`], i.e. `gamma^horizon < 1e-4`.
///
/// Fixed-horizon sampling approximates infinite-horizon occupancy; callers
/// that knowingly use a short horizon (fixed-length benchmark episodes) may
/// skip this check.
pub fn horizon_covers_discount(gamma: f64, horizon: usize) -> bool {
    gamma.powi(horizon as i32) < HORIZON_TAIL_TOL
}

/// Exact normalized discounted occupancy of `policy` in `mdp`.
///
/// Solves the state-marginal flow system
/// `d(s) = (1−γ)·p0(s) + γ·Σ_{s̄,ā} d(s̄)·π(ā|s̄)·P(s|s̄,ā)`
/// by dense LU (size `|S|`), then sets `μ(s,a) = d(s)·π(a|s)`. The system
/// matrix `I − γ·Mᵀ` is nonsingular for `γ < 1` since `M` is row-stochastic.
pub fn compute_occupancy(mdp: &TabularMdp, policy: &PolicyTable) -> Result<OccupancyTable> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let gamma = mdp.gamma;

    // M[i][j] = P(next = j | state = i, a ~ π): the policy-averaged kernel.
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for a in 0..mdp.n_actions {
            let pa = policy.prob(i, a);
            if pa == 0.0 {
                continue;
            }
            for j in 0..n {
                m[(i, j)] += pa * mdp.transition[i][a][j];
            }
        }
    }

    let mut system = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            system[(i, j)] -= gamma * m[(j, i)];
        }
    }
    let rhs = DVector::from_iterator(n, mdp.p0.iter().map(|p| (1.0 - gamma) * p));
    let d = system
        .clone()
        .lu()
        .solve(&rhs)
        .expect("I - gamma*M^T is nonsingular for gamma < 1");

    // Flow residual check; failure here means the solve lost precision.
    let mut max_resid: f64 = 0.0;
    for i in 0..n {
        let mut flow = (1.0 - gamma) * mdp.p0[i];
        for j in 0..n {
            flow += gamma * m[(j, i)] * d[j];
        }
        max_resid = max_resid.max((flow - d[i]).abs());
    }
    assert!(
        max_resid <= FLOW_RESIDUAL_TOL,
        "occupancy flow residual {max_resid:e} above {FLOW_RESIDUAL_TOL:e}"
    );

    let mut mu = vec![vec![0.0; mdp.n_actions]; n];
    for s in 0..n {
        // LU can leave tiny negative round-off on unreachable states.
        let ds = d[s].max(0.0);
        for a in 0..mdp.n_actions {
            mu[s][a] = ds * policy.prob(s, a);
        }
    }
    normalize_in_place(&mut mu);
    OccupancyTable::new(mu)
}

/// Marginal over states of an occupancy, `Σ_a μ(s,a)`.
pub fn state_marginal(occ: &OccupancyTable) -> Vec<f64> {
    occ.state_marginal()
}

/// Samples `n_episodes` fixed-length episodes of `policy` in `mdp`.
///
/// With an `accept` set, each episode is rejection-sampled until every
/// visited state (including the final next state) is in the set, giving
/// filtered demonstrations; at most [`REJECTION_CAP`] attempts per episode.
/// Output is a pure function of the arguments.
pub fn sample_trajectories(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    n_episodes: usize,
    horizon: usize,
    seed: RngSeed,
    accept: Option<&HashSet<usize>>,
) -> Result<DemoDataset> {
    mdp.check_policy(policy)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if let Some(set) = accept {
        if !mdp.p0.iter().enumerate().any(|(s, &p)| p > 0.0 && set.contains(&s)) {
            return Err(Error::InvalidArgument(
                "accept set excludes every possible start state".into(),
            ));
        }
    }

    let mut transitions = Vec::with_capacity(n_episodes * horizon);
    for episode in 0..n_episodes {
        let mut rng = seed.stream(episode as u64).rng();
        let mut accepted = false;
        for _attempt in 0..REJECTION_CAP {
            let mut steps = Vec::with_capacity(horizon);
            let mut s = sample_index(&mut rng, &mdp.p0);
            let mut ok = accept.is_none_or(|set| set.contains(&s));
            if ok {
                for t in 0..horizon {
                    let a = sample_index(&mut rng, policy.row(s));
                    let s_next = sample_index(&mut rng, &mdp.transition[s][a]);
                    steps.push(DemoTransition {
                        episode: episode as u64,
                        t: t as u64,
                        s,
                        a,
                        s_next,
                        terminal: t + 1 == horizon,
                    });
                    if let Some(set) = accept {
                        if !set.contains(&s_next) {
                            ok = false;
                            break;
                        }
                    }
                    s = s_next;
                }
            }
            if ok {
                transitions.extend(steps);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::RejectionCapExceeded {
                episode,
                attempts: REJECTION_CAP,
            });
        }
    }
    Ok(DemoDataset { transitions })
}

/// How [`empirical_occupancy_weighted`] weights step `t` of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyWeighting {
    /// `γ^t` weights: matches the discounted stationary definition.
    Discounted,
    /// Equal weights; an ablation, not the default.
    Uniform,
}

/// Discount-weighted empirical occupancy `μ̂(s,a) ∝ Σ_episodes Σ_t γ^t·1[(s_t,a_t)=(s,a)]`.
pub fn empirical_occupancy(demos: &DemoDataset, mdp: &TabularMdp) -> Result<OccupancyTable> {
    empirical_occupancy_weighted(demos, mdp, OccupancyWeighting::Discounted)
}

/// Empirical occupancy with an explicit step-weighting choice.
pub fn empirical_occupancy_weighted(
    demos: &DemoDataset,
    mdp: &TabularMdp,
    weighting: OccupancyWeighting,
) -> Result<OccupancyTable> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    demos.validate(mdp)?;
    let mut mu = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    for d in &demos.transitions {
        let w = match weighting {
            OccupancyWeighting::Discounted => mdp.gamma.powi(d.t as i32),
            OccupancyWeighting::Uniform => 1.0,
        };
        mu[d.s][d.a] += w;
    }
    normalize_in_place(&mut mu);
    OccupancyTable::new(mu)
}

/// Discounted causal entropy of `policy`, `Σ_{s,a} μ(s,a)·(−log π(a|s)) / (1−γ)`.
///
/// `0·log 0` counts as 0, so deterministic policies are fine.
pub fn policy_entropy(mdp: &TabularMdp, policy: &PolicyTable) -> Result<f64> {
    let occ = compute_occupancy(mdp, policy)?;
    let mut h = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let m = occ.mass(s, a);
            if m > 0.0 {
                h -= m * policy.prob(s, a).ln();
            }
        }
    }
    Ok(h / (1.0 - mdp.gamma))
}

/// Inverse-CDF sample from a distribution slice with a single uniform draw.
pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off can leave acc slightly below 1; fall back to the last
    // positive-probability entry.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("distribution has positive mass")
}

fn normalize_in_place(mu: &mut [Vec<f64>]) {
    let total: f64 = mu.iter().map(|row| row.iter().sum::<f64>()).sum();
    if total > 0.0 {
        for row in mu.iter_mut() {
            for m in row.iter_mut() {
                *m /= total;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_random_mdp;
    use approx::assert_abs_diff_eq;

    fn single_state_mdp(n_actions: usize, gamma: f64) -> TabularMdp {
        let transition = vec![vec![vec![1.0]; n_actions]];
        TabularMdp::new(transition, vec![1.0], gamma, None).unwrap()
    }

    /// Two states, one action, s0 -> s1 -> s1.
    fn chain_mdp(gamma: f64) -> TabularMdp {
        let transition = vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]];
        TabularMdp::new(transition, vec![1.0, 0.0], gamma, None).unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let transition = vec![vec![vec![0.6, 0.3]], vec![vec![0.5, 0.5]]];
        let err = TabularMdp::new(transition, vec![1.0, 0.0], 0.9, None).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution(_)));

        let err = TabularMdp::new(
            vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5]]],
            vec![1.0, 0.0],
            1.0,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDiscount(_)));
    }

    #[test]
    fn occupancy_single_state_equals_policy_row() {
        let mdp = single_state_mdp(3, 0.7);
        let policy = PolicyTable::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let occ = compute_occupancy(&mdp, &policy).unwrap();
        for a in 0..3 {
            assert_abs_diff_eq!(occ.mass(0, a), policy.prob(0, a), epsilon = 1e-14);
        }
    }

    #[test]
    fn occupancy_chain_state_marginal_is_half_half() {
        // s0 only at t=0: d(s0) = 1-gamma = 0.5; the rest of the geometric
        // series sits at s1.
        let mdp = chain_mdp(0.5);
        let policy = PolicyTable::uniform(2, 1);
        let occ = compute_occupancy(&mdp, &policy).unwrap();
        let d = occ.state_marginal();
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-12);
    }

    /// Truncated rollout-distribution oracle: propagate the state-action
    /// distribution forward 200 steps and accumulate (1-gamma)*gamma^t
    /// weights directly.
    fn truncated_occupancy(mdp: &TabularMdp, policy: &PolicyTable, steps: usize) -> Vec<Vec<f64>> {
        let mut dist: Vec<f64> = mdp.p0.clone();
        let mut mu = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
        let mut weight = 1.0 - mdp.gamma;
        for _ in 0..=steps {
            for s in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    mu[s][a] += weight * dist[s] * policy.prob(s, a);
                }
            }
            let mut next = vec![0.0; mdp.n_states];
            for s in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    let w = dist[s] * policy.prob(s, a);
                    if w == 0.0 {
                        continue;
                    }
                    for s2 in 0..mdp.n_states {
                        next[s2] += w * mdp.transition[s][a][s2];
                    }
                }
            }
            dist = next;
            weight *= mdp.gamma;
        }
        mu
    }

    #[test]
    fn occupancy_matches_truncated_power_iteration() {
        let mdp = make_random_mdp(6, 3, 0.9, RngSeed(7), 1.0);
        let mut rng = RngSeed(8).rng();
        let mut rows = Vec::new();
        for _ in 0..6 {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / total).collect());
        }
        let policy = PolicyTable::new(rows).unwrap();
        let exact = compute_occupancy(&mdp, &policy).unwrap();
        let truncated = truncated_occupancy(&mdp, &policy, 200);
        for s in 0..6 {
            for a in 0..3 {
                assert_abs_diff_eq!(exact.mass(s, a), truncated[s][a], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn flow_equation_residual_on_random_mdps() {
        for trial in 0..100 {
            let seed = RngSeed(1000 + trial);
            let gamma = 0.3 + 0.6 * (trial as f64 / 100.0);
            let mdp = make_random_mdp(5, 3, gamma, seed, 1.0);
            let mut rng = seed.stream(1).rng();
            let mut rows = Vec::new();
            for _ in 0..5 {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() + 0.01).collect();
                let total: f64 = raw.iter().sum();
                rows.push(raw.into_iter().map(|x| x / total).collect());
            }
            let policy = PolicyTable::new(rows).unwrap();
            let occ = compute_occupancy(&mdp, &policy).unwrap();
            // Residual of the full (s,a)-level flow equation.
            let mut max_resid: f64 = 0.0;
            for s in 0..5 {
                for a in 0..3 {
                    let mut inflow = 0.0;
                    for sb in 0..5 {
                        for ab in 0..3 {
                            inflow += occ.mass(sb, ab) * mdp.transition[sb][ab][s];
                        }
                    }
                    let rhs = (1.0 - gamma) * mdp.p0[s] * policy.prob(s, a)
                        + gamma * policy.prob(s, a) * inflow;
                    max_resid = max_resid.max((occ.mass(s, a) - rhs).abs());
                }
            }
            assert!(max_resid <= FLOW_RESIDUAL_TOL, "residual {max_resid:e}");
        }
    }

    #[test]
    fn state_marginal_examples() {
        let occ = OccupancyTable::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert_eq!(state_marginal(&occ), vec![0.5, 0.5]);

        let occ = OccupancyTable::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(state_marginal(&occ), vec![0.0, 1.0]);

        let occ = OccupancyTable::new(vec![vec![0.1, 0.3], vec![0.4, 0.2]]).unwrap();
        let d = state_marginal(&occ);
        assert_abs_diff_eq!(d[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn sampling_deterministic_mdp_repeats_unique_trajectory() {
        let mdp = chain_mdp(0.9);
        let policy = PolicyTable::uniform(2, 1);
        let demos = sample_trajectories(&mdp, &policy, 3, 4, RngSeed(0), None).unwrap();
        assert_eq!(demos.len(), 12);
        for d in &demos.transitions {
            assert_eq!(d.s_next, 1);
            assert_eq!(d.s, if d.t == 0 { 0 } else { 1 });
            assert_eq!(d.terminal, d.t == 3);
        }
        demos.validate(&mdp).unwrap();
    }

    #[test]
    fn sampling_is_pure_in_seed() {
        let mdp = make_random_mdp(4, 2, 0.9, RngSeed(3), 1.0);
        let policy = PolicyTable::uniform(4, 2);
        let a = sample_trajectories(&mdp, &policy, 5, 20, RngSeed(42), None).unwrap();
        let b = sample_trajectories(&mdp, &policy, 5, 20, RngSeed(42), None).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectories(&mdp, &policy, 5, 20, RngSeed(43), None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejection_cap_reported() {
        // Accept set reachable at start but always left immediately:
        // s0 -> s1 deterministic, accept = {s0}.
        let mdp = chain_mdp(0.9);
        let policy = PolicyTable::uniform(2, 1);
        let accept: HashSet<usize> = [0].into_iter().collect();
        let err = sample_trajectories(&mdp, &policy, 1, 3, RngSeed(0), Some(&accept)).unwrap_err();
        assert!(matches!(err, Error::RejectionCapExceeded { .. }));
    }

    #[test]
    fn empirical_occupancy_small_cases() {
        let mdp = single_state_mdp(2, 0.9);
        let demos = DemoDataset {
            transitions: vec![
                DemoTransition { episode: 0, t: 0, s: 0, a: 0, s_next: 0, terminal: false },
                DemoTransition { episode: 0, t: 1, s: 0, a: 0, s_next: 0, terminal: true },
            ],
        };
        let occ = empirical_occupancy(&demos, &mdp).unwrap();
        assert_abs_diff_eq!(occ.mass(0, 0), 1.0, epsilon = 1e-15);

        // Two single-step episodes at distinct pairs -> half/half whatever gamma.
        let demos = DemoDataset {
            transitions: vec![
                DemoTransition { episode: 0, t: 0, s: 0, a: 0, s_next: 0, terminal: true },
                DemoTransition { episode: 1, t: 0, s: 0, a: 1, s_next: 0, terminal: true },
            ],
        };
        let occ = empirical_occupancy(&demos, &mdp).unwrap();
        assert_abs_diff_eq!(occ.mass(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(occ.mass(0, 1), 0.5, epsilon = 1e-15);

        assert!(matches!(
            empirical_occupancy(&DemoDataset::default(), &mdp).unwrap_err(),
            Error::EmptyDataset
        ));
    }

    #[test]
    fn empirical_occupancy_approaches_exact() {
        let mdp = make_random_mdp(4, 2, 0.9, RngSeed(11), 1.0);
        let mut rng = RngSeed(12).rng();
        let mut rows = Vec::new();
        for _ in 0..4 {
            let raw: Vec<f64> = (0..2).map(|_| rng.gen::<f64>() + 0.1).collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / total).collect());
        }
        let policy = PolicyTable::new(rows).unwrap();
        let exact = compute_occupancy(&mdp, &policy).unwrap();
        assert!(horizon_covers_discount(mdp.gamma, 200));

        let demos = sample_trajectories(&mdp, &policy, 2000, 200, RngSeed(99), None).unwrap();
        let emp = empirical_occupancy(&demos, &mdp).unwrap();
        let tv = emp.tv_distance(&exact);
        assert!(tv <= 0.05, "tv {tv}");

        // The estimate tightens as episodes accumulate (seed-ladder check).
        let small = sample_trajectories(&mdp, &policy, 50, 200, RngSeed(99), None).unwrap();
        let tv_small = empirical_occupancy(&small, &mdp).unwrap().tv_distance(&exact);
        assert!(tv < tv_small, "tv {tv} not below {tv_small}");
    }

    #[test]
    fn entropy_examples() {
        // Deterministic policy: zero entropy.
        let mdp = single_state_mdp(2, 0.9);
        let det = PolicyTable::new(vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(policy_entropy(&mdp, &det).unwrap(), 0.0);

        // Uniform over two actions in one absorbing state: log2/(1-gamma).
        let uni = PolicyTable::uniform(1, 2);
        let h = policy_entropy(&mdp, &uni).unwrap();
        assert_abs_diff_eq!(h, 2.0_f64.ln() / 0.1, epsilon = 1e-9);
    }

    #[test]
    fn entropy_matches_monte_carlo() {
        let mdp = make_random_mdp(4, 3, 0.85, RngSeed(21), 1.0);
        let mut rng = RngSeed(22).rng();
        let mut rows = Vec::new();
        for _ in 0..4 {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() + 0.2).collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / total).collect());
        }
        let policy = PolicyTable::new(rows).unwrap();
        let exact = policy_entropy(&mdp, &policy).unwrap();

        // Monte-Carlo: average of sum_t gamma^t * (-log pi) over episodes.
        let horizon = 150;
        let episodes = 700; // ~1e5 sampled steps
        let mut rng = RngSeed(23).rng();
        let mut total = 0.0;
        for _ in 0..episodes {
            let mut s = sample_index(&mut rng, &mdp.p0);
            let mut w = 1.0;
            for _ in 0..horizon {
                let a = sample_index(&mut rng, policy.row(s));
                total -= w * policy.prob(s, a).ln();
                w *= mdp.gamma;
                s = sample_index(&mut rng, &mdp.transition[s][a]);
            }
        }
        let mc = total / episodes as f64;
        let rel = (mc - exact).abs() / exact.abs();
        assert!(rel < 0.01, "MC {mc} vs exact {exact}, rel {rel}");
    }

    #[test]
    fn seed_streams_differ() {
        let s = RngSeed(5);
        assert_ne!(s.stream(0), s.stream(1));
        assert_eq!(s.stream(7), s.stream(7));
    }
}
