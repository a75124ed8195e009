//! Entropy-regularized Bellman machinery.
//!
//! With temperature `τ > 0`, the soft state value of a Q-table is
//! `V*(s) = τ·logsumexp(Q(s,·)/τ)` and the matching stochastic policy is
//! `π(a|s) = softmax(Q(s,·)/τ)`. For a fixed policy the value is
//! `V^π(s) = E_{a∼π}[Q(s,a) − τ·log π(a|s)]`, which collapses to `V*` when
//! `π` is the softmax of `Q`.
//!
//! Two operator pairs matter here. The forward operator
//! `(B^π Q)(s,a) = r(s,a) + γ·E_{s′}[V^π(s′)]` is a `γ`-contraction, so
//! [`soft_bellman_policy_eval`] finds its fixed point by iteration. Its
//! inverse `(T^π Q)(s,a) = Q(s,a) − γ·E_{s′}[V^π(s′)]` needs no iteration at
//! all: it reads a reward table straight out of a Q-table. For every policy
//! these are mutually inverse bijections between reward tables and Q-tables,
//! and the starred variants ([`soft_q_iteration`],
//! [`inverse_soft_bellman_optimal`]) are the same pair with `V*` in place of
//! `V^π`. The inverse direction is what lets imitation learning optimize a
//! single Q-table and still talk about the reward it implies.
//!
//! `τ` defaults to 1 in the theory; solvers here take it explicitly because
//! the experiments run much colder (η = 0.01 scale).

use serde::{Deserialize, Serialize};

use crate::mdp::{PolicyTable, TabularMdp};
use crate::{Error, Result};

/// Default sup-norm tolerance for fixed-point solvers.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;
/// Default iteration cap for fixed-point solvers.
pub const DEFAULT_SOLVER_MAX_ITERS: usize = 100_000;

/// A soft Q-function as a dense `Q[s][a]` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QTable {
    q: Vec<Vec<f64>>,
}

impl QTable {
    pub fn new(q: Vec<Vec<f64>>) -> Result<Self> {
        if q.is_empty() || q[0].is_empty() {
            return Err(Error::ShapeMismatch("Q-table must be non-empty".into()));
        }
        let n_actions = q[0].len();
        for (s, row) in q.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "Q row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite Q entry in row {s}"
                )));
            }
        }
        Ok(Self { q })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            q: vec![vec![0.0; n_actions]; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.q.len()
    }

    pub fn n_actions(&self) -> usize {
        self.q[0].len()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s][a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.q[s][a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Largest absolute entry; useful as a sup-norm.
    pub fn sup_norm(&self) -> f64 {
        self.q
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|row| row.iter().all(|x| x.is_finite()))
    }
}

/// A state-value vector `V[s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueTable {
    v: Vec<f64>,
}

impl ValueTable {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::ShapeMismatch("value table must be non-empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure("non-finite value entry".into()));
        }
        Ok(Self { v })
    }

    pub fn n_states(&self) -> usize {
        self.v.len()
    }

    pub fn get(&self, s: usize) -> f64 {
        self.v[s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }
}

/// A reward table `r[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardTable {
    r: Vec<Vec<f64>>,
}

impl RewardTable {
    pub fn new(r: Vec<Vec<f64>>) -> Result<Self> {
        if r.is_empty() || r[0].is_empty() {
            return Err(Error::ShapeMismatch("reward table must be non-empty".into()));
        }
        let n_actions = r[0].len();
        for (s, row) in r.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "reward row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite reward entry in row {s}"
                )));
            }
        }
        Ok(Self { r })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            r: vec![vec![0.0; n_actions]; n_states],
        }
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            r: vec![vec![value; n_actions]; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.r.len()
    }

    pub fn n_actions(&self) -> usize {
        self.r[0].len()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.r[s][a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.r[s][a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.r[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.r
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    Ok(())
}

/// Max-shifted `τ·log Σ_i exp(xs[i]/τ)`.
pub fn log_sum_exp(xs: &[f64], temperature: f64) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
    let sum: f64 = xs.iter().map(|&x| ((x - m) / temperature).exp()).sum();
    m + temperature * sum.ln()
}

/// Max-shifted softmax of a slice at the given temperature.
///
/// Entries are floored at the smallest positive normal so rows never carry
/// exact zeros, then renormalized.
pub fn softmax_row(xs: &[f64], temperature: f64) -> Vec<f64> {
    let m = xs.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
    let mut out: Vec<f64> = xs
        .iter()
        .map(|&x| ((x - m) / temperature).exp().max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Soft state values `V*(s) = τ·logsumexp(Q(s,·)/τ)`.
pub fn soft_value_star(q: &QTable, temperature: f64) -> Result<ValueTable> {
    check_temperature(temperature)?;
    ValueTable::new(
        q.rows()
            .iter()
            .map(|row| log_sum_exp(row, temperature))
            .collect(),
    )
}

/// Softmax policy of a Q-table, `π(a|s) = softmax(Q(s,·)/τ)`.
pub fn soft_policy(q: &QTable, temperature: f64) -> Result<PolicyTable> {
    check_temperature(temperature)?;
    PolicyTable::new(
        q.rows()
            .iter()
            .map(|row| softmax_row(row, temperature))
            .collect(),
    )
}

/// Value of a fixed policy, `V^π(s) = Σ_a π(a|s)·(Q(s,a) − τ·log π(a|s))`.
///
/// Zero-probability actions contribute nothing (`0·log 0 = 0`).
pub fn policy_value(q: &QTable, policy: &PolicyTable, temperature: f64) -> Result<ValueTable> {
    check_temperature(temperature)?;
    if policy.n_states() != q.n_states() || policy.n_actions() != q.n_actions() {
        return Err(Error::ShapeMismatch(
            "policy and Q-table shapes differ".into(),
        ));
    }
    let mut v = Vec::with_capacity(q.n_states());
    for s in 0..q.n_states() {
        let mut acc = 0.0;
        for a in 0..q.n_actions() {
            let p = policy.prob(s, a);
            if p > 0.0 {
                acc += p * (q.get(s, a) - temperature * p.ln());
            }
        }
        v.push(acc);
    }
    ValueTable::new(v)
}

/// Fixed point of the optimal soft Bellman map `Q ← r + γ·E_{s′}[V*(s′)]`.
///
/// Converges geometrically because the map is a `γ`-contraction in sup-norm.
pub fn soft_q_iteration(
    mdp: &TabularMdp,
    reward: &RewardTable,
    temperature: f64,
    tol: f64,
    max_iters: usize,
) -> Result<QTable> {
    soft_q_iteration_with_stats(mdp, reward, temperature, tol, max_iters).map(|(q, _)| q)
}

/// [`soft_q_iteration`] that also reports the number of sweeps performed.
pub fn soft_q_iteration_with_stats(
    mdp: &TabularMdp,
    reward: &RewardTable,
    temperature: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(QTable, usize)> {
    check_reward_shape(mdp, reward)?;
    check_temperature(temperature)?;
    check_tol(tol)?;
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_iters {
        let v = soft_value_star(&q, temperature)?;
        residual = 0.0;
        let mut next = QTable::zeros(mdp.n_states, mdp.n_actions);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let val = reward.get(s, a) + mdp.gamma * mdp.expected_next(s, a, v.as_slice());
                residual = residual.max((val - q.get(s, a)).abs());
                next.set(s, a, val);
            }
        }
        q = next;
        if residual <= tol {
            return Ok((q, sweep));
        }
    }
    Err(Error::MaxItersExceeded {
        max_iters,
        residual,
        tol,
    })
}

/// Fixed point of `B^π_r`: `Q ← r + γ·E_{s′}[V^π(s′)]` for a fixed policy.
pub fn soft_bellman_policy_eval(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &PolicyTable,
    temperature: f64,
    tol: f64,
    max_iters: usize,
) -> Result<QTable> {
    soft_bellman_policy_eval_with_stats(mdp, reward, policy, temperature, tol, max_iters)
        .map(|(q, _)| q)
}

/// [`soft_bellman_policy_eval`] that also reports the number of sweeps.
pub fn soft_bellman_policy_eval_with_stats(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &PolicyTable,
    temperature: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(QTable, usize)> {
    check_reward_shape(mdp, reward)?;
    mdp.check_policy(policy)?;
    check_temperature(temperature)?;
    check_tol(tol)?;
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_iters {
        let v = policy_value(&q, policy, temperature)?;
        residual = 0.0;
        let mut next = QTable::zeros(mdp.n_states, mdp.n_actions);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let val = reward.get(s, a) + mdp.gamma * mdp.expected_next(s, a, v.as_slice());
                residual = residual.max((val - q.get(s, a)).abs());
                next.set(s, a, val);
            }
        }
        q = next;
        if residual <= tol {
            return Ok((q, sweep));
        }
    }
    Err(Error::MaxItersExceeded {
        max_iters,
        residual,
        tol,
    })
}

/// Inverse soft Bellman operator `(T^π Q)(s,a) = Q(s,a) − γ·E_{s′}[V^π(s′)]`.
///
/// Exact, no iteration: this is the reward table under which `Q` is the soft
/// value of `π`. Composing with [`soft_bellman_policy_eval`] returns `Q`.
pub fn inverse_soft_bellman(
    mdp: &TabularMdp,
    q: &QTable,
    policy: &PolicyTable,
    temperature: f64,
) -> Result<RewardTable> {
    mdp.check_policy(policy)?;
    check_q_shape(mdp, q)?;
    let v = policy_value(q, policy, temperature)?;
    inverse_with_values(mdp, q, &v)
}

/// Starred inverse operator `(T* Q)(s,a) = Q(s,a) − γ·E_{s′}[V*(s′)]`.
///
/// Identical to [`inverse_soft_bellman`] with `policy = soft_policy(Q)`.
pub fn inverse_soft_bellman_optimal(
    mdp: &TabularMdp,
    q: &QTable,
    temperature: f64,
) -> Result<RewardTable> {
    check_q_shape(mdp, q)?;
    let v = soft_value_star(q, temperature)?;
    inverse_with_values(mdp, q, &v)
}

fn inverse_with_values(mdp: &TabularMdp, q: &QTable, v: &ValueTable) -> Result<RewardTable> {
    let mut r = RewardTable::zeros(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            r.set(
                s,
                a,
                q.get(s, a) - mdp.gamma * mdp.expected_next(s, a, v.as_slice()),
            );
        }
    }
    Ok(r)
}

fn check_reward_shape(mdp: &TabularMdp, reward: &RewardTable) -> Result<()> {
    if reward.n_states() != mdp.n_states || reward.n_actions() != mdp.n_actions {
        return Err(Error::ShapeMismatch(format!(
            "reward is {}x{}, MDP is {}x{}",
            reward.n_states(),
            reward.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    Ok(())
}

pub(crate) fn check_q_shape(mdp: &TabularMdp, q: &QTable) -> Result<()> {
    if q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions {
        return Err(Error::ShapeMismatch(format!(
            "Q-table is {}x{}, MDP is {}x{}",
            q.n_states(),
            q.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_random_mdp;
    use crate::mdp::RngSeed;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn random_q(n_states: usize, n_actions: usize, scale: f64, seed: u64) -> QTable {
        let mut rng = RngSeed(seed).rng();
        let mut q = QTable::zeros(n_states, n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                q.set(s, a, scale * (2.0 * rng.gen::<f64>() - 1.0));
            }
        }
        q
    }

    fn random_reward(n_states: usize, n_actions: usize, scale: f64, seed: u64) -> RewardTable {
        let mut rng = RngSeed(seed).rng();
        let mut r = RewardTable::zeros(n_states, n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                r.set(s, a, scale * (2.0 * rng.gen::<f64>() - 1.0));
            }
        }
        r
    }

    fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> PolicyTable {
        let mut rng = RngSeed(seed).rng();
        let mut rows = Vec::new();
        for _ in 0..n_states {
            let raw: Vec<f64> = (0..n_actions).map(|_| rng.gen::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / total).collect());
        }
        PolicyTable::new(rows).unwrap()
    }

    #[test]
    fn value_star_examples() {
        let q = QTable::new(vec![vec![0.0, 0.0]]).unwrap();
        let v = soft_value_star(&q, 1.0).unwrap();
        assert_abs_diff_eq!(v.get(0), 2.0_f64.ln(), epsilon = 1e-12);

        let q = QTable::new(vec![vec![3.5, -1e9]]).unwrap();
        let v = soft_value_star(&q, 1.0).unwrap();
        assert_abs_diff_eq!(v.get(0), 3.5, epsilon = 1e-6);

        // Against naive (unshifted) summation for moderate magnitudes.
        let q = random_q(4, 5, 10.0, 1);
        let v = soft_value_star(&q, 1.0).unwrap();
        for s in 0..4 {
            let naive: f64 = q.row(s).iter().map(|x| x.exp()).sum::<f64>().ln();
            assert_abs_diff_eq!(v.get(s), naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn soft_policy_examples() {
        let q = QTable::new(vec![vec![2.0, 2.0, 2.0]]).unwrap();
        let p = soft_policy(&q, 1.0).unwrap();
        for a in 0..3 {
            assert_abs_diff_eq!(p.prob(0, a), 1.0 / 3.0, epsilon = 1e-15);
        }

        let q = QTable::new(vec![vec![3.0_f64.ln(), 0.0]]).unwrap();
        let p = soft_policy(&q, 1.0).unwrap();
        assert_abs_diff_eq!(p.prob(0, 0), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p.prob(0, 1), 0.25, epsilon = 1e-12);

        // Shift invariance.
        let q1 = random_q(3, 4, 2.0, 2);
        let mut q2 = q1.clone();
        for a in 0..4 {
            q2.set(1, a, q1.get(1, a) + 17.0);
        }
        let p1 = soft_policy(&q1, 0.7).unwrap();
        let p2 = soft_policy(&q2, 0.7).unwrap();
        for a in 0..4 {
            assert_abs_diff_eq!(p1.prob(1, a), p2.prob(1, a), epsilon = 1e-12);
        }
    }

    #[test]
    fn policy_never_exactly_zero() {
        let q = QTable::new(vec![vec![0.0, -5000.0]]).unwrap();
        let p = soft_policy(&q, 1.0).unwrap();
        assert!(p.prob(0, 1) > 0.0);
    }

    #[test]
    fn q_iteration_examples() {
        // Zero reward, gamma = 0: the fixed point is tau*log|A| per state?
        // No: Q <- r + 0 = 0 exactly.
        let mdp = crate::envs::make_loop_mdp(0.5, 0.0).unwrap();
        let r = RewardTable::zeros(3, 2);
        let q = soft_q_iteration(&mdp, &r, 1.0, 1e-12, 100).unwrap();
        assert_eq!(q.sup_norm(), 0.0);

        // Single state, single action: geometric series, entropy term absent.
        let transition = vec![vec![vec![1.0]]];
        let mdp = TabularMdp::new(transition, vec![1.0], 0.9, None).unwrap();
        let r = RewardTable::constant(1, 1, 1.0);
        let q = soft_q_iteration(&mdp, &r, 0.05, 1e-10, 100_000).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 10.0, epsilon = 1e-8);
    }

    #[test]
    fn q_iteration_residual_bound() {
        let mdp = make_random_mdp(6, 3, 0.92, RngSeed(31), 1.0);
        let r = random_reward(6, 3, 1.0, 32);
        let tol = 1e-10;
        let q = soft_q_iteration(&mdp, &r, 1.0, tol, 100_000).unwrap();
        let v = soft_value_star(&q, 1.0).unwrap();
        let mut resid: f64 = 0.0;
        for s in 0..6 {
            for a in 0..3 {
                let b = r.get(s, a) + mdp.gamma * mdp.expected_next(s, a, v.as_slice());
                resid = resid.max((b - q.get(s, a)).abs());
            }
        }
        assert!(resid <= tol, "residual {resid:e}");
    }

    #[test]
    fn q_iteration_reports_max_iters() {
        let mdp = make_random_mdp(4, 2, 0.95, RngSeed(33), 1.0);
        let r = random_reward(4, 2, 1.0, 34);
        let err = soft_q_iteration(&mdp, &r, 1.0, 1e-12, 3).unwrap_err();
        match err {
            Error::MaxItersExceeded { residual, .. } => assert!(residual > 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn policy_value_examples() {
        let q = random_q(3, 3, 2.0, 41);
        let det = PolicyTable::new(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let v = policy_value(&q, &det, 1.0).unwrap();
        for s in 0..3 {
            assert_abs_diff_eq!(v.get(s), q.get(s, s), epsilon = 1e-15);
        }

        // pi = softmax(Q) makes V^pi = V*: the KL term vanishes.
        for &tau in &[1.0, 0.3, 0.01] {
            let p = soft_policy(&q, tau).unwrap();
            let vp = policy_value(&q, &p, tau).unwrap();
            let vs = soft_value_star(&q, tau).unwrap();
            for s in 0..3 {
                assert_abs_diff_eq!(vp.get(s), vs.get(s), epsilon = 1e-9);
            }
        }

        // And for any other policy V^pi is strictly below V*.
        let other = random_policy(3, 3, 42);
        let vp = policy_value(&q, &other, 1.0).unwrap();
        let vs = soft_value_star(&q, 1.0).unwrap();
        for s in 0..3 {
            assert!(vp.get(s) <= vs.get(s) + 1e-12);
        }
    }

    /// Dense linear-solve oracle for policy evaluation on the joint
    /// state-action space: (I − γP^π)Q = r − γP^π·(τ·log π), where
    /// P^π[(s,a),(s′,a′)] = P(s′|s,a)·π(a′|s′).
    fn policy_eval_dense(
        mdp: &TabularMdp,
        reward: &RewardTable,
        policy: &PolicyTable,
        temperature: f64,
    ) -> Vec<Vec<f64>> {
        let n = mdp.n_states * mdp.n_actions;
        let idx = |s: usize, a: usize| s * mdp.n_actions + a;
        let mut p_pi = DMatrix::<f64>::zeros(n, n);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                for s2 in 0..mdp.n_states {
                    for a2 in 0..mdp.n_actions {
                        p_pi[(idx(s, a), idx(s2, a2))] =
                            mdp.transition[s][a][s2] * policy.prob(s2, a2);
                    }
                }
            }
        }
        // log pi entries weighted by pi inside P^pi; zero-probability actions
        // carry zero weight so their log never enters.
        let mut log_pi = DVector::<f64>::zeros(n);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let p = policy.prob(s, a);
                log_pi[idx(s, a)] = if p > 0.0 { temperature * p.ln() } else { 0.0 };
            }
        }
        let r_vec = DVector::from_iterator(
            n,
            (0..mdp.n_states)
                .flat_map(|s| (0..mdp.n_actions).map(move |a| (s, a)))
                .map(|(s, a)| reward.get(s, a)),
        );
        let rhs = &r_vec - &p_pi * log_pi * mdp.gamma;
        let system = DMatrix::<f64>::identity(n, n) - &p_pi * mdp.gamma;
        let sol = system.lu().solve(&rhs).unwrap();
        (0..mdp.n_states)
            .map(|s| (0..mdp.n_actions).map(|a| sol[idx(s, a)]).collect())
            .collect()
    }

    #[test]
    fn policy_eval_matches_dense_solve() {
        let mdp = make_random_mdp(4, 3, 0.9, RngSeed(51), 1.0);
        let r = random_reward(4, 3, 1.0, 52);

        // Deterministic policy: log-pi term drops out entirely.
        let mut rows = vec![vec![0.0; 3]; 4];
        for (s, row) in rows.iter_mut().enumerate() {
            row[s % 3] = 1.0;
        }
        let det = PolicyTable::new(rows).unwrap();
        let fixed = soft_bellman_policy_eval(&mdp, &r, &det, 1.0, 1e-12, 100_000).unwrap();
        let dense = policy_eval_dense(&mdp, &r, &det, 1.0);
        for s in 0..4 {
            for a in 0..3 {
                assert_abs_diff_eq!(fixed.get(s, a), dense[s][a], epsilon = 1e-8);
            }
        }

        // Smooth random policy: same agreement.
        let smooth = random_policy(4, 3, 53);
        let fixed = soft_bellman_policy_eval(&mdp, &r, &smooth, 1.0, 1e-12, 100_000).unwrap();
        let dense = policy_eval_dense(&mdp, &r, &smooth, 1.0);
        for s in 0..4 {
            for a in 0..3 {
                assert_abs_diff_eq!(fixed.get(s, a), dense[s][a], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn policy_eval_gamma_zero_returns_reward() {
        let mdp = make_random_mdp(3, 2, 0.0, RngSeed(61), 1.0);
        let r = random_reward(3, 2, 2.0, 62);
        let p = random_policy(3, 2, 63);
        let q = soft_bellman_policy_eval(&mdp, &r, &p, 1.0, 1e-12, 10).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert_abs_diff_eq!(q.get(s, a), r.get(s, a), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inverse_operator_examples() {
        // gamma = 0: T^pi Q = Q.
        let mdp = make_random_mdp(3, 2, 0.0, RngSeed(71), 1.0);
        let q = random_q(3, 2, 1.0, 72);
        let p = random_policy(3, 2, 73);
        let r = inverse_soft_bellman(&mdp, &q, &p, 1.0).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert_abs_diff_eq!(r.get(s, a), q.get(s, a), epsilon = 1e-15);
            }
        }

        // Single absorbing state, deterministic policy: r = Q - gamma*Q.
        let transition = vec![vec![vec![1.0]]];
        let mdp = TabularMdp::new(transition, vec![1.0], 0.8, None).unwrap();
        let q = QTable::new(vec![vec![2.5]]).unwrap();
        let det = PolicyTable::new(vec![vec![1.0]]).unwrap();
        let r = inverse_soft_bellman(&mdp, &q, &det, 1.0).unwrap();
        assert_abs_diff_eq!(r.get(0, 0), 2.5 - 0.8 * 2.5, epsilon = 1e-15);
    }

    #[test]
    fn starred_inverse_is_inverse_at_softmax_policy() {
        let mdp = make_random_mdp(5, 3, 0.9, RngSeed(81), 1.0);
        let q = random_q(5, 3, 1.5, 82);
        for &tau in &[1.0, 0.4] {
            let via_star = inverse_soft_bellman_optimal(&mdp, &q, tau).unwrap();
            let via_policy =
                inverse_soft_bellman(&mdp, &q, &soft_policy(&q, tau).unwrap(), tau).unwrap();
            for s in 0..5 {
                for a in 0..3 {
                    assert_abs_diff_eq!(
                        via_star.get(s, a),
                        via_policy.get(s, a),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn bijection_round_trips() {
        // B^pi then T^pi recovers r; T* then soft_q_iteration recovers Q.
        for trial in 0..10 {
            let seed = RngSeed(900 + trial);
            let mdp = make_random_mdp(4, 3, 0.5 + 0.04 * trial as f64, seed, 1.0);
            let r = random_reward(4, 3, 1.0, 910 + trial);
            let p = random_policy(4, 3, 920 + trial);
            let q = soft_bellman_policy_eval(&mdp, &r, &p, 1.0, 1e-12, 100_000).unwrap();
            let r_back = inverse_soft_bellman(&mdp, &q, &p, 1.0).unwrap();
            for s in 0..4 {
                for a in 0..3 {
                    assert_abs_diff_eq!(r_back.get(s, a), r.get(s, a), epsilon = 1e-8);
                }
            }

            let q0 = random_q(4, 3, 1.0, 930 + trial);
            let r_star = inverse_soft_bellman_optimal(&mdp, &q0, 1.0).unwrap();
            let q_back = soft_q_iteration(&mdp, &r_star, 1.0, 1e-12, 100_000).unwrap();
            for s in 0..4 {
                for a in 0..3 {
                    assert_abs_diff_eq!(q_back.get(s, a), q0.get(s, a), epsilon = 1e-8);
                }
            }
        }
    }
}
