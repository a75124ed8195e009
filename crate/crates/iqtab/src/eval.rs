//! Policy evaluation by Monte-Carlo rollout, plus small reporting helpers.
//!
//! Returns are undiscounted sums of the MDP's ground-truth reward over a
//! fixed horizon — the ground truth is never shown to the learners, only
//! used here to score them. Episode `i` always draws from the RNG stream
//! `seed.stream(i)`, so results are bit-identical regardless of how many
//! worker threads the rollouts are spread over (capped by the
//! `IQTAB_THREADS` environment variable).

use serde::{Deserialize, Serialize};

use crate::mdp::{sample_index, PolicyTable, RngSeed, TabularMdp};
use crate::soft::{QTable, RewardTable};
use crate::{Error, Result};

/// Per-state argmax of a Q-table, ties broken toward the lowest action
/// index.
pub fn greedy_policy(q: &QTable) -> Vec<usize> {
    (0..q.n_states()).map(|s| argmax_row(q.row(s))).collect()
}

/// Per-state argmax of a stochastic policy's probabilities, ties broken
/// toward the lowest action index.
pub fn greedy_from_policy(policy: &PolicyTable) -> Vec<usize> {
    (0..policy.n_states())
        .map(|s| argmax_row(policy.row(s)))
        .collect()
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One-hot [`PolicyTable`] for a deterministic action choice per state.
pub fn deterministic_policy_table(actions: &[usize], n_actions: usize) -> Result<PolicyTable> {
    if n_actions == 0 {
        return Err(Error::ShapeMismatch("need at least one action".into()));
    }
    let mut rows = Vec::with_capacity(actions.len());
    for (s, &a) in actions.iter().enumerate() {
        if a >= n_actions {
            return Err(Error::InvalidArgument(format!(
                "action {a} at state {s} out of range (n_actions = {n_actions})"
            )));
        }
        let mut row = vec![0.0; n_actions];
        row[a] = 1.0;
        rows.push(row);
    }
    PolicyTable::new(rows)
}

/// Undiscounted rollout returns and their summary statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    /// Population standard deviation of `returns`.
    pub std_return: f64,
    pub returns: Vec<f64>,
}

impl EvalReport {
    fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Self {
            mean_return: mean,
            std_return: var.sqrt(),
            returns,
        }
    }
}

enum ActionRule<'a> {
    Stochastic(&'a PolicyTable),
    Deterministic(&'a [usize]),
}

/// Score a stochastic policy: `n_episodes` rollouts of `horizon` steps,
/// summing the MDP's true reward without discounting.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    n_episodes: usize,
    horizon: usize,
    seed: RngSeed,
) -> Result<EvalReport> {
    mdp.check_policy(policy)?;
    evaluate_rule(mdp, ActionRule::Stochastic(policy), n_episodes, horizon, seed)
}

/// Score a deterministic per-state action table (e.g. [`greedy_policy`]).
pub fn evaluate_actions(
    mdp: &TabularMdp,
    actions: &[usize],
    n_episodes: usize,
    horizon: usize,
    seed: RngSeed,
) -> Result<EvalReport> {
    if actions.len() != mdp.n_states {
        return Err(Error::ShapeMismatch(format!(
            "action table has {} entries, MDP has {} states",
            actions.len(),
            mdp.n_states
        )));
    }
    if let Some((s, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= mdp.n_actions) {
        return Err(Error::InvalidArgument(format!(
            "action {a} at state {s} out of range (n_actions = {})",
            mdp.n_actions
        )));
    }
    evaluate_rule(mdp, ActionRule::Deterministic(actions), n_episodes, horizon, seed)
}

fn evaluate_rule(
    mdp: &TabularMdp,
    rule: ActionRule<'_>,
    n_episodes: usize,
    horizon: usize,
    seed: RngSeed,
) -> Result<EvalReport> {
    if mdp.true_reward.is_none() {
        return Err(Error::MissingTrueReward("rollout evaluation"));
    }
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be positive".into()));
    }
    let workers = worker_count(n_episodes);
    let returns = run_episodes(mdp, &rule, n_episodes, horizon, seed, workers);
    Ok(EvalReport::from_returns(returns))
}

fn worker_count(n_episodes: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("IQTAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(hw);
    cap.min(n_episodes).max(1)
}

fn run_episodes(
    mdp: &TabularMdp,
    rule: &ActionRule<'_>,
    n_episodes: usize,
    horizon: usize,
    seed: RngSeed,
    workers: usize,
) -> Vec<f64> {
    let reward = mdp
        .true_reward
        .as_ref()
        .expect("checked by evaluate_rule");
    let one = |episode: usize| -> f64 {
        let mut rng = seed.stream(episode as u64).rng();
        let mut s = sample_index(&mut rng, &mdp.p0);
        let mut total = 0.0;
        for _ in 0..horizon {
            let a = match rule {
                ActionRule::Stochastic(p) => sample_index(&mut rng, p.row(s)),
                ActionRule::Deterministic(acts) => acts[s],
            };
            total += reward[s][a];
            s = sample_index(&mut rng, &mdp.transition[s][a]);
        }
        total
    };
    if workers <= 1 {
        return (0..n_episodes).map(one).collect();
    }
    // Contiguous blocks per worker; episode RNGs are index-keyed, so the
    // split never affects the numbers.
    let block = n_episodes.div_ceil(workers);
    let mut out = Vec::with_capacity(n_episodes);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = w * block;
                let hi = ((w + 1) * block).min(n_episodes);
                scope.spawn(move || (lo..hi).map(one).collect::<Vec<f64>>())
            })
            .collect();
        for h in handles {
            out.extend(h.join().expect("rollout worker panicked"));
        }
    });
    out
}

/// Pearson correlation coefficient of two equal-length samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "correlation inputs have lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::NumericalFailure(
            "correlation undefined: an input has zero variance".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Collapse a state-action reward to per-state values under a policy:
/// `r̄(s) = Σ_a π(a|s)·r(s,a)`.
pub fn expected_state_reward(reward: &RewardTable, policy: &PolicyTable) -> Result<Vec<f64>> {
    if reward.n_states() != policy.n_states() || reward.n_actions() != policy.n_actions() {
        return Err(Error::ShapeMismatch(format!(
            "reward is {}x{}, policy is {}x{}",
            reward.n_states(),
            reward.n_actions(),
            policy.n_states(),
            policy.n_actions()
        )));
    }
    Ok((0..reward.n_states())
        .map(|s| {
            (0..reward.n_actions())
                .map(|a| policy.prob(s, a) * reward.get(s, a))
                .sum()
        })
        .collect())
}
