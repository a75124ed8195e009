//! Seeded evaluation rollouts that record every transition.
//!
//! The library's own evaluator returns only episode returns; metrics also
//! need the visited `(s, a, s')` triples to pair recovered rewards with
//! true ones. This mirrors its semantics — episode `i` always draws from
//! RNG stream `seed.stream(i)`, workers own contiguous episode blocks and
//! results are concatenated in episode order — so the `IQTAB_THREADS`
//! worker cap changes speed, never numbers.

use anyhow::{bail, Result};
use rand::Rng;

use iqtab::mdp::{PolicyTable, RngSeed, TabularMdp};

/// Evaluation draws from this stream block of the run seed; demo
/// generation uses streams `0..n_episodes` of the same seed, so the two
/// never share an RNG stream.
pub const EVAL_STREAM: u64 = 1 << 32;

/// How an evaluation rollout picks actions.
pub enum ActionRule<'a> {
    /// Fixed per-state actions (greedy evaluation).
    Deterministic(&'a [usize]),
    /// Sample the stochastic policy each step.
    Stochastic(&'a PolicyTable),
}

/// Transition-level record of a batch of fixed-horizon rollouts.
pub struct Rollouts {
    /// Undiscounted true-reward return per episode.
    pub returns: Vec<f64>,
    /// `(s, a, s_next)` for every step, episodes concatenated in order;
    /// fixed horizon means episode `i` is the `i`-th chunk of `horizon`.
    pub transitions: Vec<(usize, usize, usize)>,
    pub horizon: usize,
}

impl Rollouts {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Population standard deviation of the returns.
    pub fn std_return(&self) -> f64 {
        let mean = self.mean_return();
        let var = self
            .returns
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / self.returns.len() as f64;
        var.sqrt()
    }
}

/// Roll `n_episodes` fixed-horizon episodes, scoring with the MDP's
/// ground-truth reward and recording every transition.
pub fn rollout(
    mdp: &TabularMdp,
    rule: &ActionRule<'_>,
    n_episodes: usize,
    horizon: usize,
    seed: RngSeed,
) -> Result<Rollouts> {
    let Some(reward) = mdp.true_reward.as_ref() else {
        bail!("rollout evaluation needs an environment with a ground-truth reward");
    };
    if n_episodes == 0 || horizon == 0 {
        bail!("evaluation needs n_rollouts >= 1 and horizon >= 1");
    }
    if let ActionRule::Deterministic(actions) = rule {
        if actions.len() != mdp.n_states {
            bail!(
                "action table has {} entries, MDP has {} states",
                actions.len(),
                mdp.n_states
            );
        }
    }

    let one = |episode: usize| -> (f64, Vec<(usize, usize, usize)>) {
        let mut rng = seed.stream(episode as u64).rng();
        let mut s = sample_index(&mut rng, &mdp.p0);
        let mut total = 0.0;
        let mut steps = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = match rule {
                ActionRule::Stochastic(p) => sample_index(&mut rng, p.row(s)),
                ActionRule::Deterministic(acts) => acts[s],
            };
            total += reward[s][a];
            let s_next = sample_index(&mut rng, &mdp.transition[s][a]);
            steps.push((s, a, s_next));
            s = s_next;
        }
        (total, steps)
    };

    let workers = worker_count(n_episodes);
    let mut returns = Vec::with_capacity(n_episodes);
    let mut transitions = Vec::with_capacity(n_episodes * horizon);
    if workers <= 1 {
        for e in 0..n_episodes {
            let (ret, steps) = one(e);
            returns.push(ret);
            transitions.extend(steps);
        }
    } else {
        let block = n_episodes.div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let lo = w * block;
                    let hi = ((w + 1) * block).min(n_episodes);
                    let one = &one;
                    scope.spawn(move || (lo..hi).map(one).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (ret, steps) in h.join().expect("rollout worker panicked") {
                    returns.push(ret);
                    transitions.extend(steps);
                }
            }
        });
    }
    Ok(Rollouts {
        returns,
        transitions,
        horizon,
    })
}

fn worker_count(n_episodes: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    std::env::var("IQTAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(hw)
        .min(n_episodes)
        .max(1)
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
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
