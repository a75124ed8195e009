//! The experiment config file.
//!
//! One file drives every subcommand. TOML and JSON are interchangeable;
//! the extension picks the parser. Tagged tables select the environment
//! (`[env] kind = ...`) and the method (`[method] name = ...`); method
//! parameters deserialize directly into the library's own config structs,
//! so every key the library documents is accepted here with the same
//! default.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use iqtab::baselines::MaxEntIrlConfig;
use iqtab::envs::{make_gridworld_on, make_loop_mdp, make_random_mdp, GridLayout};
use iqtab::io::load_mdp;
use iqtab::iq::IqConfig;
use iqtab::mdp::{
    horizon_covers_discount, sample_trajectories, DemoDataset, RngSeed, TabularMdp,
};
use iqtab::soft::{soft_policy, soft_q_iteration, RewardTable};

/// Solver settings for the demonstration expert: soft value iteration on
/// the environment's ground-truth reward, driven effectively to its fixed
/// point (the contraction makes this cheap at desk scale).
const EXPERT_TOL: f64 = 1e-12;
const EXPERT_MAX_ITERS: usize = 1_000_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub env: EnvCfg,
    #[serde(default)]
    pub demos: DemosCfg,
    #[serde(default)]
    pub method: Option<MethodCfg>,
    #[serde(default)]
    pub eval: Option<EvalCfg>,
    #[serde(default)]
    pub compare: Option<CompareCfg>,
}

impl ExperimentConfig {
    /// Parse a `.toml` or `.json` config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(anyhow::Error::from),
            Some("json") => serde_json::from_str(&text).map_err(anyhow::Error::from),
            other => bail!(
                "config {} has extension {:?}; expected .toml or .json",
                path.display(),
                other.unwrap_or("none")
            ),
        };
        parsed.with_context(|| format!("parsing config {}", path.display()))
    }
}

/// `[env]`, tagged by `kind`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvCfg {
    /// Three-state loop task with a slip probability on the advance action.
    Loop { p: f64, gamma: f64 },
    /// Deterministic grid navigation (up/down/left/right/stay).
    Gridworld {
        width: usize,
        height: usize,
        goal: (usize, usize),
        #[serde(default)]
        obstacles: Vec<(usize, usize)>,
        #[serde(default)]
        step_reward: f64,
        #[serde(default = "one")]
        goal_reward: f64,
        gamma: f64,
    },
    /// Seeded random MDP; `env_seed` is its own seed, not the run seed,
    /// so the instance stays fixed while training seeds vary.
    Random {
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        #[serde(default = "one")]
        reward_scale: f64,
        #[serde(default)]
        env_seed: u64,
    },
    /// Any MDP serialized by the library as JSON.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl EnvCfg {
    /// Build the MDP; gridworlds also return their layout so exports can
    /// map states back to cells.
    pub fn build(&self) -> Result<(TabularMdp, Option<GridLayout>)> {
        match self {
            EnvCfg::Loop { p, gamma } => Ok((make_loop_mdp(*p, *gamma)?, None)),
            EnvCfg::Gridworld {
                width,
                height,
                goal,
                obstacles,
                step_reward,
                goal_reward,
                gamma,
            } => {
                let layout = GridLayout::new(*width, *height, obstacles)?;
                let mdp = make_gridworld_on(&layout, *goal, *step_reward, *goal_reward, *gamma)?;
                Ok((mdp, Some(layout)))
            }
            EnvCfg::Random {
                n_states,
                n_actions,
                gamma,
                reward_scale,
                env_seed,
            } => Ok((
                make_random_mdp(*n_states, *n_actions, *gamma, RngSeed(*env_seed), *reward_scale),
                None,
            )),
            EnvCfg::File { path } => {
                let mdp = load_mdp(path)
                    .with_context(|| format!("loading MDP from {}", path.display()))?;
                Ok((mdp, None))
            }
        }
    }
}

/// `[demos]`: read from `path`, or regenerate from `[demos.generate]`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DemosCfg {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub generate: Option<GenerateCfg>,
}

/// `[demos.generate]`: solve the soft-optimal expert on the true reward
/// and sample fixed-length episodes from it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateCfg {
    pub n_episodes: usize,
    pub horizon: usize,
    #[serde(default = "one")]
    pub expert_temperature: f64,
    /// Resample any episode that ever leaves this state set.
    #[serde(default)]
    pub accept_states: Option<Vec<usize>>,
    /// Accept `gamma^horizon` tails above 1e-4 (fixed-length benchmark
    /// episodes knowingly truncate the discounted occupancy).
    #[serde(default)]
    pub allow_short_horizon: bool,
}

impl GenerateCfg {
    /// Deterministically sample the demonstrations this table describes.
    pub fn generate(&self, mdp: &TabularMdp, seed: u64) -> Result<DemoDataset> {
        let Some(true_reward) = mdp.true_reward.clone() else {
            bail!("demo generation needs an environment with a ground-truth reward");
        };
        if !self.allow_short_horizon && !horizon_covers_discount(mdp.gamma, self.horizon) {
            bail!(
                "gamma^horizon = {:.3e} is not below 1e-4, so fixed-horizon demos truncate \
                 the discounted occupancy; raise horizon or set allow_short_horizon = true",
                mdp.gamma.powi(self.horizon as i32)
            );
        }
        let reward = RewardTable::new(true_reward)?;
        let q = soft_q_iteration(mdp, &reward, self.expert_temperature, EXPERT_TOL, EXPERT_MAX_ITERS)?;
        let expert = soft_policy(&q, self.expert_temperature)?;
        let accept: Option<HashSet<usize>> =
            self.accept_states.as_ref().map(|s| s.iter().copied().collect());
        Ok(sample_trajectories(
            mdp,
            &expert,
            self.n_episodes,
            self.horizon,
            RngSeed(seed),
            accept.as_ref(),
        )?)
    }
}

/// `[method]`, tagged by `name`. The tagged payloads are the library's
/// own config structs, so defaults and field names match its docs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MethodCfg {
    Iq(IqConfig),
    Bc(BcConfig),
    Sqil(SqilConfig),
    MaxentIrl(MaxEntIrlConfig),
}

impl MethodCfg {
    pub fn name(&self) -> &'static str {
        match self {
            MethodCfg::Iq(_) => "iq",
            MethodCfg::Bc(_) => "bc",
            MethodCfg::Sqil(_) => "sqil",
            MethodCfg::MaxentIrl(_) => "maxent_irl",
        }
    }
}

/// Behavioral-cloning settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    /// Laplace smoothing added to every action count.
    pub smoothing: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self { smoothing: 0.0 }
    }
}

/// Settings for soft Q-iteration on the demo-indicator reward.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SqilConfig {
    pub temperature: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SqilConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

/// `[eval]`: seeded rollout scoring shared by `train`, `eval`, and
/// `compare`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalCfg {
    #[serde(default = "default_rollouts")]
    pub n_rollouts: usize,
    pub horizon: usize,
    /// Greedy (argmax per state, ties to the lowest index) or sample the
    /// stochastic policy.
    #[serde(default = "yes")]
    pub greedy: bool,
}

fn default_rollouts() -> usize {
    300
}

fn yes() -> bool {
    true
}

/// `[compare]`: two or more `[[compare.methods]]` tables, each shaped
/// like `[method]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareCfg {
    pub methods: Vec<MethodCfg>,
}
