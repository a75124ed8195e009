//! `iqtab` — train and evaluate imitation methods on tabular MDPs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use iqtab_cli::commands::{cmd_compare, cmd_eval, cmd_gen_demos, cmd_train, RunArgs};

const DEFAULTS_HELP: &str = "\
Config defaults (TOML or JSON, chosen by file extension):
  seed = 0                       overridden by --seed
  output_dir                     overridden by --out
  [demos.generate]  expert_temperature = 1.0, accept_states unset,
                    allow_short_horizon = false
  [eval]            n_rollouts = 300, greedy = true (horizon is required)
  [method] name = \"iq\"          divergence = chi2 (alpha = 1),
                    estimator_mode = initial_state, mix_fraction = 0.5,
                    learning_rate = 0.5, max_iters = 50000, grad_tol = 1e-8,
                    temperature = 1.0, gamma_override unset,
                    actor_critic = false, backtracking = true,
                    adaptive_step = true, random_init = false,
                    regularize_mixture = true
  [method] name = \"bc\"          smoothing = 0.0
  [method] name = \"sqil\"        temperature = 1.0, tol = 1e-10,
                    max_iters = 100000
  [method] name = \"maxent_irl\"  learning_rate = 0.5, max_outer_iters = 2000,
                    inner_tol = 1e-10, grad_tol = 1e-6, occupancy_tol = 0.02,
                    smoothing = 0.0, temperature = 1.0,
                    state_action_features = false

Environment:
  IQTAB_THREADS caps evaluation worker threads. Episode RNG streams are
  indexed by episode, so the thread count never changes any number.";

#[derive(Parser)]
#[command(
    name = "iqtab",
    version,
    about = "Recover soft Q-functions, policies, and rewards from demonstrations on tabular MDPs",
    after_help = DEFAULTS_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (.toml or .json)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output_dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress progress output (files are still written)
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained artifact to re-score (default: <output_dir>/result.json)
    #[arg(long, value_name = "PATH")]
    result: Option<PathBuf>,
    /// Correlate episode reward sums instead of per-step rewards
    #[arg(long)]
    per_episode: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the soft-optimal expert and write demonstration episodes as JSONL
    GenDemos(CommonArgs),
    /// Train the configured method on demonstrations and write artifacts
    Train(CommonArgs),
    /// Re-score an existing trained artifact with fresh seeded rollouts
    Eval(EvalArgs),
    /// Train several methods on identical demos and compare them
    Compare(CommonArgs),
}

impl CommonArgs {
    fn into_run(self) -> RunArgs {
        RunArgs {
            config: self.config,
            seed: self.seed,
            out: self.out,
            quiet: self.quiet,
        }
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::GenDemos(common) => cmd_gen_demos(&common.into_run()),
        Cmd::Train(common) => cmd_train(&common.into_run()),
        Cmd::Eval(eval) => {
            let result = eval.result.clone();
            cmd_eval(&eval.common.into_run(), result.as_deref(), eval.per_episode)
        }
        Cmd::Compare(common) => cmd_compare(&common.into_run()),
    }
}
