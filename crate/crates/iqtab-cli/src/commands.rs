//! The four subcommands: `gen-demos`, `train`, `eval`, `compare`.
//!
//! Shared plumbing: an internal context resolves the config, the effective seed
//! (`--seed` overrides the file), the output directory (`--out` overrides
//! the file), and builds the environment once. Demonstrations come from
//! `[demos.generate]` (regenerated in memory, deterministic under the run
//! seed) or from `demos.path` as JSONL.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use iqtab::baselines::{bc_tabular, indicator_reward, maxent_irl};
use iqtab::envs::GridLayout;
use iqtab::eval::{expected_state_reward, greedy_from_policy, greedy_policy, pearson};
use iqtab::io::{atomic_write, load_demos, load_json, save_demos, save_json};
use iqtab::iq::{iq_learn, recover_reward_transition};
use iqtab::mdp::{compute_occupancy, empirical_occupancy, DemoDataset, RngSeed, TabularMdp};
use iqtab::soft::{
    inverse_soft_bellman_optimal, soft_policy, soft_q_iteration_with_stats, soft_value_star,
};

use crate::artifact::{
    grid_csv, reward_csv, CompareEntry, CompareReport, MetricsReport, PairCorrelation, PairRatio,
    TrainedArtifact,
};
use crate::config::{EnvCfg, EvalCfg, ExperimentConfig, MethodCfg};
use crate::rollout::{rollout, ActionRule, Rollouts, EVAL_STREAM};

/// Flags every subcommand accepts.
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    out_override: Option<PathBuf>,
    quiet: bool,
    mdp: TabularMdp,
    layout: Option<GridLayout>,
}

impl Ctx {
    fn new(args: &RunArgs) -> Result<Self> {
        let cfg = ExperimentConfig::load(&args.config)?;
        let seed = args.seed.unwrap_or(cfg.seed);
        let (mdp, layout) = cfg.env.build()?;
        Ok(Self {
            cfg,
            seed,
            out_override: args.out.clone(),
            quiet: args.quiet,
            mdp,
            layout,
        })
    }

    fn out_dir(&self) -> Result<PathBuf> {
        self.out_override
            .clone()
            .or_else(|| self.cfg.output_dir.clone())
            .context("no output directory: set output_dir in the config or pass --out")
    }

    /// Demos per the `[demos]` table: regenerate in memory when
    /// `[demos.generate]` is present, otherwise read `demos.path`;
    /// `None` when the config involves no demonstrations at all.
    fn demos(&self) -> Result<Option<DemoDataset>> {
        if let Some(gen) = &self.cfg.demos.generate {
            return Ok(Some(gen.generate(&self.mdp, self.seed)?));
        }
        if let Some(path) = &self.cfg.demos.path {
            let demos = load_demos(path)
                .with_context(|| format!("reading demos from {}", path.display()))?;
            demos.validate(&self.mdp)?;
            return Ok(Some(demos));
        }
        Ok(None)
    }

    fn required_demos(&self) -> Result<DemoDataset> {
        self.demos()?
            .context("no demonstrations: add [demos.generate] or demos.path to the config")
    }

    fn required_eval(&self) -> Result<EvalCfg> {
        self.cfg
            .eval
            .clone()
            .context("config has no [eval] table (horizon is required)")
    }

    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Mean undiscounted true-reward return over a dataset's episodes.
fn mean_demo_return(mdp: &TabularMdp, demos: &DemoDataset) -> Result<f64> {
    let mut per_episode: BTreeMap<u64, f64> = BTreeMap::new();
    for d in &demos.transitions {
        *per_episode.entry(d.episode).or_insert(0.0) += mdp.true_reward_at(d.s, d.a)?;
    }
    if per_episode.is_empty() {
        bail!("demo dataset is empty");
    }
    Ok(per_episode.values().sum::<f64>() / per_episode.len() as f64)
}

/// Train one method on the demos. The run seed governs all training
/// stochasticity, overriding any seed inside the method table.
pub fn train_method(
    mdp: &TabularMdp,
    demos: &DemoDataset,
    method: &MethodCfg,
    seed: u64,
) -> Result<TrainedArtifact> {
    let start = Instant::now();
    let mut art = match method {
        MethodCfg::Iq(cfg) => {
            let mut cfg = cfg.clone();
            cfg.seed = RngSeed(seed);
            let expert = empirical_occupancy(demos, mdp)?;
            let out = iq_learn(mdp, &expert, &cfg)?;
            TrainedArtifact {
                method: "iq".into(),
                seed,
                gamma: cfg.gamma_override.unwrap_or(mdp.gamma),
                temperature: Some(cfg.temperature),
                q: Some(out.q),
                policy: out.policy,
                reward_sa: Some(out.reward_sa),
                iterations: out.iterations,
                converged: out.converged,
                wall_clock_seconds: 0.0,
                objective_trace: out.objective_trace,
                grad_norm_trace: out.grad_norm_trace,
            }
        }
        MethodCfg::Bc(cfg) => {
            let policy = bc_tabular(demos, mdp, cfg.smoothing)?;
            TrainedArtifact {
                method: "bc".into(),
                seed,
                gamma: mdp.gamma,
                temperature: None,
                q: None,
                policy,
                reward_sa: None,
                iterations: 1,
                converged: true,
                wall_clock_seconds: 0.0,
                objective_trace: Vec::new(),
                grad_norm_trace: Vec::new(),
            }
        }
        MethodCfg::Sqil(cfg) => {
            // The named baseline wrapper discards the sweep count, so run
            // its documented decomposition: soft Q-iteration on the
            // demo-indicator reward.
            let reward = indicator_reward(demos, mdp)?;
            let (q, sweeps) =
                soft_q_iteration_with_stats(mdp, &reward, cfg.temperature, cfg.tol, cfg.max_iters)?;
            let policy = soft_policy(&q, cfg.temperature)?;
            let implied = inverse_soft_bellman_optimal(mdp, &q, cfg.temperature)?;
            TrainedArtifact {
                method: "sqil".into(),
                seed,
                gamma: mdp.gamma,
                temperature: Some(cfg.temperature),
                q: Some(q),
                policy,
                reward_sa: Some(implied),
                iterations: sweeps,
                converged: true,
                wall_clock_seconds: 0.0,
                objective_trace: Vec::new(),
                grad_norm_trace: Vec::new(),
            }
        }
        MethodCfg::MaxentIrl(cfg) => {
            let mut cfg = cfg.clone();
            cfg.seed = RngSeed(seed);
            let expert = empirical_occupancy(demos, mdp)?;
            let out = maxent_irl(mdp, &expert, &cfg)?;
            TrainedArtifact {
                method: "maxent_irl".into(),
                seed,
                gamma: mdp.gamma,
                temperature: None,
                q: None,
                policy: out.policy,
                reward_sa: Some(out.reward_sa),
                iterations: out.outer_iterations,
                converged: out.converged,
                wall_clock_seconds: 0.0,
                objective_trace: Vec::new(),
                grad_norm_trace: out.grad_norm_trace,
            }
        }
    };
    art.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(art)
}

/// Seeded evaluation rollouts of an artifact: greedy plays `argmax` of
/// the Q-table when one is carried (ties to the lowest index), else of
/// the policy probabilities; stochastic samples the policy.
pub fn roll_artifact(
    mdp: &TabularMdp,
    artifact: &TrainedArtifact,
    eval: &EvalCfg,
    seed: u64,
) -> Result<Rollouts> {
    mdp.check_policy(&artifact.policy)?;
    let base = RngSeed(seed).stream(EVAL_STREAM);
    if eval.greedy {
        let actions = match &artifact.q {
            Some(q) => greedy_policy(q),
            None => greedy_from_policy(&artifact.policy),
        };
        rollout(
            mdp,
            &ActionRule::Deterministic(&actions),
            eval.n_rollouts,
            eval.horizon,
            base,
        )
    } else {
        rollout(
            mdp,
            &ActionRule::Stochastic(&artifact.policy),
            eval.n_rollouts,
            eval.horizon,
            base,
        )
    }
}

/// Recovered-vs-true reward correlation along the rollouts: per
/// transition (`Q(s,a) − γ·V*(s′)` for Q-carrying methods, the recovered
/// `r(s,a)` otherwise) or per episode-sum. `None` when the method
/// recovers no reward or the correlation is undefined (constant series).
fn reward_correlation(
    mdp: &TabularMdp,
    artifact: &TrainedArtifact,
    rolls: &Rollouts,
    per_episode: bool,
) -> Result<Option<f64>> {
    let recovered: Vec<f64> = if let Some(q) = &artifact.q {
        let tau = artifact
            .temperature
            .context("artifact carries a Q-table but no temperature")?;
        let v = soft_value_star(q, tau)?;
        let tr = recover_reward_transition(q, &v, artifact.gamma);
        rolls
            .transitions
            .iter()
            .map(|&(s, a, s2)| tr.eval(s, a, s2))
            .collect()
    } else if let Some(r) = &artifact.reward_sa {
        rolls
            .transitions
            .iter()
            .map(|&(s, a, _)| r.get(s, a))
            .collect()
    } else {
        return Ok(None);
    };
    let mut truth = Vec::with_capacity(rolls.transitions.len());
    for &(s, a, _) in &rolls.transitions {
        truth.push(mdp.true_reward_at(s, a)?);
    }
    let (xs, ys) = if per_episode {
        let sums = |v: &[f64]| -> Vec<f64> {
            v.chunks(rolls.horizon).map(|c| c.iter().sum()).collect()
        };
        (sums(&recovered), sums(&truth))
    } else {
        (recovered, truth)
    };
    Ok(pearson(&xs, &ys).ok())
}

/// Assemble `metrics.json` from an artifact and its rollouts. `wall` is
/// the training time for `train`/`compare` and the evaluation time for
/// `eval`.
pub fn build_metrics(
    mdp: &TabularMdp,
    artifact: &TrainedArtifact,
    rolls: &Rollouts,
    demos: Option<&DemoDataset>,
    per_episode: bool,
    wall: f64,
) -> Result<MetricsReport> {
    let correlation = reward_correlation(mdp, artifact, rolls, per_episode)?;
    let tv = match demos {
        Some(d) => {
            let learned = compute_occupancy(mdp, &artifact.policy)?;
            let empirical = empirical_occupancy(d, mdp)?;
            Some(learned.tv_distance(&empirical))
        }
        None => None,
    };
    Ok(MetricsReport {
        mean_return: rolls.mean_return(),
        std_return: rolls.std_return(),
        pearson_reward_correlation: correlation,
        occupancy_tv_to_expert: tv,
        wall_clock_seconds: wall,
        iterations: artifact.iterations,
        converged: artifact.converged,
    })
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) => format!("{v:.digits$}"),
        None => "n/a".into(),
    }
}

/// `gen-demos`: solve the expert, sample episodes, write JSONL.
pub fn cmd_gen_demos(args: &RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let gen = ctx
        .cfg
        .demos
        .generate
        .clone()
        .context("gen-demos needs a [demos.generate] table")?;
    let demos = gen.generate(&ctx.mdp, ctx.seed)?;
    let path = match &ctx.cfg.demos.path {
        Some(p) => p.clone(),
        None => ctx.out_dir()?.join("demos.jsonl"),
    };
    save_demos(&path, &demos)?;
    let mean = mean_demo_return(&ctx.mdp, &demos)?;
    ctx.say(&format!(
        "wrote {} episode(s) ({} transitions) to {}",
        demos.n_episodes(),
        demos.len(),
        path.display()
    ));
    ctx.say(&format!(
        "expert mean return over written episodes: {mean:.2}"
    ));
    Ok(())
}

/// `train`: obtain demos, train `[method]`, evaluate per `[eval]`, write
/// `result.json`, reward CSVs, and `metrics.json`.
pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let out = ctx.out_dir()?;
    let method = ctx
        .cfg
        .method
        .clone()
        .context("train needs a [method] table")?;
    let eval_cfg = ctx.required_eval()?;
    let demos = ctx.required_demos()?;

    let artifact = train_method(&ctx.mdp, &demos, &method, ctx.seed)?;
    let rolls = roll_artifact(&ctx.mdp, &artifact, &eval_cfg, ctx.seed)?;
    let metrics = build_metrics(
        &ctx.mdp,
        &artifact,
        &rolls,
        Some(&demos),
        false,
        artifact.wall_clock_seconds,
    )?;

    save_json(&out.join("result.json"), &artifact)?;
    let mut files = vec!["result.json"];
    if let Some(r) = &artifact.reward_sa {
        atomic_write(&out.join("reward_sa.csv"), reward_csv(r).as_bytes())?;
        files.push("reward_sa.csv");
        if let (Some(layout), EnvCfg::Gridworld { width, height, .. }) = (&ctx.layout, &ctx.cfg.env)
        {
            let state_values = expected_state_reward(r, &artifact.policy)?;
            let csv = grid_csv(&state_values, layout, *width, *height);
            atomic_write(&out.join("reward_grid.csv"), csv.as_bytes())?;
            files.push("reward_grid.csv");
        }
    }
    save_json(&out.join("metrics.json"), &metrics)?;
    files.push("metrics.json");

    ctx.say(&format!(
        "method {}: converged={} iterations={} wall={:.2}s",
        artifact.method, artifact.converged, artifact.iterations, artifact.wall_clock_seconds
    ));
    ctx.say(&format!(
        "mean return {:.2} ± {:.2} over {} {} rollouts",
        metrics.mean_return,
        metrics.std_return,
        eval_cfg.n_rollouts,
        if eval_cfg.greedy { "greedy" } else { "stochastic" }
    ));
    ctx.say(&format!(
        "reward correlation {}, occupancy TV to expert {}",
        fmt_opt(metrics.pearson_reward_correlation, 3),
        fmt_opt(metrics.occupancy_tv_to_expert, 4)
    ));
    ctx.say(&format!("artifacts in {}: {}", out.display(), files.join(", ")));
    Ok(())
}

/// `eval`: re-score an existing `result.json` with fresh seeded rollouts
/// and rewrite `metrics.json`.
pub fn cmd_eval(args: &RunArgs, result: Option<&Path>, per_episode: bool) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let out = ctx.out_dir()?;
    let result_path = match result {
        Some(p) => p.to_path_buf(),
        None => out.join("result.json"),
    };
    let artifact: TrainedArtifact = load_json(&result_path)
        .with_context(|| format!("reading trained artifact {}", result_path.display()))?;
    let eval_cfg = ctx.required_eval()?;

    let start = Instant::now();
    let rolls = roll_artifact(&ctx.mdp, &artifact, &eval_cfg, ctx.seed)?;
    let wall = start.elapsed().as_secs_f64();
    let demos = ctx.demos()?;
    let metrics = build_metrics(&ctx.mdp, &artifact, &rolls, demos.as_ref(), per_episode, wall)?;
    save_json(&out.join("metrics.json"), &metrics)?;

    ctx.say(&format!(
        "re-scored {}: mean return {:.2} ± {:.2} over {} {} rollouts",
        result_path.display(),
        metrics.mean_return,
        metrics.std_return,
        eval_cfg.n_rollouts,
        if eval_cfg.greedy { "greedy" } else { "stochastic" }
    ));
    ctx.say(&format!(
        "reward correlation {}{}, occupancy TV to expert {}",
        fmt_opt(metrics.pearson_reward_correlation, 3),
        if per_episode { " (per-episode sums)" } else { "" },
        fmt_opt(metrics.occupancy_tv_to_expert, 4)
    ));
    ctx.say(&format!("wrote {}", out.join("metrics.json").display()));
    Ok(())
}

/// `compare`: train every listed method on the same demos and seed,
/// evaluate each, and write `compare.json`.
pub fn cmd_compare(args: &RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let out = ctx.out_dir()?;
    let compare = ctx
        .cfg
        .compare
        .clone()
        .context("compare needs a [compare] table with [[compare.methods]] entries")?;
    if compare.methods.len() < 2 {
        bail!("compare needs at least two [[compare.methods]] entries");
    }
    let demos = ctx.required_demos()?;
    let eval_cfg = ctx.required_eval()?;

    let mut entries = Vec::new();
    let mut artifacts = Vec::new();
    for method in &compare.methods {
        let artifact = train_method(&ctx.mdp, &demos, method, ctx.seed)?;
        let rolls = roll_artifact(&ctx.mdp, &artifact, &eval_cfg, ctx.seed)?;
        let metrics = build_metrics(
            &ctx.mdp,
            &artifact,
            &rolls,
            Some(&demos),
            false,
            artifact.wall_clock_seconds,
        )?;
        entries.push(CompareEntry {
            name: method.name().to_string(),
            metrics,
        });
        artifacts.push(artifact);
    }

    let mut reward_agreement = Vec::new();
    let mut wall_clock = Vec::new();
    for i in 0..artifacts.len() {
        for j in (i + 1)..artifacts.len() {
            let correlation = match (&artifacts[i].reward_sa, &artifacts[j].reward_sa) {
                (Some(ra), Some(rb)) => {
                    let sa = expected_state_reward(ra, &artifacts[i].policy)?;
                    let sb = expected_state_reward(rb, &artifacts[j].policy)?;
                    pearson(&sa, &sb).ok()
                }
                _ => None,
            };
            reward_agreement.push(PairCorrelation {
                a: entries[i].name.clone(),
                b: entries[j].name.clone(),
                state_reward_pearson: correlation,
            });
            wall_clock.push(PairRatio {
                a: entries[i].name.clone(),
                b: entries[j].name.clone(),
                ratio: artifacts[i].wall_clock_seconds / artifacts[j].wall_clock_seconds,
            });
        }
    }

    let report = CompareReport {
        methods: entries,
        reward_agreement,
        wall_clock,
    };
    save_json(&out.join("compare.json"), &report)?;
    if !ctx.quiet {
        print!("{}", compare_table(&report));
        println!("wrote {}", out.join("compare.json").display());
    }
    Ok(())
}

/// Plain-text rendering of a comparison report.
pub fn compare_table(report: &CompareReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>12} {:>8} {:>10} {:>11} {:>8}\n",
        "method", "mean_return", "std", "converged", "iterations", "wall_s"
    ));
    for entry in &report.methods {
        let m = &entry.metrics;
        out.push_str(&format!(
            "{:<12} {:>12.2} {:>8.2} {:>10} {:>11} {:>8.2}\n",
            entry.name, m.mean_return, m.std_return, m.converged, m.iterations, m.wall_clock_seconds
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<26} {:>22} {:>12}\n",
        "pair", "state_reward_pearson", "wall_ratio"
    ));
    for (corr, ratio) in report.reward_agreement.iter().zip(&report.wall_clock) {
        out.push_str(&format!(
            "{:<26} {:>22} {:>12.3}\n",
            format!("{} vs {}", corr.a, corr.b),
            fmt_opt(corr.state_reward_pearson, 3),
            ratio.ratio
        ));
    }
    out
}
