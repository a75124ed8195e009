//! Inverse soft-Q learning: imitation by maximizing one concave objective.
//!
//! Instead of the usual adversarial loop (inner RL against an outer reward
//! discriminator), the whole problem collapses to a single concave function
//! of the Q-table. Writing `x(s,a) = Q(s,a) − γ·E_{s′}[V(s′)]` for the
//! implied reward (the inverse soft Bellman image of `Q`), the objective is
//!
//! ```text
//! J(Q) = E_{μE}[x]  −  E_{w}[x − φ(x)]  −  SecondTerm(V)
//! ```
//!
//! where `μE` is the expert occupancy, `φ` comes from the
//! [divergence registry](crate::divergence), and `V` is the soft value of
//! `Q` (`V*` for the Q-only variant, `V^π` when an explicit policy is kept).
//! The regularizer weights `w` default to `μE`, which folds the first two
//! terms into the familiar `E_{μE}[φ(x)]`.
//!
//! `SecondTerm` estimates `(1−γ)·E_{p0}[V(s₀)]` and is where the
//! [`EstimatorMode`]s differ:
//!
//! * [`EstimatorMode::InitialState`] uses it literally;
//! * [`EstimatorMode::ExpertTelescoped`] uses
//!   `E_{μE}[V(s) − γ·E_{s′}V(s′)]`, which telescopes to the same value when
//!   `μE` is an exact occupancy of the MDP and needs only expert samples
//!   otherwise;
//! * [`EstimatorMode::MixedTelescoped`] averages that telescoped form over a
//!   `mix_fraction` blend of expert and current-policy occupancy — the
//!   online-style estimator. In this mode the regularizer weights `w`
//!   follow the same blend by default ([`IqConfig::regularize_mixture`]):
//!   penalizing implied rewards on states the *policy* visits is what lets
//!   the learner rank actions at states the expert never reached, which the
//!   dead-end recovery experiment relies on.
//!
//! The blend weights are refreshed every iteration but held constant within
//! one gradient step (a stop-gradient, mirroring replay-buffer estimates);
//! [`iq_objective_with_weights`]/[`iq_gradient_with_weights`] take the
//! frozen weights explicitly so finite-difference checks can share the
//! convention.
//!
//! Maximizing `J` is plain gradient ascent ([`iq_learn`]) with optional
//! backtracking; the softmax-of-Q policy, the implied reward table, and the
//! optimization traces come back in an [`IqResult`]. Everything works on
//! exact transition expectations — no sampling — so the theory's properties
//! (concavity, the policy-manifold minimum, the saddle condition
//! `φ′(r)·μE = μ_π`) are directly testable; see [`saddle_diagnostic`].

use serde::{Deserialize, Serialize};

use crate::divergence::{tv_q_bound_with, Divergence};
use crate::mdp::{compute_occupancy, OccupancyTable, PolicyTable, RngSeed, TabularMdp};
use crate::soft::{
    check_q_shape, inverse_soft_bellman, policy_value, soft_policy, soft_value_star, QTable,
    RewardTable, ValueTable,
};
use crate::{Error, Result};

/// How the `(1−γ)·E_{p0}[V]` term is estimated. See the [module docs](self).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    InitialState,
    ExpertTelescoped,
    MixedTelescoped,
}

/// Configuration for [`iq_learn`] and the objective/gradient evaluators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct IqConfig {
    pub divergence: Divergence,
    pub estimator_mode: EstimatorMode,
    /// Fraction of the telescoped term (and, with
    /// [`regularize_mixture`](Self::regularize_mixture), of the regularizer
    /// weights) taken from the current policy's occupancy in
    /// [`EstimatorMode::MixedTelescoped`].
    pub mix_fraction: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop when the gradient sup-norm falls below this.
    pub grad_tol: f64,
    pub temperature: f64,
    /// Train against a different discount than the MDP's own (the γ-ablation
    /// knob). Expert occupancy weights are whatever the caller supplies and
    /// are not re-derived.
    pub gamma_override: Option<f64>,
    pub seed: RngSeed,
    /// Alternate explicit-policy gradient steps with exact softmax policy
    /// updates instead of optimizing through `V*` directly.
    pub actor_critic: bool,
    /// Halve the step until the (iteration-frozen) objective does not
    /// decrease. Disable for fixed-step ascent.
    pub backtracking: bool,
    /// Carry the accepted step across iterations, doubling it after every
    /// acceptance (backtracking still halves on rejection). Converges far
    /// faster on ill-conditioned instances than restarting each iteration
    /// at `learning_rate`; turn off to restart every iteration.
    pub adaptive_step: bool,
    /// Start from seeded uniform(−0.1, 0.1) entries instead of zeros.
    pub random_init: bool,
    /// In mixed mode, average the regularizer `x − φ(x)` over the blended
    /// weights instead of the expert occupancy alone.
    pub regularize_mixture: bool,
}

impl Default for IqConfig {
    fn default() -> Self {
        Self {
            divergence: Divergence::Chi2 { alpha: 1.0 },
            estimator_mode: EstimatorMode::InitialState,
            mix_fraction: 0.5,
            learning_rate: 0.5,
            max_iters: 50_000,
            grad_tol: 1e-8,
            temperature: 1.0,
            gamma_override: None,
            seed: RngSeed(0),
            actor_critic: false,
            backtracking: true,
            adaptive_step: true,
            random_init: false,
            regularize_mixture: true,
        }
    }
}

impl IqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_fraction) {
            return Err(Error::InvalidArgument(format!(
                "mix_fraction must lie in [0,1], got {}",
                self.mix_fraction
            )));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.grad_tol <= 0.0 || self.grad_tol.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        if let Some(g) = self.gamma_override {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidDiscount(g));
            }
        }
        Ok(())
    }
}

/// Output of [`iq_learn`] / [`state_only_learn`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IqResult {
    pub q: QTable,
    pub policy: PolicyTable,
    /// The implied reward: the inverse soft Bellman image of `q` under the
    /// final policy.
    pub reward_sa: RewardTable,
    /// Objective value at the start of every iteration plus the final point.
    pub objective_trace: Vec<f64>,
    /// Gradient sup-norm alongside `objective_trace`.
    pub grad_norm_trace: Vec<f64>,
    /// Accepted gradient steps.
    pub iterations: usize,
    pub converged: bool,
    /// Times a reward argument left the divergence's domain during training
    /// (evaluated through the slope-capped extension, never fatal here).
    pub domain_clamps: usize,
}

fn effective_mdp<'a>(mdp: &'a TabularMdp, cfg: &IqConfig) -> Result<std::borrow::Cow<'a, TabularMdp>> {
    match cfg.gamma_override {
        Some(g) if g != mdp.gamma => Ok(std::borrow::Cow::Owned(mdp.with_gamma(g)?)),
        _ => Ok(std::borrow::Cow::Borrowed(mdp)),
    }
}

fn check_occ_shape(mdp: &TabularMdp, occ: &OccupancyTable) -> Result<()> {
    if occ.n_states() != mdp.n_states || occ.n_actions() != mdp.n_actions {
        return Err(Error::ShapeMismatch(format!(
            "occupancy is {}x{}, MDP is {}x{}",
            occ.n_states(),
            occ.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    Ok(())
}

/// `(P♯m)(t) = Σ_{s,a} m(s,a)·P(t|s,a)`: push a state-action measure one
/// step through the dynamics.
fn push_forward(mdp: &TabularMdp, m: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; mdp.n_states];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let w = m[s][a];
            if w != 0.0 {
                let row = &mdp.transition[s][a];
                for (t, slot) in out.iter_mut().enumerate() {
                    *slot += w * row[t];
                }
            }
        }
    }
    out
}

/// The `mix_fraction` blend of expert and current-policy occupancy used by
/// mixed mode. The policy occupancy is exact ([`compute_occupancy`]).
pub fn mixture_weights(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    expert_occ: &OccupancyTable,
    mix_fraction: f64,
) -> Result<OccupancyTable> {
    let policy_occ = compute_occupancy(mdp, policy)?;
    let mut rows = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    for (s, row) in rows.iter_mut().enumerate() {
        for (a, slot) in row.iter_mut().enumerate() {
            *slot = (1.0 - mix_fraction) * expert_occ.mass(s, a)
                + mix_fraction * policy_occ.mass(s, a);
        }
    }
    OccupancyTable::new(rows)
}

/// Everything an objective/gradient evaluation needs, with the mixture
/// weights already frozen.
struct EvalContext<'a> {
    mdp: &'a TabularMdp,
    cfg: &'a IqConfig,
    expert: &'a OccupancyTable,
    /// Blend weights; `Some` exactly in mixed mode.
    mix: Option<&'a OccupancyTable>,
}

impl<'a> EvalContext<'a> {
    /// Regularizer weight at `(s,a)`.
    fn reg_weight(&self, s: usize, a: usize) -> f64 {
        match self.mix {
            Some(w) if self.cfg.regularize_mixture => w.mass(s, a),
            _ => self.expert.mass(s, a),
        }
    }

    /// State coefficients `β` with `SecondTerm = Σ_s β(s)·V(s)`.
    fn second_term_coeffs(&self) -> Vec<f64> {
        let mdp = self.mdp;
        match self.cfg.estimator_mode {
            EstimatorMode::InitialState => {
                mdp.p0.iter().map(|&p| (1.0 - mdp.gamma) * p).collect()
            }
            EstimatorMode::ExpertTelescoped | EstimatorMode::MixedTelescoped => {
                let w = match self.cfg.estimator_mode {
                    EstimatorMode::ExpertTelescoped => self.expert,
                    _ => self.mix.expect("mixed mode carries weights"),
                };
                let pushed = push_forward(mdp, w.rows());
                let marginal = w.state_marginal();
                marginal
                    .iter()
                    .zip(&pushed)
                    .map(|(&m, &p)| m - mdp.gamma * p)
                    .collect()
            }
        }
    }

    /// Soft values and the policy whose softmax weights appear in `∂V/∂Q`.
    fn values(&self, q: &QTable, policy: Option<&PolicyTable>) -> Result<(ValueTable, PolicyTable)> {
        let tau = self.cfg.temperature;
        match policy {
            Some(p) => {
                self.mdp.check_policy(p)?;
                Ok((policy_value(q, p, tau)?, p.clone()))
            }
            None => Ok((soft_value_star(q, tau)?, soft_policy(q, tau)?)),
        }
    }

    /// Implied rewards `x(s,a) = Q(s,a) − γ·E_{s′}[V(s′)]`.
    fn x_table(&self, q: &QTable, v: &ValueTable) -> Vec<Vec<f64>> {
        let mdp = self.mdp;
        (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions)
                    .map(|a| q.get(s, a) - mdp.gamma * mdp.expected_next(s, a, v.as_slice()))
                    .collect()
            })
            .collect()
    }

    /// Objective value plus the number of weighted domain violations.
    /// `strict` turns TV violations into errors.
    fn objective(
        &self,
        q: &QTable,
        policy: Option<&PolicyTable>,
        strict: bool,
    ) -> Result<(f64, usize)> {
        let (v, _) = self.values(q, policy)?;
        let x = self.x_table(q, &v);
        let div = &self.cfg.divergence;
        let mut linear = 0.0;
        let mut reg = 0.0;
        let mut clamps = 0;
        for s in 0..self.mdp.n_states {
            for a in 0..self.mdp.n_actions {
                let e = self.expert.mass(s, a);
                let w = self.reg_weight(s, a);
                let xv = x[s][a];
                if e == 0.0 && w == 0.0 {
                    continue;
                }
                let (phi, _, extended) = div.phi_extended(xv);
                let violated = extended || !div.in_domain(xv);
                if violated {
                    clamps += 1;
                    if strict {
                        if let Divergence::Tv { r_max } = div {
                            if xv.abs() > r_max + 1e-9 {
                                return Err(Error::DomainViolation {
                                    value: xv,
                                    lo: -r_max,
                                    hi: *r_max,
                                });
                            }
                        }
                    }
                }
                linear += e * xv;
                reg += w * (xv - phi);
            }
        }
        let beta = self.second_term_coeffs();
        let second: f64 = beta.iter().zip(v.as_slice()).map(|(b, vv)| b * vv).sum();
        Ok((linear - reg - second, clamps))
    }

    /// Exact gradient of [`Self::objective`] in Q-space (weights frozen).
    fn gradient(&self, q: &QTable, policy: Option<&PolicyTable>) -> Result<(QTable, usize)> {
        let mdp = self.mdp;
        let (v, pi) = self.values(q, policy)?;
        let x = self.x_table(q, &v);
        let div = &self.cfg.divergence;
        // m(s,a) = μE − w·(1 − φ′(x)): the coefficient of ∂x(s,a)/∂Q.
        let mut m = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
        let mut clamps = 0;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let e = self.expert.mass(s, a);
                let w = self.reg_weight(s, a);
                if e == 0.0 && w == 0.0 {
                    continue;
                }
                let (_, slope, extended) = div.phi_extended(x[s][a]);
                if extended || !div.in_domain(x[s][a]) {
                    clamps += 1;
                }
                m[s][a] = e - w * (1.0 - slope);
            }
        }
        let pushed_m = push_forward(mdp, &m);
        let beta = self.second_term_coeffs();
        let mut grad = QTable::zeros(mdp.n_states, mdp.n_actions);
        for t in 0..mdp.n_states {
            let c = mdp.gamma * pushed_m[t] + beta[t];
            for b in 0..mdp.n_actions {
                grad.set(t, b, m[t][b] - pi.prob(t, b) * c);
            }
        }
        Ok((grad, clamps))
    }
}

fn build_context<'a>(
    mdp: &'a TabularMdp,
    expert_occ: &'a OccupancyTable,
    cfg: &'a IqConfig,
    mix: Option<&'a OccupancyTable>,
) -> Result<EvalContext<'a>> {
    check_occ_shape(mdp, expert_occ)?;
    if let Some(w) = mix {
        check_occ_shape(mdp, w)?;
    }
    if cfg.estimator_mode == EstimatorMode::MixedTelescoped && mix.is_none() {
        return Err(Error::InvalidArgument(
            "mixed mode needs blend weights; pass them or call the non-_with_weights entry point"
                .into(),
        ));
    }
    Ok(EvalContext {
        mdp,
        cfg,
        expert: expert_occ,
        mix,
    })
}

/// The imitation objective at `q`.
///
/// With `policy = None` the value side uses `V*` (the Q-only form); an
/// explicit policy substitutes `V^π`. In mixed mode the blend weights are
/// derived from the evaluation policy on the spot; use
/// [`iq_objective_with_weights`] to pin them (stop-gradient convention).
///
/// Errors with [`Error::DomainViolation`] if the TV entry sees an implied
/// reward outside its box; other divergences are continued through the
/// slope-capped extension.
pub fn iq_objective(
    mdp: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    cfg: &IqConfig,
    policy: Option<&PolicyTable>,
) -> Result<f64> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_q_shape(&mdp_eff, q)?;
    let mix = auto_mixture(&mdp_eff, q, expert_occ, cfg, policy)?;
    let ctx = build_context(&mdp_eff, expert_occ, cfg, mix.as_ref())?;
    ctx.objective(q, policy, true).map(|(j, _)| j)
}

/// [`iq_objective`] with explicitly frozen mixture weights (`None` outside
/// mixed mode).
pub fn iq_objective_with_weights(
    mdp: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    cfg: &IqConfig,
    policy: Option<&PolicyTable>,
    mix_weights: Option<&OccupancyTable>,
) -> Result<f64> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_q_shape(&mdp_eff, q)?;
    let ctx = build_context(&mdp_eff, expert_occ, cfg, mix_weights)?;
    ctx.objective(q, policy, true).map(|(j, _)| j)
}

/// Exact gradient of [`iq_objective`] with respect to every `Q(s,a)`.
///
/// The mixture weights (mixed mode) are treated as constants — the
/// stop-gradient convention — matching [`iq_objective_with_weights`] at the
/// weights derived from the current evaluation policy.
pub fn iq_gradient(
    mdp: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    cfg: &IqConfig,
    policy: Option<&PolicyTable>,
) -> Result<QTable> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_q_shape(&mdp_eff, q)?;
    let mix = auto_mixture(&mdp_eff, q, expert_occ, cfg, policy)?;
    let ctx = build_context(&mdp_eff, expert_occ, cfg, mix.as_ref())?;
    ctx.gradient(q, policy).map(|(g, _)| g)
}

/// [`iq_gradient`] with explicitly frozen mixture weights.
pub fn iq_gradient_with_weights(
    mdp: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    cfg: &IqConfig,
    policy: Option<&PolicyTable>,
    mix_weights: Option<&OccupancyTable>,
) -> Result<QTable> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_q_shape(&mdp_eff, q)?;
    let ctx = build_context(&mdp_eff, expert_occ, cfg, mix_weights)?;
    ctx.gradient(q, policy).map(|(g, _)| g)
}

fn auto_mixture(
    mdp_eff: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    cfg: &IqConfig,
    policy: Option<&PolicyTable>,
) -> Result<Option<OccupancyTable>> {
    if cfg.estimator_mode != EstimatorMode::MixedTelescoped {
        return Ok(None);
    }
    let pi = match policy {
        Some(p) => p.clone(),
        None => soft_policy(q, cfg.temperature)?,
    };
    Ok(Some(mixture_weights(
        mdp_eff,
        &pi,
        expert_occ,
        cfg.mix_fraction,
    )?))
}

const LINE_SEARCH_HALVINGS: usize = 60;
const MAX_TRIAL_STEP: f64 = 1e9;

fn init_table(mdp: &TabularMdp, cfg: &IqConfig) -> QTable {
    if cfg.random_init {
        use rand::Rng;
        let mut rng = cfg.seed.rng();
        let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                q.set(s, a, 0.2 * rng.gen::<f64>() - 0.1);
            }
        }
        q
    } else {
        QTable::zeros(mdp.n_states, mdp.n_actions)
    }
}

fn diverged(trace: &[f64], what: &str) -> Error {
    let tail: Vec<String> = trace
        .iter()
        .rev()
        .take(5)
        .rev()
        .map(|x| format!("{x:.6e}"))
        .collect();
    Error::NumericalFailure(format!(
        "{what} became non-finite; objective trace tail: [{}]",
        tail.join(", ")
    ))
}

/// Maximize the imitation objective by gradient ascent.
///
/// The Q-only variant (default) ascends `J*(Q)` directly; its trace is
/// nondecreasing when backtracking is on, by concavity in the exact modes.
/// The actor-critic variant alternates a critic gradient step on `J(π, Q)`
/// (actor frozen) with the exact softmax actor update `π ← softmax(Q/τ)`.
/// Because the actor update re-minimizes J over policies, backtracking
/// judges candidate steps on the post-update objective; and since the fresh
/// actor is exactly the softmax of the current table, the frozen-actor
/// gradient equals the Q-only gradient at every iterate — in this exact
/// tabular setting the two variants walk the same path up to rounding.
///
/// Under the TV entry the ascent runs on an unconstrained table `U` with
/// `Q = bound·tanh(U)` (see [`crate::divergence::tv_q_bound`]); gradients
/// and the convergence test then live in `U`-space.
pub fn iq_learn(
    mdp: &TabularMdp,
    expert_occ: &OccupancyTable,
    cfg: &IqConfig,
) -> Result<IqResult> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_occ_shape(&mdp_eff, expert_occ)?;
    let tau = cfg.temperature;
    let tv_bound = cfg
        .divergence
        .r_max()
        .map(|r| tv_q_bound_with(&mdp_eff, tau, r));

    // For TV, `param` is U and q = bound·tanh(U); otherwise param IS q.
    let mut param = init_table(&mdp_eff, cfg);
    let to_q = |p: &QTable| -> QTable {
        match tv_bound {
            Some(b) => {
                let mut q = p.clone();
                for s in 0..p.n_states() {
                    for a in 0..p.n_actions() {
                        q.set(s, a, b * p.get(s, a).tanh());
                    }
                }
                q
            }
            None => p.clone(),
        }
    };
    let mut q = to_q(&param);
    let mut policy = soft_policy(&q, tau)?;

    let mut objective_trace = Vec::new();
    let mut grad_norm_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut domain_clamps = 0;
    let mut trial_step = cfg.learning_rate;

    loop {
        let pi_eval = if cfg.actor_critic {
            policy.clone()
        } else {
            soft_policy(&q, tau)?
        };
        let policy_arg = cfg.actor_critic.then_some(&pi_eval);
        let mix = auto_mixture(&mdp_eff, &q, expert_occ, cfg, Some(&pi_eval))?;
        let mix = if cfg.estimator_mode == EstimatorMode::MixedTelescoped {
            mix
        } else {
            None
        };
        let ctx = build_context(&mdp_eff, expert_occ, cfg, mix.as_ref())?;

        let (j, _) = ctx.objective(&q, policy_arg, false)?;
        if !j.is_finite() {
            objective_trace.push(j);
            return Err(diverged(&objective_trace, "objective"));
        }
        // Line-search baseline. For the actor-critic variant the actor is
        // refreshed right after the step, so candidates are judged on the
        // refreshed (manifold) objective — comparing them under the frozen
        // actor would let the refresh undo the gain (the SAC update only
        // ever lowers J) and the alternation can cycle instead of climb.
        let j_ls = if cfg.actor_critic {
            ctx.objective(&q, None, false)?.0
        } else {
            j
        };
        let (grad_q, clamps) = ctx.gradient(&q, policy_arg)?;
        domain_clamps += clamps;
        let grad_param = match tv_bound {
            Some(b) => {
                // dQ/dU = b·(1 − tanh²U)
                let mut g = grad_q.clone();
                for s in 0..g.n_states() {
                    for a in 0..g.n_actions() {
                        let th = param.get(s, a).tanh();
                        g.set(s, a, grad_q.get(s, a) * b * (1.0 - th * th));
                    }
                }
                g
            }
            None => grad_q,
        };
        let gnorm = grad_param.sup_norm();
        if !gnorm.is_finite() {
            objective_trace.push(j);
            return Err(diverged(&objective_trace, "gradient"));
        }
        objective_trace.push(j);
        grad_norm_trace.push(gnorm);

        if gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }

        // Ascent step with optional backtracking against the
        // iteration-frozen objective (same weights, same policy argument).
        let mut step = if cfg.adaptive_step {
            trial_step
        } else {
            cfg.learning_rate
        };
        let mut accepted = false;
        for _ in 0..LINE_SEARCH_HALVINGS {
            let mut cand = param.clone();
            for s in 0..cand.n_states() {
                for a in 0..cand.n_actions() {
                    cand.set(s, a, param.get(s, a) + step * grad_param.get(s, a));
                }
            }
            let cand_q = to_q(&cand);
            let ls_policy_arg = if cfg.actor_critic { None } else { policy_arg };
            let (jc, _) = ctx.objective(&cand_q, ls_policy_arg, false)?;
            if jc.is_finite() && (!cfg.backtracking || jc >= j_ls) {
                param = cand;
                q = cand_q;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted: flat to numerical resolution.
            break;
        }
        trial_step = (step * 2.0).min(MAX_TRIAL_STEP);
        iterations += 1;
        if cfg.actor_critic {
            policy = soft_policy(&q, tau)?;
        }
    }

    let final_policy = if cfg.actor_critic {
        policy
    } else {
        soft_policy(&q, tau)?
    };
    let reward_sa = inverse_soft_bellman(&mdp_eff, &q, &final_policy, tau)?;
    Ok(IqResult {
        q,
        policy: final_policy,
        reward_sa,
        objective_trace,
        grad_norm_trace,
        iterations,
        converged,
        domain_clamps,
    })
}

/// The offline χ² form: `−E_{μE}[Q − V*(s)] + (1/4α)·E_{μE}[(Q − γE V*)²]`.
///
/// Algebraically equal to `−iq_objective` with `χ²(α)` in expert-telescoped
/// mode — the cross terms cancel exactly — so minimizing it is the same
/// ascent in disguise.
pub fn chi2_offline_objective(
    mdp: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    alpha: f64,
    temperature: f64,
) -> Result<f64> {
    if alpha <= 0.0 || alpha.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    check_q_shape(mdp, q)?;
    check_occ_shape(mdp, expert_occ)?;
    let v = soft_value_star(q, temperature)?;
    let mut first = 0.0;
    let mut second = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let w = expert_occ.mass(s, a);
            if w == 0.0 {
                continue;
            }
            let x = q.get(s, a) - mdp.gamma * mdp.expected_next(s, a, v.as_slice());
            first += w * (q.get(s, a) - v.get(s));
            second += w * x * x;
        }
    }
    Ok(-first + second / (4.0 * alpha))
}

fn check_state_marginal(mdp: &TabularMdp, marginal: &[f64]) -> Result<()> {
    if marginal.len() != mdp.n_states {
        return Err(Error::ShapeMismatch(format!(
            "state marginal has {} entries, MDP has {} states",
            marginal.len(),
            mdp.n_states
        )));
    }
    if marginal.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidDistribution(
            "state marginal entries must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = marginal.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution(format!(
            "state marginal sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Observations-only objective: expert *states* weighted by `marginal`, the
/// learner's own softmax policy supplying the action distribution:
///
/// ```text
/// J_so(Q) = Σ_s d_E(s)·Σ_a π_Q(a|s)·φ(x(s,a)) − (1−γ)·E_{p0}[V*]
/// ```
///
/// No expert action information is consumed. The second term is always the
/// initial-state form. Unlike the paired objective, the inner `π_Q` here IS
/// differentiated through (the policy is coupled to `Q`, not frozen), which
/// [`state_only_gradient`] accounts for.
pub fn state_only_objective(
    mdp: &TabularMdp,
    q: &QTable,
    expert_state_marginal: &[f64],
    cfg: &IqConfig,
) -> Result<f64> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_q_shape(&mdp_eff, q)?;
    check_state_marginal(&mdp_eff, expert_state_marginal)?;
    so_objective_impl(&mdp_eff, q, expert_state_marginal, cfg, None)
}

/// [`state_only_objective`] with the expert-term action distribution taken
/// from `pi_frozen` instead of `softmax(Q)` when given. The anchor and the
/// implied rewards always use the soft value of `q`.
fn so_objective_impl(
    mdp_eff: &TabularMdp,
    q: &QTable,
    expert_state_marginal: &[f64],
    cfg: &IqConfig,
    pi_frozen: Option<&PolicyTable>,
) -> Result<f64> {
    let tau = cfg.temperature;
    let v = soft_value_star(q, tau)?;
    let pi_soft;
    let pi = match pi_frozen {
        Some(p) => p,
        None => {
            pi_soft = soft_policy(q, tau)?;
            &pi_soft
        }
    };
    let div = &cfg.divergence;
    let mut first = 0.0;
    for s in 0..mdp_eff.n_states {
        let d = expert_state_marginal[s];
        if d == 0.0 {
            continue;
        }
        for a in 0..mdp_eff.n_actions {
            let x = q.get(s, a) - mdp_eff.gamma * mdp_eff.expected_next(s, a, v.as_slice());
            first += d * pi.prob(s, a) * div.phi_extended(x).0;
        }
    }
    let second: f64 = mdp_eff
        .p0
        .iter()
        .zip(v.as_slice())
        .map(|(&p, &vv)| (1.0 - mdp_eff.gamma) * p * vv)
        .sum();
    Ok(first - second)
}

/// Full gradient of [`state_only_objective`], differentiating through the
/// softmax policy as well as the values.
pub fn state_only_gradient(
    mdp: &TabularMdp,
    q: &QTable,
    expert_state_marginal: &[f64],
    cfg: &IqConfig,
) -> Result<QTable> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_q_shape(&mdp_eff, q)?;
    check_state_marginal(&mdp_eff, expert_state_marginal)?;
    so_gradient_impl(&mdp_eff, q, expert_state_marginal, cfg, None)
}

/// Gradient of the state-only objective. With `pi_frozen = Some(π_f)` the
/// expert-term action distribution is `π_f`, held constant (no softmax
/// reweighting term); value paths still differentiate through `softmax(Q)`.
fn so_gradient_impl(
    mdp_eff: &TabularMdp,
    q: &QTable,
    expert_state_marginal: &[f64],
    cfg: &IqConfig,
    pi_frozen: Option<&PolicyTable>,
) -> Result<QTable> {
    let tau = cfg.temperature;
    let v = soft_value_star(q, tau)?;
    let pi_soft = soft_policy(q, tau)?;
    let pi_expert_term = pi_frozen.unwrap_or(&pi_soft);
    let div = &cfg.divergence;
    let n_s = mdp_eff.n_states;
    let n_a = mdp_eff.n_actions;

    // Cache φ and φ′ at x(s,a), plus per-state π-averages of φ.
    let mut phi = vec![vec![0.0; n_a]; n_s];
    let mut slope = vec![vec![0.0; n_a]; n_s];
    let mut phi_avg = vec![0.0; n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let x = q.get(s, a) - mdp_eff.gamma * mdp_eff.expected_next(s, a, v.as_slice());
            let (p, sl, _) = div.phi_extended(x);
            phi[s][a] = p;
            slope[s][a] = sl;
            phi_avg[s] += pi_expert_term.prob(s, a) * p;
        }
    }
    // Backup coefficients: (P♯[d·π·φ′])(t).
    let weighted: Vec<Vec<f64>> = (0..n_s)
        .map(|s| {
            (0..n_a)
                .map(|a| expert_state_marginal[s] * pi_expert_term.prob(s, a) * slope[s][a])
                .collect()
        })
        .collect();
    let pushed = push_forward(mdp_eff, &weighted);

    let mut grad = QTable::zeros(n_s, n_a);
    for t in 0..n_s {
        let d = expert_state_marginal[t];
        for b in 0..n_a {
            let p_soft = pi_soft.prob(t, b);
            // Softmax reweighting of the φ average — only when the expert
            // term's policy is the live softmax.
            let softmax_part = match pi_frozen {
                None => d / tau * p_soft * (phi[t][b] - phi_avg[t]),
                Some(_) => 0.0,
            };
            // Direct x(t,b) movement, weighted by the expert-term policy.
            let direct = d * pi_expert_term.prob(t, b) * slope[t][b];
            // x of everything flowing into t, plus the initial-state term;
            // these differentiate V* and so carry the softmax policy.
            let backup = mdp_eff.gamma * p_soft * pushed[t];
            let initial = (1.0 - mdp_eff.gamma) * mdp_eff.p0[t] * p_soft;
            grad.set(t, b, softmax_part + direct - backup - initial);
        }
    }
    Ok(grad)
}

/// [`iq_learn`] for the observations-only objective (Q-only ascent; the
/// estimator-mode and TV-bound knobs do not apply here).
///
/// With `actor_critic` unset the ascent fully differentiates through the
/// softmax policy. With it set, each iteration instead freezes the current
/// softmax policy inside the expert term and ascends that partial objective;
/// at a fixed point the implied reward is constant across actions on visited
/// states and the policy's state occupancy tracks `expert_state_marginal`
/// through the regulariser's slope. On small MDPs the frozen-policy variant
/// is the one that actually recovers the expert's state distribution — the
/// fully differentiated objective can reach higher values on policies far
/// from the expert (see the guide's imitation chapter).
pub fn state_only_learn(
    mdp: &TabularMdp,
    expert_state_marginal: &[f64],
    cfg: &IqConfig,
) -> Result<IqResult> {
    cfg.validate()?;
    let mdp_eff = effective_mdp(mdp, cfg)?;
    check_state_marginal(&mdp_eff, expert_state_marginal)?;
    let tau = cfg.temperature;
    let mut q = init_table(&mdp_eff, cfg);
    let mut objective_trace = Vec::new();
    let mut grad_norm_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut trial_step = cfg.learning_rate;

    loop {
        // With actor_critic, the expert term of this iteration's objective
        // and gradient holds the current softmax policy fixed.
        let pi_f = if cfg.actor_critic {
            Some(soft_policy(&q, tau)?)
        } else {
            None
        };
        let j = so_objective_impl(&mdp_eff, &q, expert_state_marginal, cfg, pi_f.as_ref())?;
        if !j.is_finite() {
            objective_trace.push(j);
            return Err(diverged(&objective_trace, "objective"));
        }
        let grad = so_gradient_impl(&mdp_eff, &q, expert_state_marginal, cfg, pi_f.as_ref())?;
        let gnorm = grad.sup_norm();
        objective_trace.push(j);
        grad_norm_trace.push(gnorm);
        if gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let mut step = if cfg.adaptive_step {
            trial_step
        } else {
            cfg.learning_rate
        };
        let mut accepted = false;
        for _ in 0..LINE_SEARCH_HALVINGS {
            let mut cand = q.clone();
            for s in 0..cand.n_states() {
                for a in 0..cand.n_actions() {
                    cand.set(s, a, q.get(s, a) + step * grad.get(s, a));
                }
            }
            // Candidates are scored against the same frozen policy the
            // gradient used, so the line search and the step agree on what
            // is being ascended.
            let jc = so_objective_impl(&mdp_eff, &cand, expert_state_marginal, cfg, pi_f.as_ref())?;
            if jc.is_finite() && (!cfg.backtracking || jc >= j) {
                q = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trial_step = (step * 2.0).min(MAX_TRIAL_STEP);
        iterations += 1;
    }

    let policy = soft_policy(&q, tau)?;
    let reward_sa = inverse_soft_bellman(&mdp_eff, &q, &policy, tau)?;
    Ok(IqResult {
        q,
        policy,
        reward_sa,
        objective_trace,
        grad_norm_trace,
        iterations,
        converged,
        domain_clamps: 0,
    })
}

/// Per-transition reward view `r(s,a,s′) = Q(s,a) − γ·V(s′)`.
///
/// Its dynamics expectation over `s′` is exactly the inverse soft Bellman
/// reward at `(s,a)`.
#[derive(Clone, Debug)]
pub struct TransitionReward {
    q: QTable,
    v_next: ValueTable,
    gamma: f64,
}

impl TransitionReward {
    pub fn eval(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.q.get(s, a) - self.gamma * self.v_next.get(s_next)
    }

    /// `E_{s′∼P(·|s,a)}[r(s,a,s′)]`.
    pub fn expected(&self, mdp: &TabularMdp, s: usize, a: usize) -> f64 {
        self.q.get(s, a) - self.gamma * mdp.expected_next(s, a, self.v_next.as_slice())
    }
}

/// Package a Q-table and next-state values into a [`TransitionReward`].
pub fn recover_reward_transition(q: &QTable, v_next: &ValueTable, gamma: f64) -> TransitionReward {
    TransitionReward {
        q: q.clone(),
        v_next: v_next.clone(),
        gamma,
    }
}

/// First-order optimality residuals `φ′(r(s,a))·μE(s,a) − μ_{π_Q}(s,a)`.
///
/// At an interior maximizer of the Q-only objective these vanish: the
/// expert occupancy reweighted by `φ′` of the implied reward *is* the
/// learner's occupancy. Everything is recomputed from `q` on every call.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleReport {
    pub residual: Vec<Vec<f64>>,
    pub max_abs_residual: f64,
}

pub fn saddle_diagnostic(
    mdp: &TabularMdp,
    q: &QTable,
    expert_occ: &OccupancyTable,
    divergence: &Divergence,
    temperature: f64,
) -> Result<SaddleReport> {
    check_q_shape(mdp, q)?;
    check_occ_shape(mdp, expert_occ)?;
    let pi = soft_policy(q, temperature)?;
    let v = soft_value_star(q, temperature)?;
    let occ = compute_occupancy(mdp, &pi)?;
    let mut residual = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut max_abs: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let r = q.get(s, a) - mdp.gamma * mdp.expected_next(s, a, v.as_slice());
            let (_, slope, _) = divergence.phi_extended(r);
            let res = slope * expert_occ.mass(s, a) - occ.mass(s, a);
            residual[s][a] = res;
            max_abs = max_abs.max(res.abs());
        }
    }
    Ok(SaddleReport {
        residual,
        max_abs_residual: max_abs,
    })
}

/// The statistical distance between two occupancies induced by a divergence
/// entry, through its variational form
/// `d(ρ, ρ_E) = Σ_{s,a} sup_{r∈R} [ρ_E·φ(r) − ρ·r]`
/// evaluated pointwise in closed form.
///
/// Errors when the distance is infinite (policy mass where the expert has
/// none, for entries whose reward domain is unbounded below) or when a
/// closed form does not exist on zero expert mass (forward KL with
/// `ρ_E > 0 = ρ`).
pub fn divergence_value(
    policy_occ: &OccupancyTable,
    expert_occ: &OccupancyTable,
    divergence: &Divergence,
) -> Result<f64> {
    if policy_occ.n_states() != expert_occ.n_states()
        || policy_occ.n_actions() != expert_occ.n_actions()
    {
        return Err(Error::ShapeMismatch(
            "occupancy tables differ in shape".into(),
        ));
    }
    let mut total = 0.0;
    for s in 0..expert_occ.n_states() {
        for a in 0..expert_occ.n_actions() {
            let e = expert_occ.mass(s, a);
            let p = policy_occ.mass(s, a);
            total += match (e > 0.0, p > 0.0) {
                (false, false) => 0.0,
                (true, true) => {
                    let r = divergence.reward_estimator(p / e)?;
                    e * divergence.phi(r) - p * r
                }
                // Policy mass off the expert support: sup_r (−p·r).
                (false, true) => match divergence {
                    Divergence::Fkl => 0.0,
                    Divergence::Hellinger => p,
                    Divergence::Js => p * 2.0_f64.ln(),
                    Divergence::Tv { r_max } => p * r_max,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "{divergence} distance is infinite: policy mass at ({s},{a}) where the expert has none"
                        )))
                    }
                },
                // Expert mass the policy never matches: sup_r ρ_E·φ(r).
                (true, false) => match divergence {
                    Divergence::Rkl | Divergence::RklFix => 0.0,
                    Divergence::Hellinger => e,
                    Divergence::Js => e * 2.0_f64.ln(),
                    Divergence::Tv { r_max } => e * r_max,
                    Divergence::Chi2 { alpha } => e * alpha,
                    Divergence::Fkl => {
                        return Err(Error::InvalidArgument(format!(
                            "fkl distance is unbounded: expert mass at ({s},{a}) the policy never visits"
                        )))
                    }
                },
            };
        }
    }
    Ok(total)
}
