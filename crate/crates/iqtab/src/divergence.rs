//! The φ registry: which statistical distance the imitation objective drives.
//!
//! Each entry is a concave scalar function `φ` on a reward domain `R`,
//! together with its derivative, the closed-form optimal-reward estimator
//! `u ↦ r` with `φ′(r) = u` (where `u = ρ/ρ_E` is an occupancy ratio), and
//! the underlying convex pair `(f, f*)` satisfying `φ(x) = −f*(−x)` on `R`.
//! Choosing an entry chooses the divergence `d(ρ, ρ_E)` that the imitation
//! objective minimizes at its saddle point.
//!
//! Outside its domain a φ like `1 + ln x` is undefined, but an optimizer's
//! line search may still probe such points. [`Divergence::phi_extended`]
//! therefore continues each φ linearly past the point where its slope
//! reaches [`PHI_SLOPE_CAP`]: the extension is C¹, still concave, and its
//! steep slope pushes iterates back into the domain. Callers that must not
//! silently accept out-of-domain rewards check [`Divergence::in_domain`]
//! instead.

use serde::{Deserialize, Serialize};

use crate::mdp::TabularMdp;
use crate::{Error, Result};

/// Slope at which a φ with a bounded domain is continued linearly.
pub const PHI_SLOPE_CAP: f64 = 1e6;

/// Default reward bound for the total-variation entry.
pub const TV_DEFAULT_R_MAX: f64 = 0.5;

/// A concave regularizer choice. See the [module docs](self) for the role
/// these play; see [`catalog`] for the full list.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// Forward KL: `φ(x) = 1 + ln x` on `x > 0`.
    Fkl,
    /// Reverse KL: `φ(x) = −e^{−(x+1)}`.
    Rkl,
    /// Reverse KL, exponential-form fix: `φ(x) = −e^{−x}`.
    RklFix,
    /// Squared Hellinger: `φ(x) = x/(1+x)` on `x > −1`.
    Hellinger,
    /// Scaled Pearson χ²: `φ(x) = x − x²/(4α)`.
    Chi2 { alpha: f64 },
    /// Total variation: `φ(x) = x` on `|x| ≤ r_max`.
    Tv { r_max: f64 },
    /// Jensen–Shannon: `φ(x) = ln(2 − e^{−x})` on `x > −ln 2`.
    Js,
}

/// All registry entries at their default parameters (χ² at `α = 1`, TV at
/// `r_max = 1/2`).
pub fn catalog() -> Vec<Divergence> {
    vec![
        Divergence::Fkl,
        Divergence::Rkl,
        Divergence::RklFix,
        Divergence::Hellinger,
        Divergence::Chi2 { alpha: 1.0 },
        Divergence::Tv {
            r_max: TV_DEFAULT_R_MAX,
        },
        Divergence::Js,
    ]
}

/// χ² entry with the quadratic penalty scaled by `α`: `φ(x) = x − x²/(4α)`.
/// Scaling `α` scales the induced divergence by the same factor.
pub fn make_chi2(alpha: f64) -> Result<Divergence> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "chi2 alpha must be positive, got {alpha}"
        )));
    }
    Ok(Divergence::Chi2 { alpha })
}

/// TV entry with a custom reward bound.
pub fn make_tv(r_max: f64) -> Result<Divergence> {
    if r_max <= 0.0 || !r_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tv reward bound must be positive, got {r_max}"
        )));
    }
    Ok(Divergence::Tv { r_max })
}

/// Build an entry from its CLI name plus optional parameters.
pub fn from_name(name: &str, alpha: Option<f64>, r_max: Option<f64>) -> Result<Divergence> {
    match name {
        "fkl" => Ok(Divergence::Fkl),
        "rkl" => Ok(Divergence::Rkl),
        "rkl_fix" => Ok(Divergence::RklFix),
        "hellinger" => Ok(Divergence::Hellinger),
        "chi2" => make_chi2(alpha.unwrap_or(1.0)),
        "tv" => make_tv(r_max.unwrap_or(TV_DEFAULT_R_MAX)),
        "js" => Ok(Divergence::Js),
        other => Err(Error::InvalidArgument(format!(
            "unknown divergence '{other}' (expected one of fkl, rkl, rkl_fix, hellinger, chi2, tv, js)"
        ))),
    }
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Chi2 { alpha } => write!(fm, "chi2(alpha={alpha})"),
            Divergence::Tv { r_max } => write!(fm, "tv(r_max={r_max})"),
            other => write!(fm, "{}", other.name()),
        }
    }
}

impl Divergence {
    pub fn name(&self) -> &'static str {
        match self {
            Divergence::Fkl => "fkl",
            Divergence::Rkl => "rkl",
            Divergence::RklFix => "rkl_fix",
            Divergence::Hellinger => "hellinger",
            Divergence::Chi2 { .. } => "chi2",
            Divergence::Tv { .. } => "tv",
            Divergence::Js => "js",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Divergence::Chi2 { alpha } => Some(*alpha),
            _ => None,
        }
    }

    pub fn r_max(&self) -> Option<f64> {
        match self {
            Divergence::Tv { r_max } => Some(*r_max),
            _ => None,
        }
    }

    /// The reward domain as `(lo, hi)`; open ends are reported at their
    /// boundary value, unbounded ends as infinities. Only TV's interval is
    /// closed.
    pub fn reward_domain(&self) -> (f64, f64) {
        match self {
            Divergence::Fkl => (0.0, f64::INFINITY),
            Divergence::Hellinger => (-1.0, f64::INFINITY),
            Divergence::Js => (-(2.0_f64.ln()), f64::INFINITY),
            Divergence::Tv { r_max } => (-r_max, *r_max),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        match self {
            Divergence::Tv { r_max } => x.abs() <= *r_max,
            _ => x > self.reward_domain().0,
        }
    }

    /// `φ(x)`: the raw concave function, which may be non-finite outside the
    /// domain. Optimization paths use [`Self::phi_extended`] instead.
    pub fn phi(&self, x: f64) -> f64 {
        match self {
            Divergence::Fkl => 1.0 + x.ln(),
            Divergence::Rkl => -(-(x + 1.0)).exp(),
            Divergence::RklFix => -(-x).exp(),
            Divergence::Hellinger => x / (1.0 + x),
            Divergence::Chi2 { alpha } => x - x * x / (4.0 * alpha),
            Divergence::Tv { .. } => x,
            Divergence::Js => (2.0 - (-x).exp()).ln(),
        }
    }

    /// `φ′(x)`.
    pub fn phi_prime(&self, x: f64) -> f64 {
        match self {
            Divergence::Fkl => 1.0 / x,
            Divergence::Rkl => (-(x + 1.0)).exp(),
            Divergence::RklFix => (-x).exp(),
            Divergence::Hellinger => 1.0 / ((1.0 + x) * (1.0 + x)),
            Divergence::Chi2 { alpha } => 1.0 - x / (2.0 * alpha),
            Divergence::Tv { .. } => 1.0,
            Divergence::Js => (-x).exp() / (2.0 - (-x).exp()),
        }
    }

    /// Leftmost point kept by the slope-capped extension: where
    /// `φ′ = PHI_SLOPE_CAP` for domains bounded below, `−∞` otherwise.
    fn extension_edge(&self) -> f64 {
        let c = PHI_SLOPE_CAP;
        match self {
            // 1/x = c
            Divergence::Fkl => 1.0 / c,
            // (1+x)^{-2} = c
            Divergence::Hellinger => -1.0 + 1.0 / c.sqrt(),
            // e^{-x}/(2-e^{-x}) = c  ⇒  e^{-x} = 2c/(1+c)
            Divergence::Js => -(2.0 * c / (1.0 + c)).ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    /// `φ` continued linearly below the slope cap: returns
    /// `(value, slope, extended)`. Inside the kept region this is exactly
    /// `(φ(x), φ′(x), false)`; below the edge `e` it is
    /// `(φ(e) + cap·(x−e), cap, true)` — continuous, C¹, and concave.
    ///
    /// TV is never extended here: its φ is the identity on the whole line
    /// and its bound is enforced by the caller.
    pub fn phi_extended(&self, x: f64) -> (f64, f64, bool) {
        let e = self.extension_edge();
        if x >= e {
            (self.phi(x), self.phi_prime(x), false)
        } else {
            (self.phi(e) + PHI_SLOPE_CAP * (x - e), PHI_SLOPE_CAP, true)
        }
    }

    /// Closed-form optimal reward at occupancy ratio `u = ρ/ρ_E`, the `r`
    /// with `φ′(r) = u` (TV uses the sign form, with `r = 0` at the
    /// nondifferentiable point `u = 1`).
    ///
    /// Errors where the estimator is undefined: negative ratios, and `u = 0`
    /// for entries whose closed form diverges there.
    pub fn reward_estimator(&self, u: f64) -> Result<f64> {
        if u < 0.0 || !u.is_finite() {
            return Err(Error::EstimatorUndefined);
        }
        let r = match self {
            Divergence::Fkl => 1.0 / u,
            Divergence::Rkl => -(1.0 + u.ln()),
            Divergence::RklFix => -u.ln(),
            Divergence::Hellinger => 1.0 / u.sqrt() - 1.0,
            Divergence::Chi2 { alpha } => 2.0 * alpha * (1.0 - u),
            Divergence::Tv { r_max } => {
                if u == 1.0 {
                    0.0
                } else {
                    r_max * (1.0 - u).signum()
                }
            }
            Divergence::Js => ((1.0 + u) / (2.0 * u)).ln(),
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::EstimatorUndefined)
        }
    }

    /// Whether `φ` is non-decreasing on its domain. χ² is the only entry
    /// that bends back down (for `x > 2α`).
    pub fn is_non_decreasing(&self) -> bool {
        !matches!(self, Divergence::Chi2 { .. })
    }

    /// The convex `f` with `φ(x) = −f*(−x)`, evaluated at ratio `t ≥ 0`.
    /// Documentation/test companion; `f(1) = 0` except for the
    /// exponential-form reverse-KL fix, which drops a constant (`f(1) = −1`)
    /// without moving the optimizer.
    pub fn f(&self, t: f64) -> f64 {
        let xlnx = |t: f64| if t > 0.0 { t * t.ln() } else { 0.0 };
        match self {
            Divergence::Fkl => -t.ln(),
            Divergence::Rkl => xlnx(t),
            Divergence::RklFix => xlnx(t) - t,
            Divergence::Hellinger => {
                let d = t.sqrt() - 1.0;
                d * d
            }
            Divergence::Chi2 { alpha } => alpha * (t - 1.0) * (t - 1.0),
            Divergence::Tv { r_max } => 2.0 * r_max * (t - 1.0).abs(),
            Divergence::Js => xlnx(t) - (1.0 + t) * ((1.0 + t) / 2.0).ln(),
        }
    }

    /// The convex conjugate `f*(y) = sup_t(ty − f(t))` in closed form.
    pub fn f_star(&self, y: f64) -> f64 {
        match self {
            Divergence::Fkl => {
                if y < 0.0 {
                    -1.0 - (-y).ln()
                } else {
                    f64::INFINITY
                }
            }
            Divergence::Rkl => (y - 1.0).exp(),
            Divergence::RklFix => y.exp(),
            Divergence::Hellinger => {
                if y < 1.0 {
                    y / (1.0 - y)
                } else {
                    f64::INFINITY
                }
            }
            Divergence::Chi2 { alpha } => y + y * y / (4.0 * alpha),
            Divergence::Tv { r_max } => {
                let b = 2.0 * r_max;
                if y > b {
                    f64::INFINITY
                } else {
                    y.max(-b)
                }
            }
            Divergence::Js => {
                if y < 2.0_f64.ln() {
                    -(2.0 - y.exp()).ln()
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Sup-norm bound on any soft Q consistent with TV's reward range:
/// `(1/2 + τ·ln|A|)/(1 − γ)`. Optimizing under TV re-parameterizes Q inside
/// this box instead of chasing the nondifferentiable estimator.
pub fn tv_q_bound(mdp: &TabularMdp, temperature: f64) -> f64 {
    tv_q_bound_with(mdp, temperature, TV_DEFAULT_R_MAX)
}

/// [`tv_q_bound`] with an explicit reward bound.
pub fn tv_q_bound_with(mdp: &TabularMdp, temperature: f64, r_max: f64) -> f64 {
    (r_max + temperature * (mdp.n_actions as f64).ln()) / (1.0 - mdp.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_loop_mdp, make_random_mdp};
    use crate::mdp::RngSeed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// A bounded sampling window inside each entry's domain.
    fn domain_window(d: &Divergence) -> (f64, f64) {
        let (lo, hi) = d.reward_domain();
        let lo = if lo.is_finite() {
            if matches!(d, Divergence::Tv { .. }) {
                lo
            } else {
                lo + 1e-3
            }
        } else {
            -10.0
        };
        let hi = if hi.is_finite() { hi } else { 10.0 };
        (lo, hi)
    }

    #[test]
    fn catalog_has_expected_entries() {
        let names: Vec<&str> = catalog().iter().map(|d| d.name()).collect();
        assert_eq!(
            names,
            vec!["fkl", "rkl", "rkl_fix", "hellinger", "chi2", "tv", "js"]
        );
        for d in catalog() {
            assert_eq!(from_name(d.name(), None, None).unwrap(), d);
        }
        assert!(from_name("w1", None, None).is_err());
    }

    #[test]
    fn pointwise_examples() {
        let chi2 = make_chi2(1.0).unwrap();
        assert_abs_diff_eq!(chi2.phi(0.0), 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(chi2.phi_prime(0.0), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(chi2.reward_estimator(1.0).unwrap(), 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(chi2.reward_estimator(3.0).unwrap(), -4.0, epsilon = 0.0);

        for &alpha in &[0.3, 1.0, 2.0, 50.0] {
            let d = make_chi2(alpha).unwrap();
            assert_abs_diff_eq!(d.phi(2.0 * alpha), alpha, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(make_chi2(0.5).unwrap().phi(1.0), 0.5, epsilon = 0.0);
        assert!(make_chi2(0.0).is_err());
        assert!(make_chi2(-1.0).is_err());

        let tv = Divergence::Tv { r_max: 0.5 };
        assert_abs_diff_eq!(tv.reward_estimator(0.5).unwrap(), 0.5, epsilon = 0.0);
        assert_abs_diff_eq!(tv.reward_estimator(2.0).unwrap(), -0.5, epsilon = 0.0);
        assert_abs_diff_eq!(tv.reward_estimator(1.0).unwrap(), 0.0, epsilon = 0.0);

        assert_abs_diff_eq!(Divergence::Js.phi(0.0), 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(Divergence::Fkl.reward_estimator(1.0).unwrap(), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(Divergence::Rkl.reward_estimator(1.0).unwrap(), -1.0, epsilon = 0.0);
        assert_abs_diff_eq!(
            Divergence::RklFix.reward_estimator(1.0).unwrap(),
            0.0,
            epsilon = 0.0
        );
        assert_abs_diff_eq!(
            Divergence::Hellinger.reward_estimator(4.0).unwrap(),
            -0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn estimator_rejects_bad_ratios() {
        for d in catalog() {
            assert!(d.reward_estimator(-0.5).is_err(), "{d}");
            assert!(d.reward_estimator(f64::NAN).is_err(), "{d}");
        }
        assert!(Divergence::Fkl.reward_estimator(0.0).is_err());
        assert!(Divergence::Hellinger.reward_estimator(0.0).is_err());
        assert!(make_chi2(1.0).unwrap().reward_estimator(0.0).is_ok());
    }

    #[test]
    fn phi_prime_matches_finite_differences() {
        let mut rng = RngSeed(101).rng();
        let h = 1e-6;
        for d in catalog() {
            let (lo, hi) = domain_window(&d);
            for _ in 0..200 {
                // Keep the stencil inside the domain.
                let x = lo + 2.0 * h + (hi - lo - 4.0 * h) * rng.gen::<f64>();
                let fd = (d.phi(x + h) - d.phi(x - h)) / (2.0 * h);
                let exact = d.phi_prime(x);
                let tol = 1e-6 * exact.abs().max(1.0);
                assert!(
                    (fd - exact).abs() <= tol,
                    "{d}: phi'({x}) = {exact}, fd = {fd}"
                );
            }
        }
    }

    #[test]
    fn first_order_consistency_of_estimators() {
        let mut rng = RngSeed(102).rng();
        for d in catalog() {
            if matches!(d, Divergence::Tv { .. }) {
                continue; // sign form is not a stationarity inverse
            }
            for _ in 0..100 {
                let u = 0.01 + 9.99 * rng.gen::<f64>();
                let r = d.reward_estimator(u).unwrap();
                assert!(d.in_domain(r), "{d}: estimator left the domain at u={u}");
                assert_abs_diff_eq!(d.phi_prime(r), u, epsilon = 1e-8);
            }
        }
        // alpha scaling of the chi2 estimator.
        for &alpha in &[0.5, 2.0, 50.0] {
            let d = make_chi2(alpha).unwrap();
            let base = make_chi2(1.0).unwrap();
            for &u in &[0.2, 1.0, 3.0] {
                assert_abs_diff_eq!(
                    d.reward_estimator(u).unwrap(),
                    alpha * base.reward_estimator(u).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn phi_concavity_on_domain() {
        let mut rng = RngSeed(103).rng();
        for d in catalog() {
            let (lo, hi) = domain_window(&d);
            for _ in 0..1000 {
                let x = lo + (hi - lo) * rng.gen::<f64>();
                let y = lo + (hi - lo) * rng.gen::<f64>();
                let lam: f64 = rng.gen();
                let mid = d.phi(lam * x + (1.0 - lam) * y);
                let chord = lam * d.phi(x) + (1.0 - lam) * d.phi(y);
                assert!(
                    mid >= chord - 1e-9,
                    "{d}: concavity violated at x={x}, y={y}, lam={lam}"
                );
            }
        }
    }

    #[test]
    fn extension_is_c1_and_concave() {
        let mut rng = RngSeed(104).rng();
        for d in [Divergence::Fkl, Divergence::Hellinger, Divergence::Js] {
            let (lo, _) = d.reward_domain();
            // Continuity and slope matching at the edge.
            let e = lo + 1e-9; // just inside the raw domain but below the cap edge
            let (v, s, ext) = d.phi_extended(e);
            assert!(ext, "{d}: point near the boundary should be extended");
            assert!(v.is_finite() && s == PHI_SLOPE_CAP);
            // A point safely inside is untouched.
            let (v1, s1, ext1) = d.phi_extended(1.0);
            assert!(!ext1);
            assert_abs_diff_eq!(v1, d.phi(1.0), epsilon = 0.0);
            assert_abs_diff_eq!(s1, d.phi_prime(1.0), epsilon = 0.0);
            // Concavity across the kink: triples straddling the edge.
            for _ in 0..1000 {
                let x = lo - 0.5 + 2.0 * rng.gen::<f64>();
                let y = lo - 0.5 + 2.0 * rng.gen::<f64>();
                let lam: f64 = rng.gen();
                let ev = |t: f64| d.phi_extended(t).0;
                let mid = ev(lam * x + (1.0 - lam) * y);
                let chord = lam * ev(x) + (1.0 - lam) * ev(y);
                assert!(mid >= chord - 1e-6 * chord.abs().max(1.0), "{d}");
            }
        }
        // Unbounded-domain entries are never extended.
        for d in [Divergence::Rkl, Divergence::RklFix, make_chi2(1.0).unwrap()] {
            assert!(!d.phi_extended(-1e6).2);
        }
    }

    #[test]
    fn conjugate_pair_identity() {
        let mut rng = RngSeed(105).rng();
        // Analytic identity phi(x) = -f*(-x) on the domain.
        for d in catalog() {
            let (lo, hi) = domain_window(&d);
            for _ in 0..200 {
                let x = lo + (hi - lo) * rng.gen::<f64>();
                assert_abs_diff_eq!(d.phi(x), -d.f_star(-x), epsilon = 1e-10);
            }
        }
        // f* really is the conjugate of f: compare with a grid supremum.
        for d in catalog() {
            let ys: Vec<f64> = match d {
                Divergence::Fkl => vec![-3.0, -1.0, -0.3],
                Divergence::Hellinger => vec![-2.0, 0.0, 0.7],
                Divergence::Js => vec![-2.0, 0.0, 0.5],
                Divergence::Tv { .. } => vec![-0.4, 0.0, 0.4],
                _ => vec![-2.0, -0.5, 0.0, 0.8],
            };
            for y in ys {
                let mut sup = f64::NEG_INFINITY;
                // log-spaced grid over t in (1e-4, 60)
                let n = 120_000;
                for i in 0..=n {
                    let t = 1e-4 * (60.0_f64 / 1e-4).powf(i as f64 / n as f64);
                    sup = sup.max(t * y - d.f(t));
                }
                sup = sup.max(-d.f(0.0)); // t = 0 endpoint
                let exact = d.f_star(y);
                assert!(
                    (sup - exact).abs() <= 2e-3 * exact.abs().max(1.0),
                    "{d}: f*({y}) = {exact}, grid sup = {sup}"
                );
            }
        }
        // f is convex with f(1) = 0 (the exponential-form fix drops a
        // constant: f(1) = -1).
        for d in catalog() {
            let expected = if d == Divergence::RklFix { -1.0 } else { 0.0 };
            assert_abs_diff_eq!(d.f(1.0), expected, epsilon = 1e-12);
            for _ in 0..500 {
                let t1 = 8.0 * rng.gen::<f64>() + 1e-3;
                let t2 = 8.0 * rng.gen::<f64>() + 1e-3;
                let lam: f64 = rng.gen();
                let mid = d.f(lam * t1 + (1.0 - lam) * t2);
                let chord = lam * d.f(t1) + (1.0 - lam) * d.f(t2);
                assert!(mid <= chord + 1e-9, "{d}: f not convex");
            }
        }
    }

    #[test]
    fn tv_bound_examples() {
        let single = crate::mdp::TabularMdp::new(vec![vec![vec![1.0]]], vec![1.0], 0.0, None)
            .unwrap();
        assert_abs_diff_eq!(tv_q_bound(&single, 1.0), 0.5, epsilon = 0.0);
        assert_abs_diff_eq!(tv_q_bound(&single, 0.01), 0.5, epsilon = 0.0);

        let two = make_loop_mdp(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(
            tv_q_bound(&two, 1.0),
            2.0 * (0.5 + 2.0_f64.ln()),
            epsilon = 1e-12
        );

        // Monotone in gamma and |A|.
        let a2_lo = make_random_mdp(3, 2, 0.5, RngSeed(1), 1.0);
        let a2_hi = make_random_mdp(3, 2, 0.9, RngSeed(1), 1.0);
        let a5_lo = make_random_mdp(3, 5, 0.5, RngSeed(1), 1.0);
        assert!(tv_q_bound(&a2_hi, 1.0) > tv_q_bound(&a2_lo, 1.0));
        assert!(tv_q_bound(&a5_lo, 1.0) > tv_q_bound(&a2_lo, 1.0));
    }

    #[test]
    fn serde_round_trip() {
        for d in catalog() {
            let js = serde_json::to_string(&d).unwrap();
            let back: Divergence = serde_json::from_str(&js).unwrap();
            assert_eq!(d, back);
        }
    }
}
