//! Pointwise laws: signed powers, the fixed-time consensus operator,
//! estimator weightings, feedback/feedforward terms and box projection.
//!
//! Everything here is a pure function. Per-agent quantities are read from a
//! [`LocalEval`], which evaluates the agent's derivatives once per instant.

use crate::error::{BoundSide, Error, Result};
use crate::graph::CommGraph;
use crate::scenario::{AgentSpec, Gains};

/// `sign(v) * |v|^alpha`; odd, with `sig_pow(0, alpha) = 0`.
pub fn sig_pow(v: f64, alpha: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(alpha)
    }
}

/// Signum with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// How the discontinuous signum terms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SignMode {
    #[default]
    Exact,
    /// Boundary-layer approximation `v / (|v| + delta)`.
    Smooth { delta: f64 },
}

impl SignMode {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            SignMode::Exact => sign(v),
            SignMode::Smooth { delta } => v / (v.abs() + delta),
        }
    }
}

/// Exponent pair `1 - p/q` and `1 + p/q` of the fixed-time laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedPowerParams {
    pub p: i64,
    pub q: i64,
}

impl SignedPowerParams {
    pub fn from_gains(g: &Gains) -> Self {
        Self { p: g.p, q: g.q }
    }

    pub fn ratio(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn low(&self) -> f64 {
        1.0 - self.ratio()
    }

    pub fn high(&self) -> f64 {
        1.0 + self.ratio()
    }
}

/// Shape shared by the consensus and error-feedback laws:
/// `g1 sig(v)^(1-p/q) + g2 sig(v)^(1+p/q) + g3 sign(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedTimeLaw {
    pub powers: SignedPowerParams,
    pub sign: SignMode,
}

impl FixedTimeLaw {
    pub fn new(gains: &Gains, sign: SignMode) -> Self {
        Self {
            powers: SignedPowerParams::from_gains(gains),
            sign,
        }
    }

    pub fn eval(&self, v: f64, gamma: [f64; 3]) -> f64 {
        if v == 0.0 {
            return gamma[2] * self.sign.apply(0.0);
        }
        // one powf serves both exponents: |v|^(1 -+ r) = |v| / |v|^r, |v| * |v|^r
        let m = v.abs();
        let r = m.powf(self.powers.ratio());
        let s = v.signum();
        gamma[0] * s * (m / r) + gamma[1] * s * (m * r) + gamma[2] * self.sign.apply(v)
    }
}

/// Consensus term `C_i(values)` of agent `i`, summed over its neighbors in
/// ascending id order.
pub fn consensus_term(
    i: usize,
    values: &[f64],
    graph: &CommGraph,
    gamma: [f64; 3],
    law: &FixedTimeLaw,
) -> f64 {
    graph
        .neighbors(i)
        .iter()
        .map(|&j| law.eval(values[i] - values[j], gamma))
        .sum()
}

/// Consensus terms of every agent. Each edge is evaluated once and applied
/// with opposite signs at its endpoints; the per-agent accumulation order
/// matches [`consensus_term`].
pub fn consensus_all(
    values: &[f64],
    graph: &CommGraph,
    gamma: [f64; 3],
    law: &FixedTimeLaw,
    out: &mut [f64],
) {
    out.fill(0.0);
    for &(i, j) in graph.edges() {
        let w = law.eval(values[i] - values[j], gamma);
        out[i] += w;
        out[j] -= w;
    }
}

/// One agent's problem data evaluated at `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEval {
    pub agent: usize,
    pub t: f64,
    pub x: f64,
    pub a: f64,
    pub f_x: f64,
    pub f_xx: f64,
    pub f_xt: f64,
    pub b: f64,
    pub b_t: f64,
    /// Bounds and their rates; `None` for an absent side.
    pub lower: Option<(f64, f64)>,
    pub upper: Option<(f64, f64)>,
}

impl LocalEval {
    /// Evaluates agent data, rejecting points where the curvature is not
    /// positive.
    pub fn new(spec: &AgentSpec, agent: usize, x: f64, t: f64) -> Result<Self> {
        let f_xx = spec.f_xx(x, t);
        if !(f_xx > 0.0) {
            return Err(Error::NonConvexSample {
                agent,
                x,
                t,
                value: f_xx,
            });
        }
        Ok(Self {
            agent,
            t,
            x,
            a: spec.a,
            f_x: spec.f_x(x, t),
            f_xx,
            f_xt: spec.f_xt(x, t),
            b: spec.b(t),
            b_t: spec.b_t(t),
            lower: spec.lower.as_ref().map(|g| (g.value(t), g.rate(t))),
            upper: spec.upper.as_ref().map(|g| (g.value(t), g.rate(t))),
        })
    }

    pub fn lower_value(&self) -> f64 {
        self.lower.map_or(f64::NEG_INFINITY, |g| g.0)
    }

    pub fn upper_value(&self) -> f64 {
        self.upper.map_or(f64::INFINITY, |g| g.0)
    }

    fn lower_rate(&self) -> Result<f64> {
        self.lower.map(|g| g.1).ok_or(Error::MissingBound {
            agent: self.agent,
            side: BoundSide::Lower,
        })
    }

    fn upper_rate(&self) -> Result<f64> {
        self.upper.map(|g| g.1).ok_or(Error::MissingBound {
            agent: self.agent,
            side: BoundSide::Upper,
        })
    }
}

/// Estimator weighting `A^2 / f_xx`.
pub fn rho(l: &LocalEval) -> f64 {
    l.a * l.a / l.f_xx
}

/// Estimator weighting `A f_xt / f_xx + b_t`.
pub fn phi(l: &LocalEval) -> f64 {
    l.a * l.f_xt / l.f_xx + l.b_t
}

fn check_sigma(sigma: i8) {
    debug_assert!((-1..=1).contains(&sigma), "switching signal {sigma}");
}

/// Switched weighting; vanishes while the agent is pinned to a bound.
pub fn rho_sigma(l: &LocalEval, sigma: i8) -> Result<f64> {
    check_sigma(sigma);
    match sigma {
        0 => Ok(rho(l)),
        -1 => l.lower_rate().map(|_| 0.0),
        _ => l.upper_rate().map(|_| 0.0),
    }
}

/// Switched weighting; a pinned agent contributes `b_t` minus `A` times the
/// slope of the bound it is pinned to, on either side.
pub fn phi_sigma(l: &LocalEval, sigma: i8) -> Result<f64> {
    check_sigma(sigma);
    match sigma {
        0 => Ok(phi(l)),
        -1 => Ok(l.b_t - l.a * l.lower_rate()?),
        _ => Ok(l.b_t - l.a * l.upper_rate()?),
    }
}

/// Local estimate `psi' / psi`, zeroed below the singularity guard.
pub fn estimator_output(psi: f64, psi_prime: f64, epsilon: f64) -> f64 {
    if psi >= epsilon {
        psi_prime / psi
    } else {
        0.0
    }
}

/// Primal feedforward `-(A y + f_xt) / f_xx`.
pub fn feedforward_x(l: &LocalEval, y: f64) -> f64 {
    -(l.a * y + l.f_xt) / l.f_xx
}

/// Dual feedforward: the estimate itself.
pub fn feedforward_lambda(y: f64) -> f64 {
    y
}

/// Switched primal feedforward; a pinned agent follows its bound's slope.
pub fn feedforward_x_switched(l: &LocalEval, y: f64, sigma: i8) -> Result<f64> {
    check_sigma(sigma);
    match sigma {
        0 => Ok(feedforward_x(l, y)),
        -1 => l.lower_rate(),
        _ => l.upper_rate(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackFf {
    pub f_x: f64,
    pub f_lambda: f64,
    pub e: f64,
}

pub fn feedback_ff(l: &LocalEval, lambda: f64, gains: &Gains, law: &FixedTimeLaw) -> FeedbackFf {
    let e = l.f_x + l.a * lambda;
    FeedbackFf {
        f_x: gains.kappa_x * law.eval(e, gains.e()) / l.f_xx,
        f_lambda: gains.kappa_lambda * (l.b - l.a * l.x),
        e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackProj {
    /// Unprojected step `kappa_x (f_x + A lambda)`.
    pub f_x: f64,
    /// Error-feedback term driving `e` to zero.
    pub f_x_prime: f64,
    pub f_lambda: f64,
    pub e: f64,
    pub sigma: i8,
}

/// Switching signal: which bound, if any, the projected step lands on.
/// Absent sides never trigger.
pub fn switching_signal(l: &LocalEval, f_x: f64) -> i8 {
    let z = l.x - f_x;
    if l.lower.is_some_and(|g| z <= g.0) {
        -1
    } else if l.upper.is_some_and(|g| z >= g.0) {
        1
    } else {
        0
    }
}

pub fn feedback_proj(
    l: &LocalEval,
    lambda: f64,
    gains: &Gains,
    law: &FixedTimeLaw,
) -> Result<FeedbackProj> {
    let f_x = gains.kappa_x * (l.f_x + l.a * lambda);
    let (lo, hi) = (l.lower_value(), l.upper_value());
    let projected = project_box(l.x - f_x, lo, hi).ok_or(Error::EmptyBox {
        agent: l.agent,
        t: l.t,
        lower: lo,
        upper: hi,
    })?;
    let e = l.x - projected;
    Ok(FeedbackProj {
        f_x,
        f_x_prime: law.eval(e, gains.e()) / l.f_xx,
        f_lambda: gains.kappa_lambda * (l.b - l.a * l.x),
        e,
        sigma: switching_signal(l, f_x),
    })
}

/// Projection of `v` onto `[lo, hi]`; `None` when the box is empty.
pub fn project_box(v: f64, lo: f64, hi: f64) -> Option<f64> {
    (lo <= hi).then(|| v.max(lo).min(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_scenario;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn law() -> FixedTimeLaw {
        FixedTimeLaw::new(&Gains::reference(), SignMode::Exact)
    }

    #[test]
    fn signed_powers() {
        assert_abs_diff_eq!(sig_pow(-8.0, 1.0 / 3.0), -2.0, epsilon = 1e-12);
        assert_eq!(sig_pow(0.0, 5.0 / 3.0), 0.0);
        assert_abs_diff_eq!(sig_pow(8.0, 5.0 / 3.0), 32.0, epsilon = 1e-12);
    }

    #[test]
    fn law_matches_direct_powers() {
        let l = law();
        for v in [-3.5, -1e-6, 0.2, 7.0] {
            let direct = 2.0 * sig_pow(v, 1.0 / 3.0) + 3.0 * sig_pow(v, 5.0 / 3.0) + 4.0 * sign(v);
            assert_abs_diff_eq!(
                l.eval(v, [2.0, 3.0, 4.0]),
                direct,
                epsilon = 1e-12 * (1.0 + direct.abs())
            );
        }
    }

    #[test]
    fn consensus_examples() {
        let ring = CommGraph::ring(6).unwrap();
        let equal = [5.0; 6];
        for i in 0..6 {
            assert_eq!(
                consensus_term(i, &equal, &ring, [10.0, 10.0, 100.0], &law()),
                0.0
            );
        }
        let k2 = CommGraph::new(2, &[(0, 1)]).unwrap();
        let v = [1.0, 0.0];
        let c0 = consensus_term(0, &v, &k2, [1.0; 3], &law());
        let c1 = consensus_term(1, &v, &k2, [1.0; 3], &law());
        assert_abs_diff_eq!(c0, 3.0, epsilon = 1e-15);
        assert_eq!(c0, -c1);
    }

    #[test]
    fn case1_weightings() {
        let s = builtin_scenario("case1").unwrap();
        let l = LocalEval::new(&s.agents[0], 0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(rho(&l), 1.0 / 2.2, epsilon = 1e-15);
        assert_abs_diff_eq!(phi(&l), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(feedforward_x(&l, 1.0), -1.0 / 2.2, epsilon = 1e-15);
        assert_eq!(feedforward_x(&l, 0.0), 0.0);
        assert_eq!(feedforward_lambda(3.7), 3.7);
        let fb = feedback_ff(&l, 0.0, &s.gains, &law());
        assert_eq!(fb.e, 0.0);
        assert_eq!(fb.f_x, 0.0);
        assert_abs_diff_eq!(fb.f_lambda, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_coefficient() {
        let spec = AgentSpec::parse(0.0, "x^2", "3*t", None, None).unwrap();
        let l = LocalEval::new(&spec, 0, 1.0, 2.0).unwrap();
        assert_eq!(rho(&l), 0.0);
        assert_eq!(phi(&l), 3.0);
    }

    #[test]
    fn unit_error_feedback() {
        let spec = AgentSpec::parse(1.0, "1.1*x^2", "0", None, None).unwrap();
        // f_x(x) = 2.2 x, so x = 1/2.2 and lambda = 0 give e = 1
        let l = LocalEval::new(&spec, 0, 1.0 / 2.2, 0.0).unwrap();
        let fb = feedback_ff(&l, 0.0, &Gains::reference(), &law());
        assert_abs_diff_eq!(fb.e, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fb.f_x, 12.0 / 2.2, epsilon = 1e-12);
    }

    #[test]
    fn non_convex_point() {
        let spec = AgentSpec::parse(1.0, "x^3", "0", None, None).unwrap();
        assert!(matches!(
            LocalEval::new(&spec, 4, -1.0, 0.5),
            Err(Error::NonConvexSample { agent: 4, .. })
        ));
    }

    #[test]
    fn estimator_guard() {
        assert_eq!(estimator_output(0.5, 1.0, 0.1), 2.0);
        assert_eq!(estimator_output(0.05, 7.0, 0.1), 0.0);
        assert_eq!(estimator_output(0.1, 7.0, 0.1), 70.0);
    }

    #[test]
    fn switched_weightings() {
        let s = builtin_scenario("case2").unwrap();
        let l = LocalEval::new(&s.agents[5], 5, 3.0, 5.0).unwrap();
        assert_eq!(rho_sigma(&l, 0).unwrap().to_bits(), rho(&l).to_bits());
        assert_eq!(phi_sigma(&l, 0).unwrap().to_bits(), phi(&l).to_bits());
        assert_eq!(rho_sigma(&l, 1).unwrap(), 0.0);
        assert_eq!(rho_sigma(&l, -1).unwrap(), 0.0);
        assert_abs_diff_eq!(phi_sigma(&l, 1).unwrap(), l.b_t - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi_sigma(&l, -1).unwrap(), l.b_t - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            feedforward_x_switched(&l, 2.0, 1).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(feedforward_x_switched(&l, 2.0, -1).unwrap(), 1.0);
        assert_eq!(
            feedforward_x_switched(&l, 2.0, 0).unwrap(),
            feedforward_x(&l, 2.0)
        );

        let upper_only = LocalEval::new(&s.agents[0], 0, 3.0, 5.0).unwrap();
        assert!(matches!(
            rho_sigma(&upper_only, -1),
            Err(Error::MissingBound {
                agent: 0,
                side: BoundSide::Lower
            })
        ));
        assert!(matches!(
            feedforward_x_switched(&upper_only, 0.0, -1),
            Err(Error::MissingBound { .. })
        ));
        assert_eq!(feedforward_x_switched(&upper_only, 0.0, 1).unwrap(), 0.0);
    }

    /// Switched forms written out exactly as the general formulas with
    /// `sigma` as a number.
    fn switched_formulas(l: &LocalEval, y: f64, sigma: f64) -> (f64, f64, f64) {
        let (gm_t, gmx_t) = (l.lower.map_or(0.0, |g| g.1), l.upper.map_or(0.0, |g| g.1));
        let keep = 1.0 - sigma * sigma;
        let rho = l.a * keep * l.a / l.f_xx;
        let phi = l.a * keep * l.f_xt / l.f_xx + l.b_t + l.a * sigma / 2.0 * (1.0 - sigma) * gm_t
            - l.a * sigma / 2.0 * (1.0 + sigma) * gmx_t;
        let alpha = -keep * (l.a * y + l.f_xt) / l.f_xx - sigma / 2.0 * (1.0 - sigma) * gm_t
            + sigma / 2.0 * (1.0 + sigma) * gmx_t;
        (rho, phi, alpha)
    }

    #[test]
    fn switched_laws_match_general_formulas() {
        let s = builtin_scenario("case2").unwrap();
        for (x, t, y) in [(3.0, 5.0, 2.0), (-1.0, 12.0, -0.3), (15.0, 44.0, 0.9)] {
            let l = LocalEval::new(&s.agents[5], 5, x, t).unwrap();
            for sigma in [-1i8, 0, 1] {
                let (r, p, a) = switched_formulas(&l, y, sigma as f64);
                assert_abs_diff_eq!(rho_sigma(&l, sigma).unwrap(), r, epsilon = 1e-12);
                assert_abs_diff_eq!(phi_sigma(&l, sigma).unwrap(), p, epsilon = 1e-12);
                assert_abs_diff_eq!(
                    feedforward_x_switched(&l, y, sigma).unwrap(),
                    a,
                    epsilon = 1e-12
                );
            }
        }
    }

    fn boxed(x: f64, lambda: f64) -> FeedbackProj {
        // f_x = 0 and f_xx = 1, so F_x = lambda
        let spec = AgentSpec::parse(1.0, "0.5*x^2", "0", Some("0"), Some("10")).unwrap();
        let mut l = LocalEval::new(&spec, 0, x, 0.0).unwrap();
        l.f_x = 0.0;
        feedback_proj(&l, lambda, &Gains::reference(), &law()).unwrap()
    }

    #[test]
    fn projected_feedback_examples() {
        let fb = boxed(0.0, 5.0);
        assert_eq!((fb.sigma, fb.e), (-1, 0.0));
        let fb = boxed(8.0, -5.0);
        assert_eq!((fb.sigma, fb.e), (1, -2.0));
        let fb = boxed(4.0, 1.0);
        assert_eq!((fb.sigma, fb.e), (0, 1.0));
        assert_eq!(boxed(1.0, 1.0).sigma, -1, "non-strict at the boundary");
    }

    #[test]
    fn unbounded_projection_is_the_step() {
        let s = builtin_scenario("case1").unwrap();
        let g = Gains {
            kappa_x: 2.5,
            ..Gains::reference()
        };
        let l = LocalEval::new(&s.agents[2], 2, 4.0, 7.0).unwrap();
        let proj = feedback_proj(&l, -3.0, &g, &law()).unwrap();
        let ff = feedback_ff(&l, -3.0, &g, &law());
        assert_eq!(proj.sigma, 0);
        assert_abs_diff_eq!(proj.e, proj.f_x, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.e, g.kappa_x * ff.e, epsilon = 1e-12);
    }

    #[test]
    fn empty_box() {
        assert_eq!(project_box(-5.0, 0.0, 10.0), Some(0.0));
        assert_eq!(project_box(5.0, 0.0, 10.0), Some(5.0));
        assert_eq!(project_box(12.0, 0.0, 10.0), Some(10.0));
        assert_eq!(project_box(1.0, 2.0, 1.0), None);
        let spec = AgentSpec::parse(1.0, "x^2", "0", Some("t"), Some("1")).unwrap();
        let l = LocalEval::new(&spec, 3, 0.0, 2.0).unwrap();
        assert!(matches!(
            feedback_proj(&l, 0.0, &Gains::reference(), &law()),
            Err(Error::EmptyBox { agent: 3, .. })
        ));
    }

    #[test]
    fn smooth_sign() {
        let s = SignMode::Smooth { delta: 0.1 };
        assert_eq!(s.apply(0.0), 0.0);
        assert_abs_diff_eq!(s.apply(0.1), 0.5, epsilon = 1e-15);
        assert!(s.apply(-100.0) > -1.0);
    }

    proptest! {
        #[test]
        fn sig_pow_is_odd_and_increasing(a in -1e3f64..1e3, b in -1e3f64..1e3, alpha in 0.05f64..3.0) {
            prop_assert_eq!(sig_pow(-a, alpha), -sig_pow(a, alpha));
            prop_assert_eq!(sig_pow(a, 1.0), a);
            if a < b {
                prop_assert!(sig_pow(a, alpha) <= sig_pow(b, alpha));
            }
        }

        #[test]
        fn pairwise_terms_cancel_without_sign_gain(
            values in proptest::collection::vec(-50.0f64..50.0, 6),
        ) {
            let g = CommGraph::ring(6).unwrap();
            let gamma = [10.0, 10.0, 0.0];
            let total: f64 = (0..6).map(|i| consensus_term(i, &values, &g, gamma, &law())).sum();
            let scale: f64 = (0..6).map(|i| consensus_term(i, &values, &g, gamma, &law()).abs()).sum();
            prop_assert!(total.abs() <= 1e-12 * (1.0 + scale));
            let mut all = vec![0.0; 6];
            consensus_all(&values, &g, gamma, &law(), &mut all);
            for (i, c) in all.iter().enumerate() {
                prop_assert_eq!(*c, consensus_term(i, &values, &g, gamma, &law()));
            }
        }

        #[test]
        fn projection_is_nonexpansive(a in -100.0f64..100.0, b in -100.0f64..100.0, lo in -50.0f64..0.0, w in 0.0f64..50.0) {
            let hi = lo + w;
            let (pa, pb) = (project_box(a, lo, hi).unwrap(), project_box(b, lo, hi).unwrap());
            prop_assert!((pa - pb).abs() <= (a - b).abs());
            prop_assert_eq!(project_box(pa, lo, hi).unwrap(), pa);
        }
    }
}
