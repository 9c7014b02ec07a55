//! Problem instances: per-agent costs, activities and box bounds, the
//! communication graph, controller gains and initial conditions.

mod builtin;
mod expr;
mod file;
mod parse;

pub use builtin::{builtin_scenario, ieee33_edges, BUILTIN_NAMES};
pub use expr::{Compiled, Expr, Var};
pub use file::{load_scenario, save_scenario};
pub use parse::parse_expr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CommGraph;

/// Half-width of the allocation range probed by the strong-convexity check.
pub const CONVEXITY_PROBE_RANGE: f64 = 1.0e3;

/// A time-varying box bound together with its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub expr: Expr,
    value: Compiled,
    rate: Compiled,
}

impl Bound {
    fn new(expr: Expr) -> Self {
        let value = expr.simplify().compile();
        let rate = expr.differentiate(Var::T).compile();
        Self { expr, value, rate }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.value.eval(0.0, t)
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.rate.eval(0.0, t)
    }
}

/// One agent's share of the problem: cost `f(x, t)`, activity `b(t)`,
/// allocation coefficient `A` and optional bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub a: f64,
    pub cost: Expr,
    pub activity: Expr,
    pub lower: Option<Bound>,
    pub upper: Option<Bound>,
    f: Compiled,
    f_x: Compiled,
    f_xx: Compiled,
    f_xt: Compiled,
    b: Compiled,
    b_t: Compiled,
}

impl AgentSpec {
    /// Builds an agent and its derivative programs. Activities and bounds
    /// may depend on `t` only.
    pub fn new(
        a: f64,
        cost: Expr,
        activity: Expr,
        lower: Option<Expr>,
        upper: Option<Expr>,
    ) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "allocation coefficient {a} is not finite"
            )));
        }
        for (what, e) in [
            ("activity", Some(&activity)),
            ("lower", lower.as_ref()),
            ("upper", upper.as_ref()),
        ] {
            if e.is_some_and(|e| e.depends_on(Var::X)) {
                return Err(Error::InvariantViolation(format!(
                    "{what} must not depend on x"
                )));
            }
        }
        let f_x = cost.differentiate(Var::X);
        Ok(Self {
            a,
            f: cost.simplify().compile(),
            f_xx: f_x.differentiate(Var::X).compile(),
            f_xt: f_x.differentiate(Var::T).compile(),
            f_x: f_x.compile(),
            b: activity.simplify().compile(),
            b_t: activity.differentiate(Var::T).compile(),
            cost,
            activity,
            lower: lower.map(Bound::new),
            upper: upper.map(Bound::new),
        })
    }

    /// Parses the textual form used in scenario files.
    pub fn parse(
        a: f64,
        cost: &str,
        activity: &str,
        lower: Option<&str>,
        upper: Option<&str>,
    ) -> Result<Self> {
        Self::new(
            a,
            parse_expr(cost)?,
            parse_expr(activity)?,
            lower.map(parse_expr).transpose()?,
            upper.map(parse_expr).transpose()?,
        )
    }

    pub fn cost_value(&self, x: f64, t: f64) -> f64 {
        self.f.eval(x, t)
    }

    pub fn f_x(&self, x: f64, t: f64) -> f64 {
        self.f_x.eval(x, t)
    }

    pub fn f_xx(&self, x: f64, t: f64) -> f64 {
        self.f_xx.eval(x, t)
    }

    pub fn f_xt(&self, x: f64, t: f64) -> f64 {
        self.f_xt.eval(x, t)
    }

    pub fn b(&self, t: f64) -> f64 {
        self.b.eval(0.0, t)
    }

    pub fn b_t(&self, t: f64) -> f64 {
        self.b_t.eval(0.0, t)
    }

    pub fn has_bounds(&self) -> bool {
        self.lower.is_some() || self.upper.is_some()
    }

    /// Lower bound at `t`, `-inf` when absent.
    pub fn lower_at(&self, t: f64) -> f64 {
        self.lower
            .as_ref()
            .map_or(f64::NEG_INFINITY, |g| g.value(t))
    }

    /// Upper bound at `t`, `+inf` when absent.
    pub fn upper_at(&self, t: f64) -> f64 {
        self.upper.as_ref().map_or(f64::INFINITY, |g| g.value(t))
    }

    /// Smallest sampled curvature `f_xx` over `|x| <= CONVEXITY_PROBE_RANGE`
    /// and `t` in `[0, t_end]`, as `(value, x, t)`.
    pub fn min_curvature(&self, t_end: f64) -> (f64, f64, f64) {
        if let Some(c) = self.f_xx.as_constant() {
            return (c, 0.0, 0.0);
        }
        let mut min = (f64::INFINITY, 0.0, 0.0);
        for t in linspace(0.0, t_end, 121) {
            for x in linspace(-CONVEXITY_PROBE_RANGE, CONVEXITY_PROBE_RANGE, 81) {
                let v = self.f_xx(x, t);
                if v.is_nan() {
                    return (v, x, t);
                }
                if v < min.0 {
                    min = (v, x, t);
                }
            }
        }
        min
    }

    /// Largest sampled `|dg/dt|` over both bounds on `[0, t_end]`.
    pub fn max_bound_slope(&self, t_end: f64) -> f64 {
        let mut max: f64 = 0.0;
        for bound in self.lower.iter().chain(self.upper.iter()) {
            for t in linspace(0.0, t_end, 1001) {
                max = max.max(bound.rate(t).abs());
            }
        }
        max
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |k| if k + 1 == n { b } else { a + step * k as f64 })
}

/// Exponents and gains of the fixed-time laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub p: i64,
    pub q: i64,
    pub gamma_psi1: f64,
    pub gamma_psi2: f64,
    pub gamma_psi3: f64,
    pub gamma_psip1: f64,
    pub gamma_psip2: f64,
    pub gamma_psip3: f64,
    pub gamma_lambda1: f64,
    pub gamma_lambda2: f64,
    pub gamma_lambda3: f64,
    pub gamma_e1: f64,
    pub gamma_e2: f64,
    pub gamma_e3: f64,
    pub kappa_x: f64,
    pub kappa_lambda: f64,
    pub epsilon: f64,
}

impl Gains {
    /// Control parameters of the first two case studies.
    pub fn reference() -> Self {
        Self {
            p: 2,
            q: 3,
            gamma_psi1: 10.0,
            gamma_psi2: 10.0,
            gamma_psi3: 1.0,
            gamma_psip1: 10.0,
            gamma_psip2: 10.0,
            gamma_psip3: 1.0,
            gamma_lambda1: 10.0,
            gamma_lambda2: 10.0,
            gamma_lambda3: 100.0,
            gamma_e1: 1.0,
            gamma_e2: 1.0,
            gamma_e3: 10.0,
            kappa_x: 1.0,
            kappa_lambda: 5.0,
            epsilon: 0.1,
        }
    }

    pub fn psi(&self) -> [f64; 3] {
        [self.gamma_psi1, self.gamma_psi2, self.gamma_psi3]
    }

    pub fn psi_prime(&self) -> [f64; 3] {
        [self.gamma_psip1, self.gamma_psip2, self.gamma_psip3]
    }

    pub fn lambda(&self) -> [f64; 3] {
        [self.gamma_lambda1, self.gamma_lambda2, self.gamma_lambda3]
    }

    pub fn e(&self) -> [f64; 3] {
        [self.gamma_e1, self.gamma_e2, self.gamma_e3]
    }

    fn reals_mut(&mut self) -> [(&'static str, &mut f64); 15] {
        [
            ("gamma_psi1", &mut self.gamma_psi1),
            ("gamma_psi2", &mut self.gamma_psi2),
            ("gamma_psi3", &mut self.gamma_psi3),
            ("gamma_psip1", &mut self.gamma_psip1),
            ("gamma_psip2", &mut self.gamma_psip2),
            ("gamma_psip3", &mut self.gamma_psip3),
            ("gamma_lambda1", &mut self.gamma_lambda1),
            ("gamma_lambda2", &mut self.gamma_lambda2),
            ("gamma_lambda3", &mut self.gamma_lambda3),
            ("gamma_e1", &mut self.gamma_e1),
            ("gamma_e2", &mut self.gamma_e2),
            ("gamma_e3", &mut self.gamma_e3),
            ("kappa_x", &mut self.kappa_x),
            ("kappa_lambda", &mut self.kappa_lambda),
            ("epsilon", &mut self.epsilon),
        ]
    }

    /// Sets a gain by its file name (`p` and `q` take integral values).
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "p" | "q" => {
                if value.fract() != 0.0 || !value.is_finite() {
                    return Err(Error::InvariantViolation(format!(
                        "{name} must be an integer, got {value}"
                    )));
                }
                let slot = if name == "p" {
                    &mut self.p
                } else {
                    &mut self.q
                };
                *slot = value as i64;
                Ok(())
            }
            _ => match self.reals_mut().into_iter().find(|(n, _)| *n == name) {
                Some((_, slot)) => {
                    *slot = value;
                    Ok(())
                }
                None => Err(Error::schema(format!("gains.{name}"), "unknown gain")),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p <= 0 || self.p % 2 != 0 {
            return Err(Error::InvariantViolation(format!(
                "p must be even and positive, got {}",
                self.p
            )));
        }
        if self.q % 2 == 0 {
            return Err(Error::InvariantViolation(format!(
                "q must be odd, got {}",
                self.q
            )));
        }
        if self.p >= self.q {
            return Err(Error::InvariantViolation(format!(
                "p must be smaller than q, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        let mut copy = self.clone();
        for (name, value) in copy.reals_mut() {
            if !(value.is_finite() && *value > 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "gain {name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Feedback-feedforward laws without local feasibility constraints.
    Ff,
    /// Projection-based laws with switched feedforward.
    ProjFf,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ff => "ff",
            Algorithm::ProjFf => "proj_ff",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub agents: Vec<AgentSpec>,
    pub graph: CommGraph,
    pub gains: Gains,
    pub t_end: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub theta0: Vec<f64>,
    pub theta0p: Vec<f64>,
    pub algorithm: Algorithm,
    pub seed: u64,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Checks every instance invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.agents.len();
        if n != self.graph.n() {
            return Err(Error::InvariantViolation(format!(
                "{n} agents but the graph has {} nodes",
                self.graph.n()
            )));
        }
        self.gains.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvariantViolation(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end.is_finite() && self.t_end > self.dt) {
            return Err(Error::InvariantViolation(format!(
                "t_end must exceed dt, got t_end = {}, dt = {}",
                self.t_end, self.dt
            )));
        }
        for (name, v) in [
            ("x0", &self.x0),
            ("lambda0", &self.lambda0),
            ("theta0", &self.theta0),
            ("theta0p", &self.theta0p),
        ] {
            if v.len() != n {
                return Err(Error::InvariantViolation(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "{name} has non-finite entries"
                )));
            }
        }
        for (name, v) in [("theta0", &self.theta0), ("theta0p", &self.theta0p)] {
            let sum: f64 = v.iter().sum();
            let scale: f64 = 1.0 + v.iter().map(|x| x.abs()).sum::<f64>();
            if sum.abs() > 1e-12 * scale {
                return Err(Error::InvariantViolation(format!(
                    "{name} must sum to zero, sums to {sum}"
                )));
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if self.algorithm == Algorithm::Ff && agent.has_bounds() {
                return Err(Error::InvariantViolation(format!(
                    "agent {i} declares bounds but the ff algorithm has no feasibility constraints"
                )));
            }
            let (value, x, t) = agent.min_curvature(self.t_end);
            if !(value > 0.0) {
                return Err(Error::NonConvexSample {
                    agent: i,
                    x,
                    t,
                    value,
                });
            }
            if let (Some(lo), Some(hi)) = (&agent.lower, &agent.upper) {
                for t in linspace(0.0, self.t_end, 1001) {
                    if !(lo.value(t) < hi.value(t)) {
                        return Err(Error::InvariantViolation(format!(
                            "agent {i} bounds cross at t = {t}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest bound slope over all agents and the horizon.
    pub fn max_bound_slope(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.max_bound_slope(self.t_end))
            .fold(0.0, f64::max)
    }
}
