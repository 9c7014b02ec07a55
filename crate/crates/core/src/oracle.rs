//! Centralized reference solution of the time-frozen problem and the
//! analytic rates of the optimal trajectory.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::{feedforward_x_switched, phi_sigma, rho_sigma, LocalEval};
use crate::scenario::{AgentSpec, Scenario};

/// Tolerance on `|x* - bound|` for reporting a bound as active.
pub const ACTIVE_TOL: f64 = 1e-9;
/// Largest `|x|` searched when bracketing a stationary point.
pub const ARGMIN_RANGE: f64 = 1e9;
const LAMBDA_BRACKET_START: f64 = 1e6;
const LAMBDA_BRACKET_MAX: f64 = 1e12;
const MIN_WEIGHT_SUM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenSolution {
    pub t: f64,
    pub x_star: Vec<f64>,
    pub lambda_star: f64,
    /// Which bound binds per agent: -1 lower, +1 upper, 0 none.
    pub active: Vec<i8>,
}

/// Per-agent stationarity residual, optionally with a quadratic penalty on
/// bound violations replacing the hard constraints.
struct Residual<'a> {
    spec: &'a AgentSpec,
    t: f64,
    a_lambda: f64,
    penalty: Option<(f64, f64, f64)>,
}

impl Residual<'_> {
    fn value(&self, x: f64) -> f64 {
        let mut g = self.spec.f_x(x, self.t) + self.a_lambda;
        if let Some((eta, lo, hi)) = self.penalty {
            g += eta * ((x - hi).max(0.0) - (lo - x).max(0.0));
        }
        g
    }

    fn slope(&self, x: f64) -> f64 {
        let mut d = self.spec.f_xx(x, self.t);
        if let Some((eta, lo, hi)) = self.penalty {
            if x > hi || x < lo {
                d += eta;
            }
        }
        d
    }
}

/// Root of an increasing residual inside `[lo, hi]` with
/// `value(lo) <= 0 <= value(hi)`: Newton steps, falling back to bisection
/// whenever a step leaves the bracket.
fn safeguarded_newton(r: &Residual, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..400 {
        let g = r.value(x);
        if g == 0.0 {
            return x;
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = r.slope(x);
        let newton = x - g / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Expands from zero in doubling steps until the residual changes sign.
fn bracket(r: &Residual, agent: usize) -> Result<(f64, f64)> {
    let g0 = r.value(0.0);
    if g0 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
    let (mut near, mut step) = (0.0, 1.0);
    loop {
        let far = dir * step;
        let g = r.value(far);
        if g.is_nan() {
            break;
        }
        if (g <= 0.0) != (g0 <= 0.0) || g == 0.0 {
            return Ok(if dir < 0.0 { (far, near) } else { (near, far) });
        }
        if step >= ARGMIN_RANGE {
            break;
        }
        near = far;
        step = (step * 2.0).min(ARGMIN_RANGE);
    }
    Err(Error::NoBracket { agent, t: r.t })
}

fn convex_at(spec: &AgentSpec, agent: usize, x: f64, t: f64) -> Result<f64> {
    let value = spec.f_xx(x, t);
    if value > 0.0 {
        Ok(x)
    } else {
        Err(Error::NonConvexSample { agent, x, t, value })
    }
}

/// Minimizer of `f(x, t) + A lambda x` over the agent's box.
pub fn inner_argmin(spec: &AgentSpec, agent: usize, lambda: f64, t: f64) -> Result<f64> {
    let r = Residual {
        spec,
        t,
        a_lambda: spec.a * lambda,
        penalty: None,
    };
    let (lo, hi) = (spec.lower_at(t), spec.upper_at(t));
    // the residual is increasing, so clipping the free root equals these tests
    if lo.is_finite() && r.value(lo) >= 0.0 {
        return convex_at(spec, agent, lo, t);
    }
    if hi.is_finite() && r.value(hi) <= 0.0 {
        return convex_at(spec, agent, hi, t);
    }
    let (a, b) = if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        let (a, b) = bracket(&r, agent)?;
        (a.max(lo), b.min(hi))
    };
    convex_at(spec, agent, safeguarded_newton(&r, a, b), t)
}

fn penalized_argmin(spec: &AgentSpec, agent: usize, lambda: f64, t: f64, eta: f64) -> Result<f64> {
    let r = Residual {
        spec,
        t,
        a_lambda: spec.a * lambda,
        penalty: Some((eta, spec.lower_at(t), spec.upper_at(t))),
    };
    let (a, b) = bracket(&r, agent)?;
    convex_at(spec, agent, safeguarded_newton(&r, a, b), t)
}

/// Bisection on the multiplier of the coupling constraint.
fn solve_dual(
    scn: &Scenario,
    t: f64,
    argmin: impl Fn(&AgentSpec, usize, f64) -> Result<f64>,
) -> Result<(f64, Vec<f64>)> {
    let total: f64 = scn.agents.iter().map(|a| a.b(t)).sum();
    let residual = |lambda: f64| -> Result<(f64, Vec<f64>)> {
        let x = scn
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| argmin(a, i, lambda))
            .collect::<Result<Vec<_>>>()?;
        let h = scn.agents.iter().zip(&x).map(|(a, x)| a.a * x).sum::<f64>() - total;
        Ok((h, x))
    };

    // h is non-increasing: h(lo) >= 0 >= h(hi) brackets the multiplier
    let mut width = LAMBDA_BRACKET_START;
    let (mut lo, mut hi) = loop {
        let ends = residual(-width).and_then(|l| Ok((l, residual(width)?)));
        match ends {
            Ok(((hl, _), (hh, _))) if hl >= 0.0 && hh <= 0.0 => break (-width, width),
            Ok(_) | Err(Error::NoBracket { .. }) if width < LAMBDA_BRACKET_MAX => width *= 2.0,
            Ok(_) | Err(Error::NoBracket { .. }) => return Err(Error::Infeasible { t }),
            Err(e) => return Err(e),
        }
    };
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (h, _) = residual(mid)?;
        if h > 0.0 {
            lo = mid;
        } else if h < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
        }
    }
    // of the two adjacent candidates keep the one with the smaller residual
    let (hl, xl) = residual(lo)?;
    let (hh, xh) = residual(hi)?;
    Ok(if hl.abs() <= hh.abs() {
        (lo, xl)
    } else {
        (hi, xh)
    })
}

fn active_set(scn: &Scenario, t: f64, x: &[f64]) -> Vec<i8> {
    scn.agents
        .iter()
        .zip(x)
        .map(|(a, &x)| {
            if (x - a.lower_at(t)).abs() <= ACTIVE_TOL {
                -1
            } else if (x - a.upper_at(t)).abs() <= ACTIVE_TOL {
                1
            } else {
                0
            }
        })
        .collect()
}

/// Optimal allocation and multiplier of the problem frozen at `t`.
pub fn solve_frozen(scn: &Scenario, t: f64) -> Result<FrozenSolution> {
    let (lambda_star, x_star) = solve_dual(scn, t, |a, i, l| inner_argmin(a, i, l, t))?;
    Ok(FrozenSolution {
        t,
        active: active_set(scn, t, &x_star),
        x_star,
        lambda_star,
    })
}

/// Optimal-trajectory rates `(x*', lambda*')` at a frozen solution, using
/// its active set as the switching signal.
pub fn oracle_rates(scn: &Scenario, sol: &FrozenSolution) -> Result<(Vec<f64>, f64)> {
    let t = sol.t;
    let locals = scn
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| LocalEval::new(a, i, sol.x_star[i], t))
        .collect::<Result<Vec<_>>>()?;
    let (mut den, mut num) = (0.0, 0.0);
    for (l, &s) in locals.iter().zip(&sol.active) {
        den += rho_sigma(l, s)?;
        num += phi_sigma(l, s)?;
    }
    if den < MIN_WEIGHT_SUM {
        return Err(Error::SingularDenominator { t });
    }
    let lambda_dot = -num / den;
    let x_dot = locals
        .iter()
        .zip(&sol.active)
        .map(|(l, &s)| feedforward_x_switched(l, lambda_dot, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((x_dot, lambda_dot))
}

/// Solution of the problem with the box constraints replaced by the
/// penalty `eta/2 * dist(x, box)^2`. Approaches [`solve_frozen`] as `eta`
/// grows; meant only as an independent cross-check.
pub fn solve_penalized(scn: &Scenario, t: f64, eta: f64) -> Result<FrozenSolution> {
    let (lambda_star, x_star) = solve_dual(scn, t, |a, i, l| penalized_argmin(a, i, l, t, eta))?;
    Ok(FrozenSolution {
        t,
        active: active_set(scn, t, &x_star),
        x_star,
        lambda_star,
    })
}

/// Penalty weights of the cross-check sweep.
pub const PENALTY_SWEEP: [f64; 3] = [1e2, 1e4, 1e6];

/// Distance `max(|dlambda|, max_i |dx_i|)` between the penalized and the
/// exact solution for each weight of [`PENALTY_SWEEP`].
pub fn penalty_cross_check(scn: &Scenario, t: f64) -> Result<Vec<(f64, f64)>> {
    let exact = solve_frozen(scn, t)?;
    PENALTY_SWEEP
        .iter()
        .map(|&eta| {
            let p = solve_penalized(scn, t, eta)?;
            let dx = p
                .x_star
                .iter()
                .zip(&exact.x_star)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok((eta, dx.max((p.lambda_star - exact.lambda_star).abs())))
        })
        .collect()
}
