//! Fixed-step integration, switching-event logging, settling detection and
//! trace export.

use std::io::{self, Write};

use serde::Serialize;

use crate::dynamics::{Derivative, FieldEval, SimState, VectorField};
use crate::error::{Error, Result};
use crate::oracle::solve_frozen;
use crate::protocol::{phi_sigma, rho_sigma, LocalEval, SignMode};
use crate::scenario::Scenario;

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Explicit Euler; the default, and the only sensible choice across
    /// the discontinuities of the signum and switching terms.
    #[default]
    Euler,
    /// Classical Runge-Kutta, for smooth scenarios only.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub method: Method,
    /// Boundary-layer width replacing the signum, if any.
    pub smooth_sign: Option<f64>,
    /// Record every `decimate`-th step (the first and last are always kept).
    pub decimate: usize,
    /// Solve the frozen problem at every record.
    pub verify: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            method: Method::Euler,
            smooth_sign: None,
            decimate: 1,
            verify: false,
        }
    }
}

/// Reference values at a recorded instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSample {
    pub x_star: Vec<f64>,
    pub lambda_star: f64,
    /// `max_i |x_i - x*_i|`.
    pub tracking_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub sigma: Vec<i8>,
    /// `sum_i (A_i x_i - b_i(t))`.
    pub imbalance: f64,
    /// `max_ij |lambda_i - lambda_j|`.
    pub consensus_err: f64,
    /// Centrally evaluated estimator target `-sum phi / sum rho` at the
    /// current allocation and switching signals.
    pub y_target: f64,
    pub theta_sum: f64,
    pub theta_p_sum: f64,
    pub oracle: Option<OracleSample>,
}

impl TraceRecord {
    /// Record of a state with all residual signals zero.
    pub fn at_rest(t: f64, x: &[f64], lambda: &[f64]) -> Self {
        let n = x.len();
        Self {
            t,
            x: x.to_vec(),
            lambda: lambda.to_vec(),
            y: vec![0.0; n],
            e: vec![0.0; n],
            sigma: vec![0; n],
            imbalance: 0.0,
            consensus_err: 0.0,
            y_target: 0.0,
            theta_sum: 0.0,
            theta_p_sum: 0.0,
            oracle: None,
        }
    }

    /// `max_i |y_i - y_target|`.
    pub fn estimate_err(&self) -> f64 {
        self.y
            .iter()
            .map(|y| (y - self.y_target).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_e(&self) -> f64 {
        self.e.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub agent: usize,
    pub from: i8,
    pub to: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub events: Vec<SwitchEvent>,
    pub final_state: SimState,
    pub steps: usize,
}

fn record(scn: &Scenario, s: &SimState, f: &FieldEval, verify: bool) -> Result<TraceRecord> {
    let t = s.t;
    let (mut rho_sum, mut phi_sum, mut imbalance) = (0.0, 0.0, 0.0);
    for (i, a) in scn.agents.iter().enumerate() {
        let l = LocalEval::new(a, i, s.x[i], t)?;
        rho_sum += rho_sigma(&l, f.sigma[i])?;
        phi_sum += phi_sigma(&l, f.sigma[i])?;
        imbalance += a.a * s.x[i] - l.b;
    }
    let (lmin, lmax) = s
        .lambda
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let oracle = if verify {
        let sol = solve_frozen(scn, t)?;
        let tracking_err =
            s.x.iter()
                .zip(&sol.x_star)
                .map(|(x, xs)| (x - xs).abs())
                .fold(0.0, f64::max);
        Some(OracleSample {
            x_star: sol.x_star,
            lambda_star: sol.lambda_star,
            tracking_err,
        })
    } else {
        None
    };
    Ok(TraceRecord {
        t,
        x: s.x.clone(),
        lambda: s.lambda.clone(),
        y: f.y.clone(),
        e: f.e.clone(),
        sigma: f.sigma.clone(),
        imbalance,
        consensus_err: lmax - lmin,
        y_target: if rho_sum > 0.0 {
            -phi_sum / rho_sum
        } else {
            f64::NAN
        },
        theta_sum: s.theta.iter().sum(),
        theta_p_sum: s.theta_p.iter().sum(),
        oracle,
    })
}

/// Integrates the scenario's algorithm from its initial conditions over
/// `[0, t_end]` with step `dt`.
pub fn integrate(scn: &Scenario, opts: &SimOptions) -> Result<SimOutput> {
    if !(scn.dt > 0.0 && scn.t_end > scn.dt) {
        return Err(Error::InvariantViolation(format!(
            "need 0 < dt < t_end, got dt = {}, t_end = {}",
            scn.dt, scn.t_end
        )));
    }
    let sign = opts
        .smooth_sign
        .map_or(SignMode::Exact, |delta| SignMode::Smooth { delta });
    let decimate = opts.decimate.max(1);
    let steps = (scn.t_end / scn.dt).round() as usize;
    let mut field = VectorField::new(scn, sign);

    let mut state = SimState::initial(scn);
    let mut f = FieldEval::default();
    let mut stages: [FieldEval; 3] = Default::default();
    let mut trace = Vec::with_capacity(steps / decimate + 2);
    let mut events = Vec::new();
    let mut last_sigma: Option<Vec<i8>> = None;

    for k in 0..=steps {
        state.t = k as f64 * scn.dt;
        field.eval(&state, &mut f)?;
        if let Some(prev) = &last_sigma {
            for (agent, (&from, &to)) in prev.iter().zip(&f.sigma).enumerate() {
                if from != to {
                    events.push(SwitchEvent {
                        t: state.t,
                        agent,
                        from,
                        to,
                    });
                }
            }
        }
        last_sigma = Some(f.sigma.clone());
        if k % decimate == 0 || k == steps {
            trace.push(record(scn, &state, &f, opts.verify)?);
        }
        if k == steps {
            break;
        }
        let h = scn.dt;
        state = match opts.method {
            Method::Euler => state.advanced(h, &f.deriv),
            Method::Rk4 => {
                let [k2, k3, k4] = &mut stages;
                field.eval(&state.advanced(h / 2.0, &f.deriv), k2)?;
                field.eval(&state.advanced(h / 2.0, &k2.deriv), k3)?;
                field.eval(&state.advanced(h, &k3.deriv), k4)?;
                let combined = combine_rk4(&f.deriv, &k2.deriv, &k3.deriv, &k4.deriv);
                state.advanced(h, &combined)
            }
        };
        let m = state.max_abs();
        if !(m <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged { t: state.t });
        }
    }
    Ok(SimOutput {
        trace,
        events,
        final_state: state,
        steps,
    })
}

fn combine_rk4(k1: &Derivative, k2: &Derivative, k3: &Derivative, k4: &Derivative) -> Derivative {
    let mix = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..a.len())
            .map(|i| (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]) / 6.0)
            .collect()
    };
    Derivative {
        x: mix(&k1.x, &k2.x, &k3.x, &k4.x),
        lambda: mix(&k1.lambda, &k2.lambda, &k3.lambda, &k4.lambda),
        theta: mix(&k1.theta, &k2.theta, &k3.theta, &k4.theta),
        theta_p: mix(&k1.theta_p, &k2.theta_p, &k3.theta_p, &k4.theta_p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub consensus_tol: f64,
    pub kkt_tol: f64,
    /// Seconds a metric must stay below tolerance.
    pub window: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            consensus_tol: 1e-3,
            kkt_tol: 1e-2,
            window: 1.0,
        }
    }
}

/// Observed settling times; `None` means not settled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettlingReport {
    pub t_y_obs: Option<f64>,
    pub t_lambda_obs: Option<f64>,
    pub t_sol_obs: Option<f64>,
    /// Imbalance of largest magnitude, with its sign, within two seconds
    /// after `t_sol_obs`.
    pub undershoot: Option<f64>,
}

/// Seconds after the settling instant scanned for the undershoot.
pub const UNDERSHOOT_WINDOW: f64 = 2.0;

/// Earliest record time `t` such that `below` holds at every record in
/// `[t, t + window]`. The whole window must lie inside the trace, unless
/// the trace is shorter than one window, in which case every record must
/// pass.
pub fn first_settled(
    trace: &[TraceRecord],
    window: f64,
    below: impl Fn(&TraceRecord) -> bool,
) -> Option<f64> {
    let first = trace.first()?;
    let last_t = trace.last()?.t;
    if last_t - first.t < window {
        return trace.iter().all(&below).then_some(first.t);
    }
    // next violation at or after each index, scanning backwards
    let mut next_bad = vec![usize::MAX; trace.len()];
    let mut upcoming = usize::MAX;
    for (i, r) in trace.iter().enumerate().rev() {
        if !below(r) {
            upcoming = i;
        }
        next_bad[i] = upcoming;
    }
    trace.iter().enumerate().find_map(|(i, r)| {
        if r.t + window > last_t {
            return None;
        }
        let clear = match next_bad[i] {
            usize::MAX => true,
            j => trace[j].t > r.t + window,
        };
        clear.then_some(r.t)
    })
}

pub fn detect_settling(trace: &[TraceRecord], tol: &Tolerances) -> SettlingReport {
    let t_y_obs = first_settled(trace, tol.window, |r| r.estimate_err() < tol.consensus_tol);
    let t_lambda_obs = first_settled(trace, tol.window, |r| r.consensus_err < tol.consensus_tol);
    let t_sol_obs = first_settled(trace, tol.window, |r| {
        r.max_abs_e() < tol.kkt_tol && r.imbalance.abs() < tol.kkt_tol
    });
    let undershoot = t_sol_obs.and_then(|ts| {
        trace
            .iter()
            .filter(|r| r.t >= ts && r.t <= ts + UNDERSHOOT_WINDOW)
            .map(|r| r.imbalance)
            .reduce(|a, b| if b.abs() > a.abs() { b } else { a })
    });
    SettlingReport {
        t_y_obs,
        t_lambda_obs,
        t_sol_obs,
        undershoot,
    }
}

/// Recorded samples on either side of a switching event excluded from
/// tracking checks; the optimal trajectory jumps there.
pub const DEAD_ZONE_SAMPLES: usize = 5;

/// Marks records within `samples` recorded samples of any event.
pub fn dead_zone_mask(trace: &[TraceRecord], events: &[SwitchEvent], samples: usize) -> Vec<bool> {
    let mut mask = vec![false; trace.len()];
    for ev in events {
        let at = trace.partition_point(|r| r.t < ev.t);
        let lo = at.saturating_sub(samples);
        let hi = (at + samples).min(trace.len().saturating_sub(1));
        for m in mask.iter_mut().take(hi + 1).skip(lo) {
            *m = true;
        }
    }
    mask
}

/// Largest tracking error over records at or after `from` outside the
/// mask. `None` when the trace carries no oracle samples there.
pub fn max_tracking_after(trace: &[TraceRecord], mask: &[bool], from: f64) -> Option<f64> {
    trace
        .iter()
        .zip(mask)
        .filter(|(r, &dead)| r.t >= from && !dead)
        .filter_map(|(r, _)| r.oracle.as_ref().map(|o| o.tracking_err))
        .reduce(f64::max)
}

/// How one bounded agent entered and then kept to its band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Absorption {
    pub agent: usize,
    /// First record inside the band.
    pub entry: Option<f64>,
    /// Largest bound violation at or after `entry`.
    pub worst_after: f64,
}

/// Allowed violation after band entry: one step of the fastest bound.
pub fn absorption_tolerance(scn: &Scenario) -> f64 {
    (scn.dt * scn.max_bound_slope()).max(1e-6)
}

pub fn feasibility_absorption(scn: &Scenario, trace: &[TraceRecord]) -> Vec<Absorption> {
    scn.agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.has_bounds())
        .map(|(i, a)| {
            let violation = |r: &TraceRecord| {
                (a.lower_at(r.t) - r.x[i])
                    .max(r.x[i] - a.upper_at(r.t))
                    .max(0.0)
            };
            let entry = trace.iter().position(|r| violation(r) == 0.0);
            Absorption {
                agent: i,
                entry: entry.map(|k| trace[k].t),
                worst_after: entry.map_or(f64::INFINITY, |k| {
                    trace[k..].iter().map(violation).fold(0.0, f64::max)
                }),
            }
        })
        .collect()
}

fn join<T: ToString>(out: &mut String, values: impl IntoIterator<Item = T>) {
    for v in values {
        out.push(',');
        out.push_str(&v.to_string());
    }
}

/// Header of the trace CSV for `n` agents.
pub fn trace_header(n: usize) -> String {
    let mut h = String::from("t");
    for name in ["x", "lambda", "y", "e", "sigma"] {
        join(&mut h, (0..n).map(|i| format!("{name}_{i}")));
    }
    h.push_str(",imbalance,consensus_err");
    join(&mut h, (0..n).map(|i| format!("x_star_{i}")));
    h.push_str(",lambda_star,tracking_err");
    h
}

/// Writes the trace as CSV; oracle columns are empty when not verified.
pub fn write_trace_csv(trace: &[TraceRecord], mut w: impl Write) -> io::Result<()> {
    let n = trace.first().map_or(0, |r| r.x.len());
    writeln!(w, "{}", trace_header(n))?;
    let mut line = String::new();
    for r in trace {
        line.clear();
        line.push_str(&r.t.to_string());
        join(&mut line, &r.x);
        join(&mut line, &r.lambda);
        join(&mut line, &r.y);
        join(&mut line, &r.e);
        join(&mut line, &r.sigma);
        join(&mut line, [r.imbalance, r.consensus_err]);
        match &r.oracle {
            Some(o) => {
                join(&mut line, &o.x_star);
                join(&mut line, [o.lambda_star, o.tracking_err]);
            }
            None => join(&mut line, std::iter::repeat_n("", n + 2)),
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_events_csv(events: &[SwitchEvent], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,agent,from,to")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.agent, e.from, e.to)?;
    }
    Ok(())
}
