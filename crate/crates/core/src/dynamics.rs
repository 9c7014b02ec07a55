//! Multi-agent vector fields of the two algorithms, theoretical settling-time
//! bounds and the a-posteriori gain-condition monitor.

use serde::Serialize;

use crate::error::Result;
use crate::protocol::{
    consensus_all, estimator_output, feedback_ff, feedback_proj, feedforward_lambda, feedforward_x,
    feedforward_x_switched, phi, phi_sigma, rho, rho_sigma, FixedTimeLaw, LocalEval, SignMode,
};
use crate::scenario::{Algorithm, Scenario};
use crate::sim::TraceRecord;

/// Flattened per-agent state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_p: Vec<f64>,
}

impl SimState {
    pub fn initial(scn: &Scenario) -> Self {
        Self {
            t: 0.0,
            x: scn.x0.clone(),
            lambda: scn.lambda0.clone(),
            theta: scn.theta0.clone(),
            theta_p: scn.theta0p.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `self + h * d`, evaluated at time `t + h`.
    pub fn advanced(&self, h: f64, d: &Derivative) -> Self {
        let step = |v: &[f64], dv: &[f64]| v.iter().zip(dv).map(|(a, b)| a + h * b).collect();
        Self {
            t: self.t + h,
            x: step(&self.x, &d.x),
            lambda: step(&self.lambda, &d.lambda),
            theta: step(&self.theta, &d.theta),
            theta_p: step(&self.theta_p, &d.theta_p),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.x, &self.lambda, &self.theta, &self.theta_p]
            .into_iter()
            .flatten()
            .fold(
                0.0,
                |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) },
            )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Derivative {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_p: Vec<f64>,
}

/// Vector field together with the per-agent signals it was built from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldEval {
    pub deriv: Derivative,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub sigma: Vec<i8>,
    pub psi: Vec<f64>,
    pub psi_p: Vec<f64>,
}

/// Reusable evaluator of either algorithm's vector field.
#[derive(Debug, Clone)]
pub struct VectorField<'a> {
    scn: &'a Scenario,
    law: FixedTimeLaw,
    locals: Vec<LocalEval>,
    c_psi: Vec<f64>,
    c_psi_p: Vec<f64>,
    c_lambda: Vec<f64>,
    primal: Vec<f64>,
    f_lambda: Vec<f64>,
}

impl<'a> VectorField<'a> {
    pub fn new(scn: &'a Scenario, sign: SignMode) -> Self {
        let n = scn.n();
        Self {
            scn,
            law: FixedTimeLaw::new(&scn.gains, sign),
            locals: Vec::with_capacity(n),
            c_psi: vec![0.0; n],
            c_psi_p: vec![0.0; n],
            c_lambda: vec![0.0; n],
            primal: vec![0.0; n],
            f_lambda: vec![0.0; n],
        }
    }

    /// Evaluates the field of the scenario's algorithm at `s` into `out`.
    pub fn eval(&mut self, s: &SimState, out: &mut FieldEval) -> Result<()> {
        let scn = self.scn;
        let n = scn.n();
        let g = &scn.gains;
        for v in [
            &mut out.deriv.x,
            &mut out.deriv.lambda,
            &mut out.deriv.theta,
            &mut out.deriv.theta_p,
            &mut out.y,
            &mut out.e,
            &mut out.psi,
            &mut out.psi_p,
        ] {
            v.resize(n, 0.0);
        }
        out.sigma.resize(n, 0);

        self.locals.clear();
        for (i, spec) in scn.agents.iter().enumerate() {
            self.locals.push(LocalEval::new(spec, i, s.x[i], s.t)?);
        }

        // feedback first: the switching signal selects the estimator weightings
        let (primal, f_lambda) = (&mut self.primal, &mut self.f_lambda);
        for (i, l) in self.locals.iter().enumerate() {
            match scn.algorithm {
                Algorithm::Ff => {
                    let fb = feedback_ff(l, s.lambda[i], g, &self.law);
                    primal[i] = fb.f_x;
                    f_lambda[i] = fb.f_lambda;
                    out.e[i] = fb.e;
                    out.sigma[i] = 0;
                    out.psi[i] = s.theta[i] + rho(l);
                    out.psi_p[i] = s.theta_p[i] - phi(l);
                }
                Algorithm::ProjFf => {
                    let fb = feedback_proj(l, s.lambda[i], g, &self.law)?;
                    primal[i] = fb.f_x_prime;
                    f_lambda[i] = fb.f_lambda;
                    out.e[i] = fb.e;
                    out.sigma[i] = fb.sigma;
                    out.psi[i] = s.theta[i] + rho_sigma(l, fb.sigma)?;
                    out.psi_p[i] = s.theta_p[i] - phi_sigma(l, fb.sigma)?;
                }
            }
        }

        consensus_all(&out.psi, &scn.graph, g.psi(), &self.law, &mut self.c_psi);
        consensus_all(
            &out.psi_p,
            &scn.graph,
            g.psi_prime(),
            &self.law,
            &mut self.c_psi_p,
        );
        consensus_all(
            &s.lambda,
            &scn.graph,
            g.lambda(),
            &self.law,
            &mut self.c_lambda,
        );

        for (i, l) in self.locals.iter().enumerate() {
            let y = estimator_output(out.psi[i], out.psi_p[i], g.epsilon);
            let alpha_x = match scn.algorithm {
                Algorithm::Ff => feedforward_x(l, y),
                Algorithm::ProjFf => feedforward_x_switched(l, y, out.sigma[i])?,
            };
            out.y[i] = y;
            out.deriv.x[i] = -primal[i] + alpha_x;
            out.deriv.lambda[i] = -self.c_lambda[i] - f_lambda[i] + feedforward_lambda(y);
            out.deriv.theta[i] = -self.c_psi[i];
            out.deriv.theta_p[i] = -self.c_psi_p[i];
        }
        Ok(())
    }
}

fn field_for(s: &SimState, scn: &Scenario, algorithm: Algorithm) -> Result<FieldEval> {
    let mut scn = scn.clone();
    scn.algorithm = algorithm;
    let mut out = FieldEval::default();
    VectorField::new(&scn, SignMode::Exact).eval(s, &mut out)?;
    Ok(out)
}

/// Field of the unconstrained algorithm.
pub fn vector_field_ff(s: &SimState, scn: &Scenario) -> Result<FieldEval> {
    field_for(s, scn, Algorithm::Ff)
}

/// Field of the projection-based algorithm; `sigma` holds the switching
/// signals used.
pub fn vector_field_proj(s: &SimState, scn: &Scenario) -> Result<FieldEval> {
    field_for(s, scn, Algorithm::ProjFf)
}

/// Theoretical settling-time bounds, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    pub t0: f64,
    pub t_y_max: f64,
    pub t_lambda_max: f64,
    pub t_sol_max: f64,
    pub eta2: f64,
}

pub fn settling_bounds(scn: &Scenario) -> Result<BoundsReport> {
    let eta2 = scn.graph.algebraic_connectivity()?;
    let g = &scn.gains;
    let (p, q, n) = (g.p as f64, g.q as f64, scn.n() as f64);
    let t0 = std::f64::consts::PI * q * n.powf(p / (2.0 * q)) / (2.0 * p * eta2);
    let t_y_max = (g.gamma_psi1 * g.gamma_psi2)
        .powf(-0.5)
        .max((g.gamma_psip1 * g.gamma_psip2).powf(-0.5))
        * t0;
    let t_lambda_max = (g.gamma_lambda1 * g.gamma_lambda2).powf(-0.5) * t0;
    // the eta2 factor of the second term is kept exactly as the bound is stated
    let t_sol_max = t_y_max.max(t_lambda_max)
        + eta2 * (2.0 * g.kappa_x * g.kappa_x * g.gamma_e1 * g.gamma_e2).powf(-0.5) * t0;
    Ok(BoundsReport {
        t0,
        t_y_max,
        t_lambda_max,
        t_sol_max,
        eta2,
    })
}

/// Estimated suprema of the bounded-variation hypotheses and whether the
/// signum gains dominate them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub psi_ok: bool,
    pub psi_prime_ok: bool,
    pub lambda_ok: bool,
    pub e_ok: bool,
}

/// Estimates `C1..C4` along a trace. Rates are finite differences between
/// consecutive records; pairs across a change of any switching signal are
/// skipped because the switched weightings jump there.
pub fn gain_monitor(trace: &[TraceRecord], scn: &Scenario) -> Result<GainReport> {
    let n = scn.n();
    let g = &scn.gains;
    let weights = |r: &TraceRecord| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rhos = Vec::with_capacity(n);
        let mut phis = Vec::with_capacity(n);
        for (i, spec) in scn.agents.iter().enumerate() {
            let l = LocalEval::new(spec, i, r.x[i], r.t)?;
            rhos.push(rho_sigma(&l, r.sigma[i])?);
            phis.push(phi_sigma(&l, r.sigma[i])?);
        }
        Ok((rhos, phis))
    };

    let (mut c1, mut c2, mut c3, mut c4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut prev: Option<(&TraceRecord, Vec<f64>, Vec<f64>)> = None;
    for r in trace {
        let (rhos, phis) = weights(r)?;
        let f_lambda: Vec<f64> = scn
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| g.kappa_lambda * (a.b(r.t) - a.a * r.x[i]))
            .collect();
        let mean_f_lambda = f_lambda.iter().sum::<f64>() / n as f64;
        let y_bar = r.y.iter().sum::<f64>() / n as f64;
        for (i, a) in scn.agents.iter().enumerate() {
            c3 = c3.max((-f_lambda[i] + r.y[i]).abs());
            let composite = match scn.algorithm {
                Algorithm::Ff => -a.a * mean_f_lambda,
                Algorithm::ProjFf => {
                    let s = r.sigma[i] as f64;
                    let lower_t = a.lower.as_ref().map_or(0.0, |b| b.rate(r.t));
                    let upper_t = a.upper.as_ref().map_or(0.0, |b| b.rate(r.t));
                    -(1.0 - s * s) * (a.a * y_bar + a.f_xt(r.x[i], r.t))
                        - s / 2.0 * (1.0 - s) * lower_t
                        + s / 2.0 * (1.0 + s) * upper_t
                        - a.a * mean_f_lambda
                }
            };
            c4 = c4.max(composite.abs());
        }
        if let Some((p, prho, pphi)) = &prev {
            let h = r.t - p.t;
            if h > 0.0 && p.sigma == r.sigma {
                for i in 0..n {
                    c1 = c1.max(((rhos[i] - prho[i]) / h).abs());
                    c2 = c2.max(((phis[i] - pphi[i]) / h).abs());
                }
            }
        }
        prev = Some((r, rhos, phis));
    }
    let two_n = 2.0 * n as f64;
    Ok(GainReport {
        c1,
        c2,
        c3,
        c4,
        psi_ok: g.gamma_psi3 >= two_n * c1,
        psi_prime_ok: g.gamma_psip3 >= two_n * c2,
        lambda_ok: g.gamma_lambda3 >= two_n * c3,
        e_ok: g.gamma_e3 >= c4,
    })
}
