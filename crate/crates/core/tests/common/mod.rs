//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvra::scenario::{Expr, Var};

/// Random expression text from the scenario grammar. Divisors and
/// fractional-power bases are kept away from zero so the expression is
/// smooth on the whole sampling box.
pub fn random_expr(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    term(&mut rng, 4)
}

fn number(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4) {
        0 => rng.random_range(1..10).to_string(),
        1 => format!("{:.2}", rng.random_range(0.05..3.0)),
        2 => format!(".{}", rng.random_range(1..100)),
        _ => format!("{}e-1", rng.random_range(1..30)),
    }
}

fn positive(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let inner = term(rng, depth);
    format!("({} + ({inner})^2)", rng.random_range(1..4))
}

fn term(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 {
        return match rng.random_range(0..3) {
            0 => "x".into(),
            1 => "t".into(),
            _ => number(rng),
        };
    }
    let d = depth - 1;
    match rng.random_range(0..11) {
        0 => format!("{} + {}", term(rng, d), term(rng, d)),
        1 => format!("{} - ({})", term(rng, d), term(rng, d)),
        2 => format!("({})*({})", term(rng, d), term(rng, d)),
        3 => format!("({})/{}", term(rng, d), positive(rng, d)),
        // shallow bases keep the degree, and so the oscillation rate, moderate
        4 => format!("({})^{}", term(rng, d.min(1)), rng.random_range(2..4)),
        5 => format!("{}^{:.1}", positive(rng, d), rng.random_range(-1.5..1.5)),
        6 => format!("sin({})", term(rng, d)),
        7 => format!("cos({})", term(rng, d)),
        8 => format!("-({})", term(rng, d)),
        9 => format!("{}*x", number(rng)),
        _ => term(rng, 0),
    }
}

/// Central difference refined by Ridders' extrapolation.
pub fn central_difference(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    const LEVELS: usize = 14;
    const SHRINK: f64 = 1.4;
    let mut h = 2e-3 * at.abs().max(1.0);
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    let (mut best, mut err) = (f64::NAN, f64::INFINITY);
    for i in 0..LEVELS {
        table[0][i] = (f(at + h) - f(at - h)) / (2.0 * h);
        let mut factor = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * factor - table[j - 1][i - 1]) / (factor - 1.0);
            factor *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        h /= SHRINK;
    }
    best
}

/// Largest relative gap between the symbolic derivative and a central
/// difference over a grid of points in [-1.3, 1.2] x [0, 2.2]. The gap is
/// relative to `max(|exact|, |f|, 1)`: rounding in the difference quotient
/// scales with the function value, not with the slope.
pub fn derivative_gap(e: &Expr) -> f64 {
    let dx = e.differentiate(Var::X);
    let dt = e.differentiate(Var::T);
    let mut worst: f64 = 0.0;
    for &x in &[-1.3f64, -0.4, 0.6, 1.2] {
        for &t in &[0.0f64, 0.7, 1.5, 2.2] {
            let fd_x = central_difference(|v| e.eval(v, t), x);
            let fd_t = central_difference(|v| e.eval(x, v), t);
            let value = e.eval(x, t).abs();
            for (exact, fd) in [(dx.eval(x, t), fd_x), (dt.eval(x, t), fd_t)] {
                worst = worst.max((exact - fd).abs() / exact.abs().max(value).max(1.0));
            }
        }
    }
    worst
}
