//! Scalar expressions in the allocation `x` and time `t`.
//!
//! Trees are kept in a lightly simplified form: the smart constructors fold
//! constant subtrees and drop neutral elements, so derivatives of the case
//! study costs print the way one would write them by hand.

use std::fmt;

/// Differentiation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    T,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn constant(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Whether the expression mentions the given variable.
    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::X => var == Var::X,
            Expr::T => var == Var::T,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::T => t,
            Expr::Neg(a) => -a.eval(x, t),
            Expr::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Expr::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Expr::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Expr::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Expr::Pow(a, c) => power(a.eval(x, t), *c),
            Expr::Sin(a) => a.eval(x, t).sin(),
            Expr::Cos(a) => a.eval(x, t).cos(),
        }
    }

    /// Rebuilds the tree bottom-up through the simplifying constructors.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::X | Expr::T => self.clone(),
            Expr::Neg(a) => neg(a.simplify()),
            Expr::Add(a, b) => add(a.simplify(), b.simplify()),
            Expr::Sub(a, b) => sub(a.simplify(), b.simplify()),
            Expr::Mul(a, b) => mul(a.simplify(), b.simplify()),
            Expr::Div(a, b) => div(a.simplify(), b.simplify()),
            Expr::Pow(a, c) => pow(a.simplify(), *c),
            Expr::Sin(a) => sin(a.simplify()),
            Expr::Cos(a) => cos(a.simplify()),
        }
    }

    /// Exact symbolic derivative, simplified.
    pub fn differentiate(&self, var: Var) -> Expr {
        self.simplify().derive(var)
    }

    fn derive(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::X => Expr::Const(if var == Var::X { 1.0 } else { 0.0 }),
            Expr::T => Expr::Const(if var == Var::T { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derive(var)),
            Expr::Add(a, b) => add(a.derive(var), b.derive(var)),
            Expr::Sub(a, b) => sub(a.derive(var), b.derive(var)),
            Expr::Mul(a, b) => add(
                mul(a.derive(var), (**b).clone()),
                mul((**a).clone(), b.derive(var)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.derive(var), (**b).clone()),
                    mul((**a).clone(), b.derive(var)),
                );
                div(num, pow((**b).clone(), 2.0))
            }
            Expr::Pow(a, c) => mul(
                mul(Expr::Const(*c), pow((**a).clone(), c - 1.0)),
                a.derive(var),
            ),
            Expr::Sin(a) => mul(cos((**a).clone()), a.derive(var)),
            Expr::Cos(a) => mul(neg(sin((**a).clone())), a.derive(var)),
        }
    }

    /// Flattens the tree into a postfix program for repeated evaluation.
    pub fn compile(&self) -> Compiled {
        let mut ops = Vec::new();
        self.emit(&mut ops);
        let depth = max_depth(&ops);
        Compiled { ops, depth }
    }

    fn emit(&self, ops: &mut Vec<Op>) {
        match self {
            Expr::Const(c) => ops.push(Op::Const(*c)),
            Expr::X => ops.push(Op::X),
            Expr::T => ops.push(Op::T),
            Expr::Neg(a) => {
                a.emit(ops);
                ops.push(Op::Neg);
            }
            Expr::Add(a, b) => binary(ops, a, b, Op::Add),
            Expr::Sub(a, b) => binary(ops, a, b, Op::Sub),
            Expr::Mul(a, b) => binary(ops, a, b, Op::Mul),
            Expr::Div(a, b) => binary(ops, a, b, Op::Div),
            Expr::Pow(a, c) => {
                a.emit(ops);
                ops.push(match integer_exponent(*c) {
                    Some(k) => Op::PowI(k),
                    None => Op::PowF(*c),
                });
            }
            Expr::Sin(a) => {
                a.emit(ops);
                ops.push(Op::Sin);
            }
            Expr::Cos(a) => {
                a.emit(ops);
                ops.push(Op::Cos);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn binary(ops: &mut Vec<Op>, a: &Expr, b: &Expr, op: Op) {
    a.emit(ops);
    b.emit(ops);
    ops.push(op);
}

fn integer_exponent(c: f64) -> Option<i32> {
    (c.fract() == 0.0 && c.abs() <= 64.0).then_some(c as i32)
}

fn power(base: f64, exponent: f64) -> f64 {
    match integer_exponent(exponent) {
        Some(k) => base.powi(k),
        None => base.powf(exponent),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), None) => b,
        (None, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(0.0), None) => neg(b),
        (None, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(c), None) => scale(c, b),
        (None, Some(c)) => scale(c, a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

/// `c * e` with the constant kept on the left and merged into a leading
/// constant factor of `e` when there is one.
fn scale(c: f64, e: Expr) -> Expr {
    if c == 0.0 {
        return Expr::Const(0.0);
    }
    if c == 1.0 {
        return e;
    }
    match e {
        Expr::Mul(l, r) => match l.constant() {
            Some(k) => scale(c * k, *r),
            None => Expr::Mul(Box::new(Expr::Const(c)), Box::new(Expr::Mul(l, r))),
        },
        other => Expr::Mul(Box::new(Expr::Const(c)), Box::new(other)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        (Some(0.0), _) => Expr::Const(0.0),
        (None, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, c: f64) -> Expr {
    if c == 0.0 {
        return Expr::Const(1.0);
    }
    if c == 1.0 {
        return a;
    }
    match a {
        Expr::Const(v) => Expr::Const(power(v, c)),
        other => Expr::Pow(Box::new(other), c),
    }
}

pub fn sin(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => Expr::Const(v.sin()),
        other => Expr::Sin(Box::new(other)),
    }
}

pub fn cos(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => Expr::Const(v.cos()),
        other => Expr::Cos(Box::new(other)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => f.write_str("x"),
            Expr::T => f.write_str("t"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                // `--2` would fold back into a constant, keep it explicit
                let wrap =
                    a.precedence() < 3 || a.constant().is_some() || matches!(**a, Expr::Neg(_));
                write_wrapped(f, a, wrap)
            }
            Expr::Add(a, b) => write_binary(f, a, " + ", b, 1),
            Expr::Sub(a, b) => write_binary(f, a, " - ", b, 1),
            Expr::Mul(a, b) => write_binary(f, a, "*", b, 2),
            Expr::Div(a, b) => write_binary(f, a, "/", b, 2),
            Expr::Pow(a, c) => {
                write_wrapped(f, a, a.precedence() <= 4)?;
                if *c < 0.0 {
                    write!(f, "^({c})")
                } else {
                    write!(f, "^{c}")
                }
            }
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Left-associative binary operator at level `prec`: the left operand needs
/// parentheses only below `prec`, the right operand at or below it.
fn write_binary(f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr, prec: u8) -> fmt::Result {
    // a leading negative constant is fine at the start of a sum, not elsewhere
    write_wrapped(f, a, a.precedence() < prec)?;
    f.write_str(op)?;
    write_wrapped(f, b, b.precedence() <= prec || b.precedence() == 3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    X,
    T,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    PowI(i32),
    PowF(f64),
    Sin,
    Cos,
}

/// Postfix form of an [`Expr`], evaluated with a fixed-size stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    ops: Vec<Op>,
    depth: usize,
}

const INLINE_STACK: usize = 32;

impl Compiled {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        if self.depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            run(&self.ops, &mut stack, x, t)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            run(&self.ops, &mut stack, x, t)
        }
    }

    /// Value when the program is a single constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }
}

fn run(ops: &[Op], stack: &mut [f64], x: f64, t: f64) -> f64 {
    let mut top = 0usize;
    for op in ops {
        match *op {
            Op::Const(c) => {
                stack[top] = c;
                top += 1;
            }
            Op::X => {
                stack[top] = x;
                top += 1;
            }
            Op::T => {
                stack[top] = t;
                top += 1;
            }
            Op::Neg => stack[top - 1] = -stack[top - 1],
            Op::PowI(k) => stack[top - 1] = stack[top - 1].powi(k),
            Op::PowF(c) => stack[top - 1] = stack[top - 1].powf(c),
            Op::Sin => stack[top - 1] = stack[top - 1].sin(),
            Op::Cos => stack[top - 1] = stack[top - 1].cos(),
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                top -= 1;
                let b = stack[top];
                let a = &mut stack[top - 1];
                match *op {
                    Op::Add => *a += b,
                    Op::Sub => *a -= b,
                    Op::Mul => *a *= b,
                    _ => *a /= b,
                }
            }
        }
    }
    stack[0]
}

fn max_depth(ops: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in ops {
        match op {
            Op::Const(_) | Op::X | Op::T => depth += 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
            _ => {}
        }
        max = max.max(depth);
    }
    max
}
