//! Symbolic differentiation with light algebraic simplification.
//!
//! The smart constructors below fold constants and drop neutral elements;
//! they do not attempt a canonical form.

use super::{Expr, Func, Var};

fn num(c: f64) -> Expr {
    Expr::Num(c)
}

fn finite(c: f64) -> Option<Expr> {
    c.is_finite().then_some(Expr::Num(c))
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) => finite(x + y).unwrap_or_else(|| Expr::Add(Box::new(a), Box::new(b))),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => sub(a, *inner),
            b => Expr::Add(Box::new(a), Box::new(b)),
        },
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) => finite(x - y).unwrap_or_else(|| Expr::Sub(Box::new(a), Box::new(b))),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => add(a, *inner),
            b => Expr::Sub(Box::new(a), Box::new(b)),
        },
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(c) => num(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) => finite(x * y).unwrap_or_else(|| Expr::Mul(Box::new(a), Box::new(b))),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        // keep constants on the left
        (None, Some(_)) => Expr::Mul(Box::new(b), Box::new(a)),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) if y != 0.0 => {
            finite(x / y).unwrap_or_else(|| Expr::Div(Box::new(a), Box::new(b)))
        }
        (Some(x), _) if x == 0.0 => num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Expr, n: i32) -> Expr {
    match (a.as_constant(), n) {
        (_, 0) => num(1.0),
        (_, 1) => a,
        (Some(x), n) if x != 0.0 || n > 0 => {
            finite(x.powi(n)).unwrap_or_else(|| Expr::Pow(Box::new(a), n))
        }
        _ => Expr::Pow(Box::new(a), n),
    }
}

fn func(f: Func, a: Expr) -> Expr {
    Expr::Func(f, Box::new(a))
}

impl Expr {
    /// Exact symbolic partial derivative with respect to `v`.
    pub fn differentiate(&self, v: &Var) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(w) => num(if w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(v)),
            Expr::Add(a, b) => add(a.differentiate(v), b.differentiate(v)),
            Expr::Sub(a, b) => sub(a.differentiate(v), b.differentiate(v)),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(v), (**b).clone()),
                mul((**a).clone(), b.differentiate(v)),
            ),
            Expr::Div(a, b) => {
                let da = a.differentiate(v);
                let db = b.differentiate(v);
                if db.is_zero() {
                    div(da, (**b).clone())
                } else {
                    div(
                        sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                        pow((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, n) => {
                let da = a.differentiate(v);
                if da.is_zero() {
                    return num(0.0);
                }
                mul(mul(num(*n as f64), pow((**a).clone(), n - 1)), da)
            }
            Expr::Func(f, a) => {
                let da = a.differentiate(v);
                if da.is_zero() {
                    return num(0.0);
                }
                let outer = match f {
                    Func::Sin => func(Func::Cos, (**a).clone()),
                    Func::Cos => neg(func(Func::Sin, (**a).clone())),
                    Func::Exp => self.clone(),
                    Func::Log => return div(da, (**a).clone()),
                };
                mul(outer, da)
            }
        }
    }

    /// Mixed partial derivative taken in the order given.
    pub fn differentiate_all(&self, vars: &[Var]) -> Expr {
        let mut e = self.clone();
        for v in vars {
            if e.is_zero() {
                break;
            }
            e = e.differentiate(v);
        }
        e
    }
}
