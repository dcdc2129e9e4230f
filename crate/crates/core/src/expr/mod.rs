//! Closed-form interaction potentials.
//!
//! Expressions are small trees over real literals, fiber coordinates
//! `x(vertex, index)`, the arithmetic operators and `sin`, `cos`, `exp`,
//! `log`. They are parsed once, never mutated, and differentiated
//! symbolically to any order.

pub(crate) mod diff;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use parse::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unbound variable {0}")]
    UnboundVariable(Var),
    #[error("domain error: {0}")]
    Domain(String),
}

/// A fiber coordinate: component `index` of the point at `vertex`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub vertex: String,
    pub index: usize,
}

impl Var {
    pub fn new(vertex: &str, index: usize) -> Self {
        Self {
            vertex: vertex.to_string(),
            index,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x({},{})", self.vertex, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn var(vertex: &str, index: usize) -> Self {
        Expr::Var(Var::new(vertex, index))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(c) if *c == 0.0)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Num(c) => Some(*c),
            _ => None,
        }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn evaluate<F>(&self, lookup: &F) -> Result<f64, ExprError>
    where
        F: Fn(&Var) -> Option<f64>,
    {
        Ok(match self {
            Expr::Num(c) => *c,
            Expr::Var(v) => lookup(v).ok_or_else(|| ExprError::UnboundVariable(v.clone()))?,
            Expr::Neg(a) => -a.evaluate(lookup)?,
            Expr::Add(a, b) => a.evaluate(lookup)? + b.evaluate(lookup)?,
            Expr::Sub(a, b) => a.evaluate(lookup)? - b.evaluate(lookup)?,
            Expr::Mul(a, b) => a.evaluate(lookup)? * b.evaluate(lookup)?,
            Expr::Div(a, b) => {
                let num = a.evaluate(lookup)?;
                let den = b.evaluate(lookup)?;
                if den == 0.0 {
                    return Err(ExprError::Domain(format!("division by zero in {self}")));
                }
                num / den
            }
            Expr::Pow(a, n) => {
                let base = a.evaluate(lookup)?;
                if *n < 0 && base == 0.0 {
                    return Err(ExprError::Domain(format!("zero to a negative power in {self}")));
                }
                base.powi(*n)
            }
            Expr::Func(f, a) => {
                let x = a.evaluate(lookup)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(ExprError::Domain(format!("log of {x} in {self}")));
                        }
                        x.ln()
                    }
                }
            }
        })
    }

    pub fn evaluate_map(&self, binding: &HashMap<Var, f64>) -> Result<f64, ExprError> {
        self.evaluate(&|v: &Var| binding.get(v).copied())
    }

    /// Printing precedence: 1 additive, 2 multiplicative, 3 unary minus, 4 power, 5 atom.
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Func(..) => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_operand(f, a, a.precedence() < 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (op, level) = match self {
                    Expr::Add(..) => ("+", 1),
                    Expr::Sub(..) => ("-", 1),
                    Expr::Mul(..) => ("*", 2),
                    _ => ("/", 2),
                };
                write_operand(f, a, a.precedence() < level)?;
                write!(f, "{op}")?;
                // operators are left-associative: a right operand at the same level needs parentheses
                write_operand(f, b, b.precedence() <= level)
            }
            Expr::Pow(a, n) => {
                write_operand(f, a, a.precedence() < 5)?;
                write!(f, "^{n}")
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, f64)]) -> HashMap<Var, f64> {
        pairs.iter().map(|&(v, x)| (Var::new(v, 0), x)).collect()
    }

    #[test]
    fn evaluates_examples() {
        let e = parse("x(v0,0)*x(v1,0)").unwrap();
        assert_eq!(e.evaluate_map(&bind(&[("v0", 2.0), ("v1", 3.0)])).unwrap(), 6.0);
        let e = parse("cos(x(v0,0))").unwrap();
        assert_eq!(e.evaluate_map(&bind(&[("v0", 0.0)])).unwrap(), 1.0);
        let e = parse("0.5*(x(v1,0)-x(v0,0))^2").unwrap();
        assert_eq!(e.evaluate_map(&bind(&[("v0", 0.0), ("v1", 1.0)])).unwrap(), 0.5);
    }

    #[test]
    fn domain_errors() {
        let e = parse("1/x(v0,0)").unwrap();
        assert!(matches!(
            e.evaluate_map(&bind(&[("v0", 0.0)])),
            Err(ExprError::Domain(_))
        ));
        let e = parse("log(x(v0,0))").unwrap();
        assert!(matches!(
            e.evaluate_map(&bind(&[("v0", -1.0)])),
            Err(ExprError::Domain(_))
        ));
        let e = parse("x(v0,0)^-2").unwrap();
        assert!(e.evaluate_map(&bind(&[("v0", 0.0)])).is_err());
    }

    #[test]
    fn unbound() {
        let e = parse("x(v0,0)+x(v9,1)").unwrap();
        assert_eq!(
            e.evaluate_map(&bind(&[("v0", 1.0)])),
            Err(ExprError::UnboundVariable(Var::new("v9", 1)))
        );
    }

    #[test]
    fn prints_canonically() {
        let cases = [
            ("x(a,0)-(x(b,0)-x(c,0))", "x(a,0)-(x(b,0)-x(c,0))"),
            ("(x(a,0)-x(b,0))-x(c,0)", "x(a,0)-x(b,0)-x(c,0)"),
            ("-x(a,0)^2", "-x(a,0)^2"),
            ("(-x(a,0))^2", "(-x(a,0))^2"),
            ("2*-3", "2.0*-3.0"),
            ("-(x(a,0)+1)", "-(x(a,0)+1.0)"),
            ("sin(x(a,0)/2)", "sin(x(a,0)/2.0)"),
        ];
        for (src, want) in cases {
            assert_eq!(parse(src).unwrap().to_string(), want, "{src}");
        }
    }

    #[test]
    fn variables_are_collected() {
        let e = parse("x(b,1)*sin(x(a,0))+x(b,1)").unwrap();
        let vars: Vec<_> = e.variables().into_iter().collect();
        assert_eq!(vars, vec![Var::new("a", 0), Var::new("b", 1)]);
    }
}
