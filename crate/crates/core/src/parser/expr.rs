//! Arithmetic over literals, params and the rank variable `me`.
//!
//! Time literals normalise to µs, size literals to bytes (KB = 1024 B).

use std::fmt;

use thiserror::Error;

use crate::model::{Params, Rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Us,
    Ms,
    S,
    B,
    Kb,
    Mb,
}

impl Unit {
    pub fn parse(s: &str) -> Option<Unit> {
        Some(match s {
            "us" => Unit::Us,
            "ms" => Unit::Ms,
            "s" => Unit::S,
            "B" => Unit::B,
            "KB" => Unit::Kb,
            "MB" => Unit::Mb,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Us => "us",
            Unit::Ms => "ms",
            Unit::S => "s",
            Unit::B => "B",
            Unit::Kb => "KB",
            Unit::Mb => "MB",
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            Unit::Us | Unit::B => 1.0,
            Unit::Ms => 1e3,
            Unit::S => 1e6,
            Unit::Kb => 1024.0,
            Unit::Mb => 1024.0 * 1024.0,
        }
    }

    pub fn is_time(&self) -> bool {
        matches!(self, Unit::Us | Unit::Ms | Unit::S)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num { value: f64, unit: Option<Unit> },
    Var(String),
    Me,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Num { value, unit: None }
    }

    pub fn us(value: f64) -> Expr {
        Expr::Num { value, unit: Some(Unit::Us) }
    }

    pub fn bytes(value: f64) -> Expr {
        Expr::Num { value, unit: Some(Unit::B) }
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Names of params referenced, in order of appearance.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Num { .. } | Expr::Me => {}
        }
    }

    pub fn uses_me(&self) -> bool {
        match self {
            Expr::Me => true,
            Expr::Neg(e) => e.uses_me(),
            Expr::Bin(_, a, b) => a.uses_me() || b.uses_me(),
            _ => false,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

/// Shortest round-tripping decimal form; never uses exponent notation.
pub(crate) fn fmt_number(v: f64) -> String {
    format!("{v}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num { value, unit } => {
                write!(f, "{}", fmt_number(*value))?;
                if let Some(u) = unit {
                    f.write_str(u.as_str())?;
                }
                Ok(())
            }
            Expr::Var(v) => f.write_str(v),
            Expr::Me => f.write_str("me"),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // left-associative: an equal-precedence right operand needs parens
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("`me` is not available here")]
    NoRank,
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression evaluates to negative value {0}")]
    Negative(f64),
    #[error("expression evaluates to a non-finite value")]
    NonFinite,
    #[error("{0}")]
    Invalid(String),
}

/// Evaluate `e`. The final result must be finite and non-negative;
/// intermediate values may be negative.
pub fn eval_expr(e: &Expr, params: &Params, me: Option<Rank>) -> Result<f64, EvalError> {
    let v = eval_inner(e, params, me)?;
    if !v.is_finite() {
        return Err(EvalError::NonFinite);
    }
    if v < 0.0 {
        return Err(EvalError::Negative(v));
    }
    Ok(v)
}

fn eval_inner(e: &Expr, params: &Params, me: Option<Rank>) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Num { value, unit } => value * unit.map_or(1.0, |u| u.scale()),
        Expr::Var(name) => params.get(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
        Expr::Me => me.ok_or(EvalError::NoRank)? as f64,
        Expr::Neg(inner) => -eval_inner(inner, params, me)?,
        Expr::Bin(op, a, b) => {
            let x = eval_inner(a, params, me)?;
            let y = eval_inner(b, params, me)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_expr;

    fn eval(src: &str, params: &Params) -> Result<f64, EvalError> {
        eval_expr(&parse_expr(src).unwrap(), params, Some(3))
    }

    #[test]
    fn worked_examples() {
        let params = Params::new().with("N", 1_000_000.0).with("P", 5.0);
        assert!((eval("N/(P-1) * 0.1us", &params).unwrap() - 25000.0).abs() < 1e-9);
        assert_eq!(eval("8B", &params).unwrap(), 8.0);
        assert_eq!(eval("2KB", &params).unwrap(), 2048.0);
        assert_eq!(eval("1MB", &params).unwrap(), 1048576.0);
        assert_eq!(eval("2ms + 1s", &params).unwrap(), 1_002_000.0);
        assert_eq!(eval("me * 2", &params).unwrap(), 6.0);
    }

    #[test]
    fn errors() {
        let params = Params::new().with("P", 1.0);
        assert_eq!(eval("Q + 1", &params), Err(EvalError::Unbound("Q".into())));
        assert_eq!(eval("4 / (P - 1)", &params), Err(EvalError::DivisionByZero));
        assert!(matches!(eval("P - 2", &params), Err(EvalError::Negative(_))));
        assert_eq!(eval("P - 2 + 1", &params).unwrap(), 0.0);
        assert_eq!(eval_expr(&Expr::Me, &params, None), Err(EvalError::NoRank));
    }

    #[test]
    fn display_minimal_parens() {
        for src in ["a - (b - c)", "a - b - c", "(a + b) * c", "a / (b * c)", "-(a + b)", "N / (P - 1) * 0.1us"] {
            assert_eq!(parse_expr(src).unwrap().to_string(), src);
        }
        assert_eq!(fmt_number(1e6), "1000000");
        assert_eq!(fmt_number(0.1), "0.1");
    }
}
