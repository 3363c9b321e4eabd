//! Arithmetic expression DSL for pairwise potentials and one-body fields.
//!
//! Expressions are written over wire-position variables (`x1`, `x2`, ...),
//! the time variable `t`, declared model constants, and the implicit
//! constants `pi` and `e`. The operator set is `+ - * / ^` with the usual
//! precedence, `^` right-associative and binding tighter than unary minus
//! (`-x1^2` reads as `-(x1^2)`), and a closed function set:
//! `sin cos exp sqrt abs tanh` (one argument), `min max` (two arguments).
//!
//! Parsed expressions are immutable and safe to evaluate concurrently.

mod lexer;
mod parser;

pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::fmt;

/// Binary operators in increasing precedence: `+ -` < `* /` < `^`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// The closed set of callable functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// An immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    Variable(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Evaluate against a variable resolver. `pi` and `e` resolve implicitly
    /// unless the resolver binds them first.
    pub fn evaluate_with(&self, resolve: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        let value = match self {
            Expr::Constant(c) => *c,
            Expr::Variable(name) => match resolve(name) {
                Some(v) => v,
                None => match name.as_str() {
                    "pi" => std::f64::consts::PI,
                    "e" => std::f64::consts::E,
                    _ => {
                        return Err(Error::Eval {
                            message: format!("unbound variable `{name}`"),
                            context: self.to_string(),
                        })
                    }
                },
            },
            Expr::Neg(inner) => -inner.evaluate_with(resolve)?,
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.evaluate_with(resolve)?;
                let b = rhs.evaluate_with(resolve)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(func, args) => {
                let mut vals = [0.0; 2];
                for (slot, arg) in vals.iter_mut().zip(args) {
                    *slot = arg.evaluate_with(resolve)?;
                }
                match func {
                    Func::Sin => vals[0].sin(),
                    Func::Cos => vals[0].cos(),
                    Func::Exp => vals[0].exp(),
                    Func::Sqrt => vals[0].sqrt(),
                    Func::Abs => vals[0].abs(),
                    Func::Tanh => vals[0].tanh(),
                    Func::Min => vals[0].min(vals[1]),
                    Func::Max => vals[0].max(vals[1]),
                }
            }
        };
        if !value.is_finite() {
            return Err(Error::Eval {
                message: "result is not finite".into(),
                context: self.to_string(),
            });
        }
        Ok(value)
    }

    /// Evaluate against a slice of `(name, value)` bindings.
    pub fn evaluate(&self, bindings: &[(&str, f64)]) -> Result<f64> {
        self.evaluate_with(&|name| {
            bindings
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
        })
    }

    /// Every variable name appearing in the tree, excluding the implicit
    /// constants `pi` and `e`.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out.remove("pi");
        out.remove("e");
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Constant(_) => {}
            Expr::Variable(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(inner) => inner.collect_variables(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.collect_variables(out);
                rhs.collect_variables(out);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.collect_variables(out);
                }
            }
        }
    }

    /// True if `t` occurs free (the expression is time-dependent).
    pub fn depends_on_time(&self) -> bool {
        self.free_variables().contains("t")
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Constant(_) | Expr::Variable(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

/// Precedence-aware printing; `parse(e.to_string())` reproduces `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) => write!(f, "{c}"),
            Expr::Variable(name) => write!(f, "{name}"),
            Expr::Neg(inner) => {
                if inner.precedence() <= self.precedence() {
                    write!(f, "-({inner})")
                } else {
                    write!(f, "-{inner}")
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let prec = op.precedence();
                // `^` is right-associative, everything else left-associative.
                let (lmin, rmin) = if *op == BinOp::Pow {
                    (prec + 1, prec)
                } else {
                    (prec, prec + 1)
                };
                if lhs.precedence() < lmin {
                    write!(f, "({lhs})")?;
                } else {
                    write!(f, "{lhs}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if rhs.precedence() < rmin {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
