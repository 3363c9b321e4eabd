//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, loosest to tightest:
//!   `+ -`  <  `* /`  <  unary `-`  <  `^` (right-associative).

use super::lexer::{tokenize, Token, TokenKind};
use super::{BinOp, Expr, Func};
use crate::error::{Error, Result};

/// Parse a source string into an expression tree.
pub fn parse(source: &str) -> Result<Expr> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, idx: 0 };
    let expr = p.additive()?;
    let t = p.peek();
    if t.kind != TokenKind::End {
        return Err(Error::Parse {
            message: format!("unexpected `{}`", t.text),
            offset: t.position,
        });
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.idx]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.idx].clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek().kind == kind {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            let t = self.peek();
            Err(Error::Parse {
                message: format!("expected {what}, found `{}`", display_text(t)),
                offset: t.position,
            })
        }
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(TokenKind::Minus) {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(TokenKind::Caret) {
            // Right-associative; the exponent may itself carry a unary minus.
            let exponent = self.unary()?;
            Ok(Expr::Binary(
                BinOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.peek().clone();
        match t.kind {
            TokenKind::Number => {
                self.bump();
                // Finiteness was checked by the lexer.
                Ok(Expr::Constant(t.text.parse().expect("lexer validated")))
            }
            TokenKind::Ident => {
                self.bump();
                if self.peek().kind == TokenKind::LParen {
                    self.call(&t)
                } else {
                    Ok(Expr::Variable(t.text))
                }
            }
            TokenKind::LParen => {
                self.bump();
                let inner = self.additive()?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(Error::Parse {
                message: format!("expected expression, found `{}`", display_text(&t)),
                offset: t.position,
            }),
        }
    }

    fn call(&mut self, name: &Token) -> Result<Expr> {
        let func = Func::from_name(&name.text).ok_or_else(|| Error::Parse {
            message: format!("unknown function `{}`", name.text),
            offset: name.position,
        })?;
        self.expect(TokenKind::LParen, "`(`")?;
        let mut args = vec![self.additive()?];
        while self.eat(TokenKind::Comma) {
            args.push(self.additive()?);
        }
        self.expect(TokenKind::RParen, "`)`")?;
        if args.len() != func.arity() {
            return Err(Error::Parse {
                message: format!(
                    "`{}` takes {} argument(s), got {}",
                    func.name(),
                    func.arity(),
                    args.len()
                ),
                offset: name.position,
            });
        }
        Ok(Expr::Call(func, args))
    }
}

fn display_text(t: &Token) -> String {
    if t.kind == TokenKind::End {
        "end of input".to_string()
    } else {
        t.text.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caret_is_right_associative() {
        let e = parse("2^3^2").unwrap();
        assert_eq!(
            e,
            Expr::Binary(
                BinOp::Pow,
                Box::new(Expr::Constant(2.0)),
                Box::new(Expr::Binary(
                    BinOp::Pow,
                    Box::new(Expr::Constant(3.0)),
                    Box::new(Expr::Constant(2.0)),
                )),
            )
        );
        assert_eq!(e.evaluate(&[]).unwrap(), 512.0);
    }

    #[test]
    fn caret_binds_tighter_than_unary_minus() {
        let e = parse("-x1^2").unwrap();
        assert_eq!(
            e,
            Expr::Neg(Box::new(Expr::Binary(
                BinOp::Pow,
                Box::new(Expr::Variable("x1".into())),
                Box::new(Expr::Constant(2.0)),
            )))
        );
        assert_eq!(e.evaluate(&[("x1", 3.0)]).unwrap(), -9.0);
    }

    #[test]
    fn unary_minus_binds_tighter_than_mul() {
        // -a*b parses as (-a)*b
        let e = parse("-2*3").unwrap();
        assert_eq!(e.evaluate(&[]).unwrap(), -6.0);
        assert_eq!(
            e,
            Expr::Binary(
                BinOp::Mul,
                Box::new(Expr::Neg(Box::new(Expr::Constant(2.0)))),
                Box::new(Expr::Constant(3.0)),
            )
        );
    }

    #[test]
    fn negative_exponent_is_allowed() {
        let e = parse("2^-2").unwrap();
        assert_eq!(e.evaluate(&[]).unwrap(), 0.25);
    }

    #[test]
    fn parentheses_override_precedence() {
        assert_eq!(parse("(1+2)*3").unwrap().evaluate(&[]).unwrap(), 9.0);
        assert_eq!(parse("1+2*3").unwrap().evaluate(&[]).unwrap(), 7.0);
    }

    #[test]
    fn syntax_error_carries_offset() {
        let err = parse("x1 + * 2").unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_function_and_arity_errors() {
        assert!(matches!(
            parse("frob(x1)"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(parse("sin(x1, x2)"), Err(Error::Parse { .. })));
        assert!(matches!(parse("min(x1)"), Err(Error::Parse { .. })));
        assert!(parse("min(x1, x2)").is_ok());
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(parse("1 2").is_err());
        assert!(parse("x1)").is_err());
        assert!(parse("").is_err());
    }
}
