use std::fmt;

use super::lex::{tokenize, Tok};
use super::{fmt_rational, Op, PuzzleError, Rational};

/// Answer expression. Parentheses are kept as written so that rendering
/// reproduces the parsed text.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(Rational),
    Paren(Box<Expr>),
    Binary { op: Op, lhs: Box<Expr>, rhs: Box<Expr> },
}

impl Expr {
    pub fn num(v: Rational) -> Self {
        Expr::Num(v)
    }

    pub fn binary(op: Op, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    /// Wraps compound expressions in parentheses; leaves numbers alone.
    pub fn as_operand(self) -> Self {
        match self {
            Expr::Binary { .. } => Expr::Paren(Box::new(self)),
            other => other,
        }
    }

    pub fn eval(&self) -> Result<Rational, PuzzleError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Paren(inner) => inner.eval(),
            Expr::Binary { op, lhs, rhs } => op.apply(lhs.eval()?, rhs.eval()?),
        }
    }

    /// Number literals in left-to-right order.
    pub fn leaves(&self) -> Vec<Rational> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<Rational>) {
        match self {
            Expr::Num(v) => out.push(*v),
            Expr::Paren(inner) => inner.collect_leaves(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_leaves(out);
                rhs.collect_leaves(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => f.write_str(&fmt_rational(v)),
            Expr::Paren(inner) => write!(f, "({inner})"),
            Expr::Binary { op, lhs, rhs } => write!(f, "{lhs} {op} {rhs}"),
        }
    }
}

/// Parses an arithmetic expression with the usual precedence and left
/// associativity.
pub fn parse_expr(text: &str) -> Result<Expr, PuzzleError> {
    let toks = tokenize(text).map_err(|reason| PuzzleError::Parse { line: 0, reason })?;
    let mut parser = ExprParser { toks: &toks, pos: 0 };
    let expr = parser
        .expr(0)
        .map_err(|reason| PuzzleError::Parse { line: 0, reason })?;
    if parser.pos != toks.len() {
        return Err(PuzzleError::Parse { line: 0, reason: "trailing tokens after expression".into() });
    }
    Ok(expr)
}

pub(crate) struct ExprParser<'a> {
    pub(crate) toks: &'a [Tok],
    pub(crate) pos: usize,
}

impl ExprParser<'_> {
    pub(crate) fn expr(&mut self, min_prec: u8) -> Result<Expr, String> {
        let mut lhs = self.atom()?;
        while let Some(Tok::Op(op)) = self.toks.get(self.pos) {
            let op = *op;
            if op.precedence() < min_prec.max(1) {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.toks.get(self.pos) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(*v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr(0)?;
                match self.toks.get(self.pos) {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(Expr::Paren(Box::new(inner)))
                    }
                    _ => Err("missing closing parenthesis".into()),
                }
            }
            Some(t) => Err(format!("unexpected token {t:?} in expression")),
            None => Err("unexpected end of expression".into()),
        }
    }
}
