//! Step-by-step reasoning paths.
//!
//! Canonical text, one step per line:
//!
//! ```text
//! 25 + 5 = 30 (left: 5 33 30)
//! 30 / 5 = 6 (left: 33 6)
//! 33 - 6 = 27 (left: 27)
//! Answer: 33 - ((25 + 5) / 5) = 27
//! ```

use std::fmt;

use super::expr::{Expr, ExprParser};
use super::lex::{tokenize, Tok};
use super::{fmt_rational, remove_one, Op, PuzzleError, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReasoningStep {
    pub a: Rational,
    pub b: Rational,
    pub op: Op,
    pub result: Rational,
    /// Remaining numbers after the step, in the order they are written.
    pub remaining: Vec<Rational>,
}

impl fmt::Display for ReasoningStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let left: Vec<String> = self.remaining.iter().map(fmt_rational).collect();
        write!(
            f,
            "{} {} {} = {} (left: {})",
            fmt_rational(&self.a),
            self.op,
            fmt_rational(&self.b),
            fmt_rational(&self.result),
            left.join(" ")
        )
    }
}

/// Final line: `Answer: <expr> = <value>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Answer {
    pub expr: Expr,
    pub value: Rational,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Answer: {} = {}", self.expr, fmt_rational(&self.value))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReasoningPath {
    pub steps: Vec<ReasoningStep>,
    pub answer: Answer,
}

impl ReasoningPath {
    /// Canonical text; lines joined by `\n`, no trailing newline.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ReasoningPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            writeln!(f, "{step}")?;
        }
        write!(f, "{}", self.answer)
    }
}

/// Applies one step to a multiset of numbers. The result is `remaining`
/// with the first occurrences of `a` and `b` removed and the result
/// appended. `step.remaining` is not consulted.
pub fn apply_step(remaining: &[Rational], step: &ReasoningStep) -> Result<Vec<Rational>, PuzzleError> {
    let mut next = remaining.to_vec();
    if !remove_one(&mut next, &step.a) {
        return Err(PuzzleError::OperandNotAvailable(step.a));
    }
    if !remove_one(&mut next, &step.b) {
        return Err(PuzzleError::OperandNotAvailable(step.b));
    }
    let actual = step.op.apply(step.a, step.b)?;
    if actual != step.result {
        return Err(PuzzleError::ResultMismatch { claimed: step.result, actual });
    }
    next.push(actual);
    Ok(next)
}

fn parse_err(line: usize, reason: impl Into<String>) -> PuzzleError {
    PuzzleError::Parse { line, reason: reason.into() }
}

/// Parses a single step line such as `12 * 2 = 24 (left: 9 10 24)`.
pub fn parse_step_line(line: &str, index: usize) -> Result<ReasoningStep, PuzzleError> {
    let toks = tokenize(line).map_err(|r| parse_err(index, r))?;
    let (a, op, b, result) = match toks.get(..5) {
        Some([Tok::Num(a), Tok::Op(op), Tok::Num(b), Tok::Eq, Tok::Num(r)]) => (*a, *op, *b, *r),
        _ => return Err(parse_err(index, "expected `a op b = r`")),
    };
    match toks.get(5..7) {
        Some([Tok::LParen, Tok::Left]) => {}
        _ => return Err(parse_err(index, "expected `(left: ...)`")),
    }
    let mut remaining = Vec::new();
    let mut pos = 7;
    loop {
        match toks.get(pos) {
            Some(Tok::Num(v)) => remaining.push(*v),
            Some(Tok::RParen) => break,
            _ => return Err(parse_err(index, "unterminated remaining list")),
        }
        pos += 1;
    }
    if pos + 1 != toks.len() {
        return Err(parse_err(index, "trailing tokens after remaining list"));
    }
    Ok(ReasoningStep { a, b, op, result, remaining })
}

/// Parses an answer line such as `Answer: (12 * 2) * (10 - 9) = 24`.
pub(crate) fn parse_answer_line(line: &str, index: usize) -> Result<Answer, PuzzleError> {
    let toks = tokenize(line).map_err(|r| parse_err(index, r))?;
    if toks.first() != Some(&Tok::Answer) {
        return Err(parse_err(index, "expected `Answer:`"));
    }
    let body = &toks[1..];
    let mut parser = ExprParser { toks: body, pos: 0 };
    let expr = parser.expr(0).map_err(|r| parse_err(index, r))?;
    match body.get(parser.pos..) {
        Some([Tok::Eq, Tok::Num(v)]) => Ok(Answer { expr, value: *v }),
        _ => Err(parse_err(index, "expected `= <value>` after the answer expression")),
    }
}

/// Parses a path. Blank lines and runs of spaces are tolerated; the last
/// non-blank line must be the answer and every earlier line a step.
pub fn parse_path(text: &str) -> Result<ReasoningPath, PuzzleError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let Some((&(answer_idx, answer_line), step_lines)) = lines.split_last() else {
        return Err(parse_err(0, "empty path"));
    };
    let steps = step_lines
        .iter()
        .map(|&(i, l)| parse_step_line(l, i))
        .collect::<Result<Vec<_>, _>>()?;
    let answer = parse_answer_line(answer_line, answer_idx)?;
    Ok(ReasoningPath { steps, answer })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LISTING: &str = "25 + 5 = 30 (left: 5 33 30)\n30 / 5 = 6 (left: 33 6)\n33 - 6 = 27 (left: 27)\nAnswer: 33 - ((25 + 5) / 5) = 27";

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| Rational::from_integer(x)).collect()
    }

    fn step(text: &str) -> ReasoningStep {
        parse_step_line(text, 0).unwrap()
    }

    #[test]
    fn apply_step_examples() {
        let out = apply_step(&ints(&[2, 9, 10, 12]), &step("12 * 2 = 24 (left: 9 10 24)")).unwrap();
        assert_eq!(out, ints(&[9, 10, 24]));
        let out = apply_step(&ints(&[24, 1]), &step("24 * 1 = 24 (left: 24)")).unwrap();
        assert_eq!(out, ints(&[24]));
        let err = apply_step(&ints(&[5, 5]), &step("5 + 5 = 11 (left: 11)")).unwrap_err();
        assert!(matches!(err, PuzzleError::ResultMismatch { .. }));
        let err = apply_step(&ints(&[5, 0]), &step("5 / 0 = 0 (left: 0)")).unwrap_err();
        assert_eq!(err, PuzzleError::DivisionByZero);
        let err = apply_step(&ints(&[5, 6]), &step("5 + 5 = 10 (left: 10)")).unwrap_err();
        assert_eq!(err, PuzzleError::OperandNotAvailable(Rational::from_integer(5)));
    }

    #[test]
    fn parses_listing_path() {
        let path = parse_path(LISTING).unwrap();
        assert_eq!(path.steps.len(), 3);
        assert_eq!(path.answer.expr.to_string(), "33 - ((25 + 5) / 5)");
        assert_eq!(path.answer.value, Rational::from_integer(27));
        assert_eq!(path.steps[0].remaining, ints(&[5, 33, 30]));
        assert_eq!(path.render(), LISTING);
    }

    #[test]
    fn whitespace_is_normalized() {
        let messy = "  25  +   5 = 30 (left:  5 33 30)\n\n30 / 5 = 6 (left: 33 6)  \n33 - 6 = 27 (left: 27)\nAnswer:   33 - ((25 + 5) / 5) =   27\n";
        assert_eq!(parse_path(messy).unwrap().render(), LISTING);
    }

    #[test]
    fn parse_errors_carry_line() {
        assert!(matches!(parse_path(""), Err(PuzzleError::Parse { line: 0, .. })));
        assert!(matches!(parse_path("   \n  "), Err(PuzzleError::Parse { .. })));
        let bad = "25 + 5 = 30 (left: 5 33 30)\n30 / 5 6 (left: 33 6)\nAnswer: 1 = 1";
        assert!(matches!(parse_path(bad), Err(PuzzleError::Parse { line: 1, .. })));
        let no_answer = "25 + 5 = 30 (left: 5 33 30)";
        assert!(matches!(parse_path(no_answer), Err(PuzzleError::Parse { line: 0, .. })));
        assert!(parse_path("Answer: 1 + = 2").is_err());
        assert!(parse_path("1 + 1 = 2 (left: 2\nAnswer: 2 = 2").is_err());
    }

    #[test]
    fn rational_steps_round_trip() {
        let text = "31 / 10 = 31/10 (left: 31/10 2)\n31/10 * 2 = 31/5 (left: 31/5)\nAnswer: 31 / 10 * 2 = 31/5";
        let path = parse_path(text).unwrap();
        assert_eq!(path.steps[0].result, Rational::new(31, 10));
        assert_eq!(path.render(), text);
    }
}
