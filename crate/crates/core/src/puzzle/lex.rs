//! Tokenizer shared by the step-line and answer-expression parsers.
//!
//! A rational literal is written `p/q` with no whitespace around the slash;
//! a spaced ` / ` is the division operator. A `-` directly followed by a
//! digit is a sign unless it follows a number or a closing parenthesis;
//! inside a `(left: ...)` list it is always a sign.

use super::{Op, Rational};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Num(Rational),
    Op(Op),
    Eq,
    LParen,
    RParen,
    Left,
    Answer,
}

pub(crate) fn tokenize(line: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let in_left = toks.iter().rev().find(|t| matches!(t, Tok::Left | Tok::RParen)) == Some(&Tok::Left);
        let sign_allowed = in_left || !matches!(toks.last(), Some(Tok::Num(_)) | Some(Tok::RParen));
        let starts_number = c.is_ascii_digit()
            || (c == '-' && sign_allowed && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()));
        if starts_number {
            let (value, next) = lex_number(&chars, i)?;
            toks.push(Tok::Num(value));
            i = next;
            continue;
        }
        if let Some(op) = Op::from_symbol(c) {
            toks.push(Tok::Op(op));
            i += 1;
            continue;
        }
        match c {
            '=' => toks.push(Tok::Eq),
            '(' => toks.push(Tok::LParen),
            ')' => toks.push(Tok::RParen),
            _ => {
                let rest: String = chars[i..].iter().collect();
                if rest.starts_with("left:") {
                    toks.push(Tok::Left);
                    i += "left:".len();
                    continue;
                }
                if rest.starts_with("Answer:") {
                    toks.push(Tok::Answer);
                    i += "Answer:".len();
                    continue;
                }
                return Err(format!("unexpected character {c:?} at column {}", i + 1));
            }
        }
        i += 1;
    }
    Ok(toks)
}

fn lex_number(chars: &[char], start: usize) -> Result<(Rational, usize), String> {
    let mut i = start;
    let negative = chars[i] == '-';
    if negative {
        i += 1;
    }
    let (numer, next) = lex_digits(chars, i)?;
    i = next;
    let mut denom = 1i64;
    if i + 1 < chars.len() && chars[i] == '/' && chars[i + 1].is_ascii_digit() {
        let (d, next) = lex_digits(chars, i + 1)?;
        if d == 0 {
            return Err("zero denominator in rational literal".into());
        }
        denom = d;
        i = next;
    }
    let numer = if negative { -numer } else { numer };
    Ok((Rational::new(numer, denom), i))
}

fn lex_digits(chars: &[char], start: usize) -> Result<(i64, usize), String> {
    let mut i = start;
    let mut value: i64 = 0;
    while i < chars.len() && chars[i].is_ascii_digit() {
        let d = chars[i] as i64 - '0' as i64;
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(d))
            .ok_or_else(|| "number literal too large".to_string())?;
        i += 1;
    }
    if i == start {
        return Err("expected digits".into());
    }
    Ok((value, i))
}
