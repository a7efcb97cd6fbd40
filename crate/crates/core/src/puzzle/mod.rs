//! Arithmetic puzzles (Countdown and Game-of-24), the step-by-step path
//! format, exact arithmetic, and the process-based verifier.

mod enumerate;
mod expr;
mod generate;
mod lex;
mod path;
mod verify;

use std::fmt;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use serde::{Deserialize, Serialize};

pub use enumerate::{compose_answer, enumerate_solutions, successors, Successor};
pub use expr::{parse_expr, Expr};
pub use generate::{
    distinct, generate_countdown, generate_game24, load_game24_csv, split_game24, GeneratorConfig,
    Game24Split,
};
pub use path::{apply_step, parse_path, parse_step_line, Answer, ReasoningPath, ReasoningStep};
pub use verify::{verify, verify_text, Verdict, VerdictReason};

/// Exact rational number used for every intermediate value.
pub type Rational = Ratio<i64>;

/// Number of input numbers in every puzzle.
pub const NUM_INPUTS: usize = 4;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PuzzleError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("operand {0} is not available")]
    OperandNotAvailable(Rational),
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("step claims {claimed} but the operation yields {actual}")]
    ResultMismatch { claimed: Rational, actual: Rational },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no valid instance exists for the generator configuration: {0}")]
    ConfigUnsatisfiable(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Game24,
    Countdown,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Game24 => f.write_str("game24"),
            Task::Countdown => f.write_str("countdown"),
        }
    }
}

/// A puzzle: four positive integers and a target.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct PuzzleInstance {
    pub task: Task,
    pub inputs: Vec<i64>,
    pub target: i64,
}

#[derive(Deserialize)]
struct RawInstance {
    task: Task,
    inputs: Vec<i64>,
    target: i64,
}

impl TryFrom<RawInstance> for PuzzleInstance {
    type Error = PuzzleError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        PuzzleInstance::new(raw.task, raw.inputs, raw.target)
    }
}

impl PuzzleInstance {
    pub fn new(task: Task, inputs: Vec<i64>, target: i64) -> Result<Self, PuzzleError> {
        if inputs.len() != NUM_INPUTS {
            return Err(PuzzleError::InvalidInstance(format!(
                "expected {NUM_INPUTS} inputs, got {}",
                inputs.len()
            )));
        }
        if inputs.iter().any(|&v| v <= 0) || target <= 0 {
            return Err(PuzzleError::InvalidInstance(
                "inputs and target must be positive".into(),
            ));
        }
        if task == Task::Game24 {
            if target != 24 {
                return Err(PuzzleError::InvalidInstance("game24 target must be 24".into()));
            }
            if inputs.iter().any(|&v| v > 13) {
                return Err(PuzzleError::InvalidInstance(
                    "game24 inputs must lie in 1..=13".into(),
                ));
            }
        }
        Ok(Self { task, inputs, target })
    }

    pub fn countdown(inputs: [i64; 4], target: i64) -> Self {
        Self::new(Task::Countdown, inputs.to_vec(), target).expect("valid countdown instance")
    }

    pub fn game24(inputs: [i64; 4]) -> Self {
        Self::new(Task::Game24, inputs.to_vec(), 24).expect("valid game24 instance")
    }

    pub fn input_values(&self) -> Vec<Rational> {
        self.inputs.iter().map(|&v| Rational::from_integer(v)).collect()
    }

    pub fn target_value(&self) -> Rational {
        Rational::from_integer(self.target)
    }

    /// Prompt text the policy is conditioned on.
    pub fn prompt(&self) -> String {
        let nums: Vec<String> = self.inputs.iter().map(|v| v.to_string()).collect();
        format!("Input: {} Target: {}\nSteps:\n", nums.join(" "), self.target)
    }

    /// Short human-readable key, e.g. `25 5 5 33 -> 27`.
    pub fn key(&self) -> String {
        let nums: Vec<String> = self.inputs.iter().map(|v| v.to_string()).collect();
        format!("{} -> {}", nums.join(" "), self.target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    pub fn from_symbol(c: char) -> Option<Op> {
        match c {
            '+' => Some(Op::Add),
            '-' => Some(Op::Sub),
            '*' => Some(Op::Mul),
            '/' => Some(Op::Div),
            _ => None,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }

    /// Exact evaluation. Division by zero and i64 overflow are errors.
    pub fn apply(self, a: Rational, b: Rational) -> Result<Rational, PuzzleError> {
        let out = match self {
            Op::Add => a.checked_add(&b),
            Op::Sub => a.checked_sub(&b),
            Op::Mul => a.checked_mul(&b),
            Op::Div => {
                if b.is_zero() {
                    return Err(PuzzleError::DivisionByZero);
                }
                a.checked_div(&b)
            }
        };
        out.ok_or(PuzzleError::Overflow)
    }

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Renders a rational as `p` or `p/q`.
pub fn fmt_rational(v: &Rational) -> String {
    if *v.denom() == 1 {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Multiset equality over rationals.
pub fn same_multiset(a: &[Rational], b: &[Rational]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort();
    y.sort();
    x == y
}

/// Removes the first occurrence of `v`; returns false when absent.
pub(crate) fn remove_one(values: &mut Vec<Rational>, v: &Rational) -> bool {
    match values.iter().position(|x| x == v) {
        Some(i) => {
            values.remove(i);
            true
        }
        None => false,
    }
}
