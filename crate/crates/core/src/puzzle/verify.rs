use serde::{Deserialize, Serialize};

use super::{apply_step, parse_path, same_multiset, PuzzleError, PuzzleInstance, ReasoningPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    Ok,
    ParseError,
    BadStepArithmetic,
    RemainingMismatch,
    NumberReuse,
    AnswerInputsMismatch,
    AnswerValueMismatch,
    TargetMiss,
}

/// Outcome of the rule-based verifier: `success` holds exactly when the
/// reason is `Ok`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verdict {
    success: bool,
    reason: VerdictReason,
}

impl Verdict {
    pub fn new(reason: VerdictReason) -> Self {
        Self { success: reason == VerdictReason::Ok, reason }
    }

    pub fn ok() -> Self {
        Self::new(VerdictReason::Ok)
    }

    pub fn success(&self) -> bool {
        self.success
    }

    pub fn reason(&self) -> VerdictReason {
        self.reason
    }

    /// Binary reward `r` in {0, 1}.
    pub fn reward(&self) -> u8 {
        u8::from(self.success)
    }
}

/// Process-based verification: every step must be legal starting from the
/// instance inputs; the answer must use each input exactly once, evaluate
/// to the value it claims, and that value together with the final
/// remaining numbers must equal the target.
pub fn verify(instance: &PuzzleInstance, path: &ReasoningPath) -> Verdict {
    let mut current = instance.input_values();
    for step in &path.steps {
        match apply_step(&current, step) {
            Ok(next) => {
                if !same_multiset(&next, &step.remaining) {
                    return Verdict::new(VerdictReason::RemainingMismatch);
                }
                current = next;
            }
            Err(PuzzleError::OperandNotAvailable(_)) => {
                return Verdict::new(VerdictReason::NumberReuse)
            }
            Err(_) => return Verdict::new(VerdictReason::BadStepArithmetic),
        }
    }

    if !same_multiset(&path.answer.expr.leaves(), &instance.input_values()) {
        return Verdict::new(VerdictReason::AnswerInputsMismatch);
    }
    match path.answer.expr.eval() {
        Ok(v) if v == path.answer.value => {}
        _ => return Verdict::new(VerdictReason::AnswerValueMismatch),
    }
    let target = instance.target_value();
    if path.answer.value != target || current != [target] {
        return Verdict::new(VerdictReason::TargetMiss);
    }
    Verdict::ok()
}

/// Parses then verifies; unparseable text yields a `ParseError` verdict.
pub fn verify_text(instance: &PuzzleInstance, text: &str) -> Verdict {
    match parse_path(text) {
        Ok(path) => verify(instance, &path),
        Err(_) => Verdict::new(VerdictReason::ParseError),
    }
}
