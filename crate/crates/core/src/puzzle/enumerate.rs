use std::collections::HashSet;

use super::{Answer, Expr, Op, PuzzleInstance, Rational, ReasoningPath, ReasoningStep};

/// One legal move from a list of remaining numbers.
#[derive(Clone, Debug)]
pub struct Successor {
    /// Positions of the operands in the parent list.
    pub i: usize,
    pub j: usize,
    pub step: ReasoningStep,
}

/// All legal single steps from `values`, in a fixed order: operand pairs by
/// position, then `+ - * /`. Commutative operators are written larger
/// operand first; `-` and `/` are tried in both orders. Division by zero
/// and overflow are skipped, as are non-integer results when
/// `integer_only` is set. The new number is appended after the untouched
/// ones.
pub fn successors(values: &[Rational], integer_only: bool) -> Vec<Successor> {
    let n = values.len();
    let mut out = Vec::new();
    for p in 0..n {
        for q in (p + 1)..n {
            for op in Op::ALL {
                let orders: &[(usize, usize)] = if op.is_commutative() {
                    if values[p] >= values[q] {
                        &[(p, q)]
                    } else {
                        &[(q, p)]
                    }
                } else if values[p] == values[q] {
                    &[(p, q)]
                } else {
                    &[(p, q), (q, p)]
                };
                for &(i, j) in orders {
                    let (a, b) = (values[i], values[j]);
                    let Ok(result) = op.apply(a, b) else { continue };
                    if integer_only && !result.is_integer() {
                        continue;
                    }
                    let mut remaining: Vec<Rational> = values
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != i && k != j)
                        .map(|(_, v)| *v)
                        .collect();
                    remaining.push(result);
                    out.push(Successor { i, j, step: ReasoningStep { a, b, op, result, remaining } });
                }
            }
        }
    }
    out
}

/// Builds the answer line from a full step sequence: every intermediate
/// number is replaced by the expression that produced it.
pub fn compose_answer(inputs: &[Rational], steps: &[ReasoningStep]) -> Option<Answer> {
    let mut pool: Vec<(Rational, Expr)> = inputs.iter().map(|v| (*v, Expr::num(*v))).collect();
    for step in steps {
        let ia = pool.iter().position(|(v, _)| *v == step.a)?;
        let (_, ea) = pool.remove(ia);
        let ib = pool.iter().position(|(v, _)| *v == step.b)?;
        let (_, eb) = pool.remove(ib);
        pool.push((step.result, Expr::binary(step.op, ea.as_operand(), eb.as_operand())));
    }
    match pool.as_slice() {
        [(value, expr)] => Some(Answer { expr: expr.clone(), value: *value }),
        _ => None,
    }
}

/// Every distinct successful path for the instance, found by exhaustive
/// search over all step orderings. Paths are deduplicated by rendered text
/// and returned in discovery order.
pub fn enumerate_solutions(instance: &PuzzleInstance, integer_only: bool) -> Vec<ReasoningPath> {
    let inputs = instance.input_values();
    let target = instance.target_value();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut stack = Vec::new();
    walk(&inputs, &inputs, target, integer_only, &mut stack, &mut seen, &mut out);
    out
}

fn walk(
    inputs: &[Rational],
    values: &[Rational],
    target: Rational,
    integer_only: bool,
    stack: &mut Vec<ReasoningStep>,
    seen: &mut HashSet<String>,
    out: &mut Vec<ReasoningPath>,
) {
    if values.len() == 1 {
        if values[0] == target {
            if let Some(answer) = compose_answer(inputs, stack) {
                let path = ReasoningPath { steps: stack.clone(), answer };
                if seen.insert(path.render()) {
                    out.push(path);
                }
            }
        }
        return;
    }
    for succ in successors(values, integer_only) {
        let next = succ.step.remaining.clone();
        stack.push(succ.step);
        walk(inputs, &next, target, integer_only, stack, seen, out);
        stack.pop();
    }
}
