//! Classic BFS/DFS reasoners over puzzle states and the exhaustive
//! reachability check used as an oracle step evaluator.
//!
//! Both reasoners share the successor order of [`successors`]. The
//! `TargetDistance` heuristic ranks a state by the smallest distance of any
//! of its numbers to the target, then by fewer remaining numbers, then by
//! the sorted state itself. BFS keeps the best `beam_width` distinct states
//! per level and emits every state of the final level as a path. DFS visits
//! children best-first, emits every leaf it reaches, and stops at the first
//! success or when `max_expansions` internal nodes have been expanded.

use std::collections::HashSet;

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::puzzle::{
    compose_answer, successors, verify, PuzzleInstance, Rational, ReasoningPath, ReasoningStep, Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bfs,
    Dfs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    None,
    TargetDistance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicSearchConfig {
    pub strategy: Strategy,
    /// Frontier cap per BFS level.
    pub beam_width: usize,
    /// Budget of internal node expansions.
    pub max_expansions: usize,
    pub heuristic: Heuristic,
    /// Only allow integer intermediate results.
    #[serde(default = "default_true")]
    pub integer_only: bool,
}

fn default_true() -> bool {
    true
}

impl ClassicSearchConfig {
    /// BFS setting used for Countdown data generation.
    pub fn bfs() -> Self {
        Self {
            strategy: Strategy::Bfs,
            beam_width: 24,
            max_expansions: 10_000,
            heuristic: Heuristic::TargetDistance,
            integer_only: true,
        }
    }

    /// DFS setting used for Countdown data generation.
    pub fn dfs() -> Self {
        Self {
            strategy: Strategy::Dfs,
            beam_width: 1,
            max_expansions: 120,
            heuristic: Heuristic::TargetDistance,
            integer_only: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.beam_width == 0 {
            return Err("beam_width must be at least 1".into());
        }
        if self.max_expansions == 0 {
            return Err("max_expansions must be at least 1".into());
        }
        Ok(())
    }
}

/// Whether some sequence of binary operations over `values` reaches
/// `target` exactly.
pub fn reachable(values: &[Rational], target: Rational, integer_only: bool) -> bool {
    match values.len() {
        0 => false,
        1 => values[0] == target,
        n => {
            let mut rest = Vec::with_capacity(n - 1);
            for p in 0..n {
                for q in (p + 1)..n {
                    rest.clear();
                    rest.extend(
                        values.iter().enumerate().filter(|&(k, _)| k != p && k != q).map(|(_, v)| *v),
                    );
                    let (x, y) = (values[p], values[q]);
                    let candidates = [
                        x.checked_add(&y),
                        x.checked_mul(&y),
                        x.checked_sub(&y),
                        y.checked_sub(&x),
                        if y.is_zero() { None } else { x.checked_div(&y) },
                        if x.is_zero() { None } else { y.checked_div(&x) },
                    ];
                    for r in candidates.into_iter().flatten() {
                        if integer_only && !r.is_integer() {
                            continue;
                        }
                        rest.push(r);
                        let hit = reachable(&rest, target, integer_only);
                        rest.pop();
                        if hit {
                            return true;
                        }
                    }
                }
            }
            false
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    steps: Vec<ReasoningStep>,
    values: Vec<Rational>,
}

impl Node {
    fn sorted_values(&self) -> Vec<Rational> {
        let mut v = self.values.clone();
        v.sort();
        v
    }
}

fn distance_key(values: &[Rational], target: Rational) -> (Rational, usize, Vec<Rational>) {
    let best = values
        .iter()
        .map(|v| (*v - target).abs())
        .min()
        .unwrap_or_else(|| Rational::from_integer(i64::MAX));
    let mut sorted = values.to_vec();
    sorted.sort();
    (best, values.len(), sorted)
}

fn rank(children: &mut [Node], heuristic: Heuristic, target: Rational) {
    if heuristic == Heuristic::TargetDistance {
        children.sort_by_cached_key(|n| distance_key(&n.values, target));
    }
}

fn ordered_children(node: &Node, config: &ClassicSearchConfig, target: Rational) -> Vec<Node> {
    let mut children: Vec<Node> = successors(&node.values, config.integer_only)
        .into_iter()
        .map(|s| {
            let mut steps = node.steps.clone();
            let values = s.step.remaining.clone();
            steps.push(s.step);
            Node { steps, values }
        })
        .collect();
    rank(&mut children, config.heuristic, target);
    children
}

fn leaf_path(instance: &PuzzleInstance, node: &Node) -> Option<(ReasoningPath, Verdict)> {
    let answer = compose_answer(&instance.input_values(), &node.steps)?;
    let path = ReasoningPath { steps: node.steps.clone(), answer };
    let verdict = verify(instance, &path);
    Some((path, verdict))
}

/// Runs BFS or DFS and returns every emitted root-to-leaf path with its
/// verdict. Exhausting the budget yields only failed paths.
pub fn classic_solve(instance: &PuzzleInstance, config: &ClassicSearchConfig) -> Vec<(ReasoningPath, Verdict)> {
    let root = Node { steps: Vec::new(), values: instance.input_values() };
    match config.strategy {
        Strategy::Bfs => bfs(instance, config, root),
        Strategy::Dfs => {
            let mut out = Vec::new();
            let mut budget = config.max_expansions;
            dfs(instance, config, root, &mut budget, &mut out);
            out
        }
    }
}

fn bfs(instance: &PuzzleInstance, config: &ClassicSearchConfig, root: Node) -> Vec<(ReasoningPath, Verdict)> {
    let target = instance.target_value();
    let mut frontier = vec![root];
    let mut expansions = 0usize;
    while frontier.first().is_some_and(|n| n.values.len() > 1) {
        let mut children = Vec::new();
        let mut seen = HashSet::new();
        for node in &frontier {
            if expansions >= config.max_expansions {
                break;
            }
            expansions += 1;
            for s in successors(&node.values, config.integer_only) {
                let mut steps = node.steps.clone();
                let values = s.step.remaining.clone();
                steps.push(s.step);
                let child = Node { steps, values };
                if seen.insert(child.sorted_values()) {
                    children.push(child);
                }
            }
        }
        if children.is_empty() {
            return Vec::new();
        }
        rank(&mut children, config.heuristic, target);
        children.truncate(config.beam_width);
        frontier = children;
        if expansions >= config.max_expansions && frontier[0].values.len() > 1 {
            return Vec::new();
        }
    }
    frontier.iter().filter_map(|n| leaf_path(instance, n)).collect()
}

/// Returns true once a successful leaf has been emitted.
fn dfs(
    instance: &PuzzleInstance,
    config: &ClassicSearchConfig,
    node: Node,
    budget: &mut usize,
    out: &mut Vec<(ReasoningPath, Verdict)>,
) -> bool {
    if node.values.len() == 1 {
        if let Some((path, verdict)) = leaf_path(instance, &node) {
            let success = verdict.success();
            out.push((path, verdict));
            return success;
        }
        return false;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    for child in ordered_children(&node, config, instance.target_value()) {
        if dfs(instance, config, child, budget, out) {
            return true;
        }
    }
    false
}
