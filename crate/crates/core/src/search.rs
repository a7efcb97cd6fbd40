//! Inference-time search over reasoning steps: ToT-style beam search and
//! RAP-style MCTS with UCT. Candidate steps come from a [`Proposer`] and
//! intermediate states are scored by an [`Evaluator`].
//!
//! A search state is the list of steps taken so far plus the numbers that
//! remain. A state with one number left is terminal; its path gets the
//! answer line composed from the steps and is scored by the verifier
//! (1.0 on success, 0.0001 otherwise).

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classic::reachable;
use crate::policy::{encode_prompt, sample_token, Policy, PolicyError, EOS};
use crate::puzzle::{
    apply_step, compose_answer, parse_step_line, same_multiset, successors, verify, PuzzleInstance, Rational,
    ReasoningPath, ReasoningStep, Verdict,
};

pub const SURE: f64 = 1.0;
pub const LIKELY: f64 = 0.1;
pub const IMPOSSIBLE: f64 = 0.0001;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no valid candidate step after {attempts} attempts")]
    NoValidCandidates { attempts: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorMode {
    /// Exact reachability mapped onto the sure/impossible scores.
    Oracle,
    /// Uninformative: every state scores "likely".
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluator {
    pub mode: EvaluatorMode,
    /// Restrict the oracle to integer intermediates.
    #[serde(default)]
    pub integer_only: bool,
}

impl Evaluator {
    pub fn oracle() -> Self {
        Self { mode: EvaluatorMode::Oracle, integer_only: false }
    }

    pub fn constant() -> Self {
        Self { mode: EvaluatorMode::Constant, integer_only: false }
    }

    pub fn evaluate_step(&self, remaining: &[Rational], target: Rational) -> f64 {
        match self.mode {
            EvaluatorMode::Constant => LIKELY,
            EvaluatorMode::Oracle if reachable(remaining, target, self.integer_only) => SURE,
            EvaluatorMode::Oracle => IMPOSSIBLE,
        }
    }
}

/// Verifier-based terminal score.
pub fn terminal_score(verdict: &Verdict) -> f64 {
    if verdict.success() {
        SURE
    } else {
        IMPOSSIBLE
    }
}

/// A candidate next step and its log-probability under the proposer.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub step: ReasoningStep,
    pub logprob: f64,
}

/// Source of candidate next steps.
pub trait Proposer {
    /// Up to `k` distinct steps that are legal from `remaining`, ordered by
    /// decreasing log-probability.
    fn propose(
        &self,
        instance: &PuzzleInstance,
        steps: &[ReasoningStep],
        remaining: &[Rational],
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Proposal>, SearchError>;
}

fn is_legal(remaining: &[Rational], step: &ReasoningStep) -> bool {
    apply_step(remaining, step).is_ok_and(|next| same_multiset(&next, &step.remaining))
}

fn sort_proposals(props: &mut [Proposal]) {
    props.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.step.to_string().cmp(&b.step.to_string())));
}

/// Every legal successor, uniformly weighted. Defines an exhaustively
/// enumerable tree for testing the search logic.
#[derive(Clone, Copy, Debug, Default)]
pub struct SuccessorProposer {
    pub integer_only: bool,
}

impl Proposer for SuccessorProposer {
    fn propose(
        &self,
        _instance: &PuzzleInstance,
        _steps: &[ReasoningStep],
        remaining: &[Rational],
        k: usize,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Proposal>, SearchError> {
        let all = successors(remaining, self.integer_only);
        if all.is_empty() {
            return Err(SearchError::NoValidCandidates { attempts: 0 });
        }
        let lp = -(all.len() as f64).ln();
        Ok(all.into_iter().take(k).map(|s| Proposal { step: s.step, logprob: lp }).collect())
    }
}

/// Samples step lines from a policy conditioned on the prompt and the steps
/// so far. Unparsable or illegal lines are discarded and resampled.
pub struct PolicyProposer<'a> {
    pub policy: &'a dyn Policy,
    pub temperature: f64,
    pub top_p: f64,
    /// Sampling attempts allowed per requested candidate.
    pub retries: usize,
    pub max_line_tokens: usize,
}

impl<'a> PolicyProposer<'a> {
    pub fn new(policy: &'a dyn Policy) -> Self {
        Self { policy, temperature: 0.7, top_p: 1.0, retries: 4, max_line_tokens: 48 }
    }

    fn prefix(&self, instance: &PuzzleInstance, steps: &[ReasoningStep]) -> Result<Vec<u32>, PolicyError> {
        let mut ids = encode_prompt(self.policy.vocab(), instance)?;
        for s in steps {
            ids.extend(self.policy.vocab().encode(&format!("{s}\n"))?);
        }
        Ok(ids)
    }

    /// One line sampled from `prefix`; `None` when it stops without a
    /// newline.
    fn sample_line(
        &self,
        prefix: &[u32],
        newline: u32,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<(Vec<u32>, f64)>, PolicyError> {
        let mut cursor = self.policy.cursor(prefix)?;
        let room = self.policy.max_len().saturating_sub(prefix.len());
        let mut line = Vec::new();
        let mut lp = 0.0;
        while line.len() < self.max_line_tokens.min(room) {
            let logits = cursor.logits();
            let tok = sample_token(logits, temperature, self.top_p, rng);
            lp += crate::policy::log_softmax(logits)[tok as usize];
            if tok == EOS {
                return Ok(None);
            }
            if tok == newline {
                return Ok(Some((line, lp)));
            }
            line.push(tok);
            cursor.push(tok)?;
        }
        Ok(None)
    }
}

impl Proposer for PolicyProposer<'_> {
    fn propose(
        &self,
        instance: &PuzzleInstance,
        steps: &[ReasoningStep],
        remaining: &[Rational],
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Proposal>, SearchError> {
        let vocab = self.policy.vocab();
        let newline = vocab.id_of("\n").ok_or_else(|| SearchError::InvalidConfig("vocabulary lacks a newline".into()))?;
        let prefix = self.prefix(instance, steps)?;
        let greedy_only = self.temperature == 0.0;
        let attempts = if greedy_only { 1 } else { self.retries.max(1) * k.max(1) };
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for _ in 0..attempts {
            let Some((line, logprob)) = self.sample_line(&prefix, newline, self.temperature, rng)? else { continue };
            let Ok(step) = parse_step_line(&vocab.decode(&line), steps.len()) else { continue };
            if is_legal(remaining, &step) && seen.insert(step.to_string()) {
                out.push(Proposal { step, logprob });
                if out.len() == k {
                    break;
                }
            }
        }
        if out.is_empty() {
            return Err(SearchError::NoValidCandidates { attempts });
        }
        sort_proposals(&mut out);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Lines per path, answer included; the number of steps is one less
    /// than the number of inputs, capped by `depth - 1`.
    pub depth: usize,
    /// Candidates requested per expanded state.
    pub proposals: usize,
    pub samples_per_eval: usize,
    pub seed: u64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { beam_size: 5, depth: 4, proposals: 5, samples_per_eval: 3, seed: 0 }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(1..=64).contains(&self.beam_size) {
            return Err(SearchError::InvalidConfig("beam_size must lie in 1..=64".into()));
        }
        if self.depth < 2 || self.proposals == 0 || self.samples_per_eval == 0 {
            return Err(SearchError::InvalidConfig("depth must be at least 2; proposals and samples_per_eval positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub iterations: usize,
    pub c_explore: f64,
    pub depth: usize,
    /// Candidates requested per expanded node.
    pub proposals: usize,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self { iterations: 100, c_explore: 1.0, depth: 4, proposals: 5, seed: 0 }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.iterations == 0 || self.proposals == 0 || self.depth < 2 {
            return Err(SearchError::InvalidConfig("iterations and proposals must be positive, depth at least 2".into()));
        }
        if !(self.c_explore.is_finite() && self.c_explore > 0.0) {
            return Err(SearchError::InvalidConfig("c_explore must be positive".into()));
        }
        Ok(())
    }
}

/// Every root-to-leaf path the search produced, with verdicts, and the
/// index of the selected one (`None` when nothing terminal was reached).
#[derive(Clone, Debug, Default)]
pub struct SearchOutcome {
    pub paths: Vec<(ReasoningPath, Verdict)>,
    pub selected: Option<usize>,
}

impl SearchOutcome {
    pub fn selected_path(&self) -> Option<&(ReasoningPath, Verdict)> {
        self.selected.map(|i| &self.paths[i])
    }

    pub fn success(&self) -> bool {
        self.selected_path().is_some_and(|(_, v)| v.success())
    }
}

fn finish(instance: &PuzzleInstance, steps: &[ReasoningStep]) -> Option<(ReasoningPath, Verdict)> {
    let answer = compose_answer(&instance.input_values(), steps)?;
    let path = ReasoningPath { steps: steps.to_vec(), answer };
    let verdict = verify(instance, &path);
    Some((path, verdict))
}

fn step_rounds(instance: &PuzzleInstance, depth: usize) -> usize {
    (instance.inputs.len() - 1).min(depth - 1)
}

#[derive(Clone, Debug)]
struct BeamItem {
    steps: Vec<ReasoningStep>,
    remaining: Vec<Rational>,
    score: f64,
    logprob: f64,
    text: String,
}

fn beam_order(a: &BeamItem, b: &BeamItem) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.logprob.total_cmp(&a.logprob))
        .then_with(|| a.text.cmp(&b.text))
}

/// Propose, score and keep the best `beam_size` states for each round;
/// the selected path is the final-beam path with the highest terminal
/// score (ties by policy log-probability, then rendering).
pub fn beam_search(
    proposer: &dyn Proposer,
    evaluator: &Evaluator,
    instance: &PuzzleInstance,
    config: &BeamConfig,
) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    let target = instance.target_value();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut beam = vec![BeamItem {
        steps: Vec::new(),
        remaining: instance.input_values(),
        score: SURE,
        logprob: 0.0,
        text: String::new(),
    }];
    for _ in 0..step_rounds(instance, config.depth) {
        let mut next = Vec::new();
        for item in &beam {
            let props = match proposer.propose(instance, &item.steps, &item.remaining, config.proposals, &mut rng) {
                Ok(p) => p,
                Err(SearchError::NoValidCandidates { .. }) => continue,
                Err(e) => return Err(e),
            };
            for p in props {
                let mut steps = item.steps.clone();
                let remaining = p.step.remaining.clone();
                let text = format!("{}{}\n", item.text, p.step);
                steps.push(p.step);
                next.push(BeamItem {
                    score: evaluator.evaluate_step(&remaining, target),
                    logprob: item.logprob + p.logprob,
                    steps,
                    remaining,
                    text,
                });
            }
        }
        next.sort_by(beam_order);
        next.truncate(config.beam_size);
        beam = next;
        if beam.is_empty() {
            return Ok(SearchOutcome::default());
        }
    }
    let mut finals: Vec<(BeamItem, (ReasoningPath, Verdict))> = beam
        .into_iter()
        .filter_map(|mut item| {
            let pv = finish(instance, &item.steps)?;
            item.score = terminal_score(&pv.1);
            Some((item, pv))
        })
        .collect();
    finals.sort_by(|a, b| beam_order(&a.0, &b.0));
    let selected = if finals.is_empty() { None } else { Some(0) };
    Ok(SearchOutcome { paths: finals.into_iter().map(|(_, pv)| pv).collect(), selected })
}

/// Tree node. `visits`/`value` accumulate backed-up terminal rewards.
#[derive(Clone, Debug)]
pub struct MctsNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub steps: Vec<ReasoningStep>,
    pub remaining: Vec<Rational>,
    /// Evaluator score of the state.
    pub score: f64,
    pub visits: u64,
    pub value: f64,
    pub expanded: bool,
    /// Complete path or dead end (no legal proposals).
    pub terminal: bool,
    /// Reward when terminal.
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct MctsTree {
    pub nodes: Vec<MctsNode>,
}

impl MctsTree {
    /// Visit accounting: every expanded, non-terminal node other than the
    /// root has one more visit than its children combined (its own first
    /// visit ran a rollout); the root's visits equal its children's.
    pub fn visit_invariant_holds(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| {
            if n.terminal || !n.expanded {
                return true;
            }
            let child: u64 = n.children.iter().map(|&c| self.nodes[c].visits).sum();
            if i == 0 {
                child == n.visits
            } else {
                child + 1 == n.visits
            }
        })
    }
}

struct Mcts<'a> {
    proposer: &'a dyn Proposer,
    evaluator: &'a Evaluator,
    instance: &'a PuzzleInstance,
    config: &'a MctsConfig,
    rounds: usize,
    rng: ChaCha8Rng,
    tree: MctsTree,
    found: Vec<(ReasoningPath, Verdict)>,
    seen: HashSet<String>,
}

impl Mcts<'_> {
    fn record(&mut self, steps: &[ReasoningStep]) -> f64 {
        match finish(self.instance, steps) {
            Some((path, verdict)) => {
                let r = terminal_score(&verdict);
                if self.seen.insert(path.render()) {
                    self.found.push((path, verdict));
                }
                r
            }
            None => IMPOSSIBLE,
        }
    }

    fn is_complete(&self, steps: &[ReasoningStep]) -> bool {
        steps.len() >= self.rounds
    }

    /// Adds children for `idx`; marks it a dead end when nothing is proposed.
    fn expand(&mut self, idx: usize) -> Result<(), SearchError> {
        let node = &self.tree.nodes[idx];
        let (steps, remaining) = (node.steps.clone(), node.remaining.clone());
        self.tree.nodes[idx].expanded = true;
        let props = match self.proposer.propose(self.instance, &steps, &remaining, self.config.proposals, &mut self.rng) {
            Ok(p) => p,
            Err(SearchError::NoValidCandidates { .. }) => {
                let n = &mut self.tree.nodes[idx];
                n.terminal = true;
                n.reward = IMPOSSIBLE;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let target = self.instance.target_value();
        for p in props {
            let mut child_steps = steps.clone();
            let child_remaining = p.step.remaining.clone();
            child_steps.push(p.step);
            let score = self.evaluator.evaluate_step(&child_remaining, target);
            let id = self.tree.nodes.len();
            self.tree.nodes.push(MctsNode {
                parent: Some(idx),
                children: Vec::new(),
                steps: child_steps,
                remaining: child_remaining,
                score,
                visits: 0,
                value: 0.0,
                expanded: false,
                terminal: false,
                reward: 0.0,
            });
            self.tree.nodes[idx].children.push(id);
        }
        Ok(())
    }

    fn pick_weighted(&mut self, scores: &[f64]) -> usize {
        let z: f64 = scores.iter().sum();
        let mut u = self.rng.gen::<f64>() * z;
        for (i, s) in scores.iter().enumerate() {
            u -= s;
            if u < 0.0 {
                return i;
            }
        }
        scores.len() - 1
    }

    /// Reward-proportional rollout from a freshly expanded node. Rollout
    /// states stay outside the tree.
    fn rollout(&mut self, idx: usize) -> Result<f64, SearchError> {
        let children = self.tree.nodes[idx].children.clone();
        if children.is_empty() {
            return Ok(IMPOSSIBLE);
        }
        let scores: Vec<f64> = children.iter().map(|&c| self.tree.nodes[c].score).collect();
        let pick = children[self.pick_weighted(&scores)];
        let mut steps = self.tree.nodes[pick].steps.clone();
        let mut remaining = self.tree.nodes[pick].remaining.clone();
        let target = self.instance.target_value();
        while !self.is_complete(&steps) {
            let props = match self.proposer.propose(self.instance, &steps, &remaining, self.config.proposals, &mut self.rng) {
                Ok(p) => p,
                Err(SearchError::NoValidCandidates { .. }) => return Ok(IMPOSSIBLE),
                Err(e) => return Err(e),
            };
            let scores: Vec<f64> = props.iter().map(|p| self.evaluator.evaluate_step(&p.step.remaining, target)).collect();
            let chosen = props[self.pick_weighted(&scores)].step.clone();
            remaining = chosen.remaining.clone();
            steps.push(chosen);
        }
        Ok(self.record(&steps))
    }

    fn select(&self) -> usize {
        let mut idx = 0;
        loop {
            let node = &self.tree.nodes[idx];
            if node.terminal || !node.expanded || node.children.is_empty() {
                return idx;
            }
            if let Some(&c) = node.children.iter().find(|&&c| self.tree.nodes[c].visits == 0) {
                return c;
            }
            let ln_n = (node.visits as f64).ln();
            let mut best = node.children[0];
            let mut best_u = f64::NEG_INFINITY;
            for &c in &node.children {
                let ch = &self.tree.nodes[c];
                let u = ch.value / ch.visits as f64 + self.config.c_explore * (ln_n / ch.visits as f64).sqrt();
                if u > best_u {
                    best_u = u;
                    best = c;
                }
            }
            idx = best;
        }
    }

    fn iterate(&mut self) -> Result<(), SearchError> {
        let leaf = self.select();
        let reward = if self.tree.nodes[leaf].terminal {
            self.tree.nodes[leaf].reward
        } else if self.is_complete(&self.tree.nodes[leaf].steps) {
            let steps = self.tree.nodes[leaf].steps.clone();
            let r = self.record(&steps);
            let n = &mut self.tree.nodes[leaf];
            n.terminal = true;
            n.reward = r;
            r
        } else {
            self.expand(leaf)?;
            if self.tree.nodes[leaf].terminal {
                self.tree.nodes[leaf].reward
            } else {
                self.rollout(leaf)?
            }
        };
        let mut cur = Some(leaf);
        while let Some(i) = cur {
            let n = &mut self.tree.nodes[i];
            n.visits += 1;
            n.value += reward;
            cur = n.parent;
        }
        Ok(())
    }
}

/// UCT search. The root is expanded up front; each iteration selects a
/// leaf (unvisited children first, then the highest
/// `mean + c·sqrt(ln N_parent / N_child)`, ties by insertion order),
/// expands it, rolls out to a terminal state choosing children in
/// proportion to their scores, and backs the terminal reward up to the
/// root. The selected path is the explored terminal path with the highest
/// reward, earliest discovery first. `observe` sees the tree after every
/// iteration.
pub fn mcts_search_with(
    proposer: &dyn Proposer,
    evaluator: &Evaluator,
    instance: &PuzzleInstance,
    config: &MctsConfig,
    mut observe: impl FnMut(&MctsTree),
) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    let root = MctsNode {
        parent: None,
        children: Vec::new(),
        steps: Vec::new(),
        remaining: instance.input_values(),
        score: SURE,
        visits: 0,
        value: 0.0,
        expanded: false,
        terminal: false,
        reward: 0.0,
    };
    let mut m = Mcts {
        proposer,
        evaluator,
        instance,
        config,
        rounds: step_rounds(instance, config.depth),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        tree: MctsTree { nodes: vec![root] },
        found: Vec::new(),
        seen: HashSet::new(),
    };
    m.expand(0)?;
    if m.tree.nodes[0].terminal {
        return Ok(SearchOutcome::default());
    }
    for _ in 0..config.iterations {
        m.iterate()?;
        observe(&m.tree);
    }
    let mut selected: Option<usize> = None;
    for (i, (_, v)) in m.found.iter().enumerate() {
        let better = match selected {
            None => true,
            Some(j) => terminal_score(v) > terminal_score(&m.found[j].1),
        };
        if better {
            selected = Some(i);
        }
    }
    Ok(SearchOutcome { paths: m.found, selected })
}

pub fn mcts_search(
    proposer: &dyn Proposer,
    evaluator: &Evaluator,
    instance: &PuzzleInstance,
    config: &MctsConfig,
) -> Result<SearchOutcome, SearchError> {
    mcts_search_with(proposer, evaluator, instance, config, |_| {})
}
