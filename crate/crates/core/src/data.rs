//! Labeled reasoning-path datasets: ingest from several reasoners,
//! canonicalize, deduplicate, split by label, pair for preference
//! baselines, and measure coverage.
//!
//! Path datasets are JSON lines with `task`, `inputs`, `target`, `path`,
//! `label`, `reasoner` and `split`; paired datasets carry `chosen` and
//! `rejected` instead of `path`/`label`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classic::{classic_solve, ClassicSearchConfig};
use crate::objectives::Sequence;
use crate::policy::{decode, encode_prompt, encode_target, DecodeConfig, Policy, PolicyError, Vocabulary, EOS};
use crate::puzzle::{parse_path, verify_text, PuzzleError, PuzzleInstance, Task};
use crate::search::{beam_search, mcts_search, BeamConfig, Evaluator, MctsConfig, PolicyProposer, SearchError};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("label {label} contradicts the verifier for `{instance}`")]
    LabelMismatch { instance: String, label: u8 },
    #[error("test instance `{0}` appears in a training stream")]
    SplitViolation(String),
    #[error("empty instance set")]
    EmptyInstanceSet,
    #[error("reasoner `{0}` needs a policy")]
    MissingPolicy(&'static str),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Canonical form of a path: the grammar rendering when it parses,
/// otherwise trimmed lines with single spaces and no blank lines.
pub fn canonicalize(text: &str) -> String {
    if let Ok(p) = parse_path(text) {
        return p.render();
    }
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub task: Task,
    pub inputs: Vec<i64>,
    pub target: i64,
    pub path: String,
    pub label: u8,
    pub reasoner: String,
    pub split: Split,
}

impl PathRecord {
    /// Canonicalizes `path_text` and labels it with the verifier.
    pub fn labeled(instance: &PuzzleInstance, path_text: &str, reasoner: &str, split: Split) -> Self {
        let path = canonicalize(path_text);
        let label = verify_text(instance, &path).reward();
        Self {
            task: instance.task,
            inputs: instance.inputs.clone(),
            target: instance.target,
            path,
            label,
            reasoner: reasoner.into(),
            split,
        }
    }

    pub fn instance(&self) -> Result<PuzzleInstance, PuzzleError> {
        PuzzleInstance::new(self.task, self.inputs.clone(), self.target)
    }

    /// Canonical text and a label that agrees with the verifier.
    pub fn check(&self) -> Result<(), DataError> {
        let inst = self.instance()?;
        let fresh = verify_text(&inst, &self.path).reward();
        if fresh != self.label || canonicalize(&self.path) != self.path {
            return Err(DataError::LabelMismatch { instance: inst.key(), label: self.label });
        }
        Ok(())
    }

    pub fn success(&self) -> bool {
        self.label == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedRecord {
    #[serde(default = "default_task")]
    pub task: Task,
    pub inputs: Vec<i64>,
    pub target: i64,
    pub chosen: String,
    pub rejected: String,
}

fn default_task() -> Task {
    Task::Countdown
}

impl PairedRecord {
    pub fn instance(&self) -> Result<PuzzleInstance, PuzzleError> {
        PuzzleInstance::new(self.task, self.inputs.clone(), self.target)
    }
}

/// One reasoner output before ingest.
#[derive(Clone, Debug)]
pub struct RawPath {
    pub instance: PuzzleInstance,
    pub split: Split,
    pub path: String,
    pub label: u8,
    pub reasoner: String,
}

/// Merges reasoner outputs into one dataset: canonical text, labels checked
/// against the verifier, ordered by (instance, reasoner, arrival). Training
/// streams must not contain test instances.
pub fn collect(items: impl IntoIterator<Item = RawPath>, training: bool) -> Result<Vec<PathRecord>, DataError> {
    let mut out = Vec::new();
    for raw in items {
        if training && raw.split == Split::Test {
            return Err(DataError::SplitViolation(raw.instance.key()));
        }
        let rec = PathRecord::labeled(&raw.instance, &raw.path, &raw.reasoner, raw.split);
        if rec.label != raw.label {
            return Err(DataError::LabelMismatch { instance: raw.instance.key(), label: raw.label });
        }
        out.push((raw.instance, rec));
    }
    out.sort_by(|(a, ra), (b, rb)| a.cmp(b).then_with(|| ra.reasoner.cmp(&rb.reasoner)));
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// Keeps the first record for each exact `(instance, path)`.
pub fn dedup(records: Vec<PathRecord>) -> Vec<PathRecord> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert((r.task, r.inputs.clone(), r.target, r.path.clone())))
        .collect()
}

/// `(D⁺, D⁻)` partition by label.
pub fn split_by_label(records: Vec<PathRecord>) -> (Vec<PathRecord>, Vec<PathRecord>) {
    records.into_iter().partition(PathRecord::success)
}

/// For each success, `e` failures of the same instance drawn uniformly
/// (without replacement when at least `e` exist). Instances lacking either
/// side contribute nothing.
pub fn make_pairs(pos: &[PathRecord], neg: &[PathRecord], e: usize, seed: u64) -> Vec<PairedRecord> {
    let mut failures: HashMap<(Task, &[i64], i64), Vec<&PathRecord>> = HashMap::new();
    for r in neg.iter().filter(|r| !r.success()) {
        failures.entry((r.task, &r.inputs, r.target)).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if e == 0 {
        return out;
    }
    for p in pos.iter().filter(|r| r.success()) {
        let Some(fails) = failures.get(&(p.task, p.inputs.as_slice(), p.target)) else { continue };
        let picks: Vec<usize> = if fails.len() >= e {
            sample(&mut rng, fails.len(), e).into_vec()
        } else {
            (0..e).map(|_| rng.gen_range(0..fails.len())).collect()
        };
        for i in picks {
            out.push(PairedRecord {
                task: p.task,
                inputs: p.inputs.clone(),
                target: p.target,
                chosen: p.path.clone(),
                rejected: fails[i].path.clone(),
            });
        }
    }
    out
}

/// Fraction of `instances` with at least one successful record.
pub fn quality(records: &[PathRecord], instances: &[PuzzleInstance]) -> Result<f64, DataError> {
    if instances.is_empty() {
        return Err(DataError::EmptyInstanceSet);
    }
    let solved: HashSet<(Task, &[i64], i64)> =
        records.iter().filter(|r| r.success()).map(|r| (r.task, r.inputs.as_slice(), r.target)).collect();
    let hit = instances.iter().filter(|i| solved.contains(&(i.task, i.inputs.as_slice(), i.target))).count();
    Ok(hit as f64 / instances.len() as f64)
}

/// `(prompt, path + <eos>)` token pairs for training.
pub fn to_sequences(records: &[PathRecord], vocab: &Vocabulary) -> Result<Vec<Sequence>, DataError> {
    records
        .iter()
        .map(|r| Ok((encode_prompt(vocab, &r.instance()?)?, encode_target(vocab, &r.path)?)))
        .collect()
}

/// Chosen/rejected token pairs, index-aligned.
pub fn pairs_to_sequences(pairs: &[PairedRecord], vocab: &Vocabulary) -> Result<(Vec<Sequence>, Vec<Sequence>), DataError> {
    let mut pos = Vec::with_capacity(pairs.len());
    let mut neg = Vec::with_capacity(pairs.len());
    for p in pairs {
        let x = encode_prompt(vocab, &p.instance()?)?;
        pos.push((x.clone(), encode_target(vocab, &p.chosen)?));
        neg.push((x, encode_target(vocab, &p.rejected)?));
    }
    Ok((pos, neg))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| DataError::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        for item in items {
            serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a path dataset and re-verifies every label.
pub fn load_paths(path: &Path) -> Result<Vec<PathRecord>, DataError> {
    let records: Vec<PathRecord> = read_jsonl(path)?;
    for r in &records {
        r.check()?;
    }
    Ok(records)
}

/// Reads a paired dataset and checks both sides' outcomes.
pub fn load_pairs(path: &Path) -> Result<Vec<PairedRecord>, DataError> {
    let pairs: Vec<PairedRecord> = read_jsonl(path)?;
    for p in &pairs {
        let inst = p.instance()?;
        if !verify_text(&inst, &p.chosen).success() {
            return Err(DataError::LabelMismatch { instance: inst.key(), label: 1 });
        }
        if verify_text(&inst, &p.rejected).success() {
            return Err(DataError::LabelMismatch { instance: inst.key(), label: 0 });
        }
    }
    Ok(pairs)
}

/// An instance tagged with its split, as stored in instance files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub task: Task,
    pub inputs: Vec<i64>,
    pub target: i64,
    pub split: Split,
}

impl InstanceRecord {
    pub fn new(instance: &PuzzleInstance, split: Split) -> Self {
        Self { task: instance.task, inputs: instance.inputs.clone(), target: instance.target, split }
    }

    pub fn instance(&self) -> Result<PuzzleInstance, PuzzleError> {
        PuzzleInstance::new(self.task, self.inputs.clone(), self.target)
    }
}

pub fn load_instances(path: &Path) -> Result<Vec<(PuzzleInstance, Split)>, DataError> {
    read_jsonl::<InstanceRecord>(path)?.into_iter().map(|r| Ok((r.instance()?, r.split))).collect()
}

/// Sources of reasoning paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reasoner {
    Bfs,
    Dfs,
    /// Sampled single-pass generations from a policy.
    Cot,
    /// Beam search over policy proposals.
    Tot,
    /// MCTS over policy proposals.
    Rap,
}

impl Reasoner {
    pub fn id(self) -> &'static str {
        match self {
            Reasoner::Bfs => "bfs",
            Reasoner::Dfs => "dfs",
            Reasoner::Cot => "cot",
            Reasoner::Tot => "tot",
            Reasoner::Rap => "rap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Reasoner::Bfs, Reasoner::Dfs, Reasoner::Cot, Reasoner::Tot, Reasoner::Rap].into_iter().find(|r| r.id() == s)
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, Reasoner::Cot | Reasoner::Tot | Reasoner::Rap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    pub bfs: ClassicSearchConfig,
    pub dfs: ClassicSearchConfig,
    pub decode: DecodeConfig,
    pub beam: BeamConfig,
    pub mcts: MctsConfig,
    pub evaluator: Evaluator,
    pub propose_temperature: f64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            bfs: ClassicSearchConfig::bfs(),
            dfs: ClassicSearchConfig::dfs(),
            decode: DecodeConfig::sampling(8, 0),
            beam: BeamConfig::default(),
            mcts: MctsConfig::default(),
            evaluator: Evaluator::oracle(),
            propose_temperature: 0.7,
        }
    }
}

/// Paths (text, label) one reasoner produces for one instance. `index`
/// offsets the seeds so that instances draw independent randomness.
pub fn reason(
    reasoner: Reasoner,
    instance: &PuzzleInstance,
    index: usize,
    policy: Option<&dyn Policy>,
    config: &ReasonerConfig,
) -> Result<Vec<(String, u8)>, DataError> {
    let seed = |base: u64| base.wrapping_add(index as u64);
    let from_search = |paths: Vec<(crate::puzzle::ReasoningPath, crate::puzzle::Verdict)>| {
        paths.into_iter().map(|(p, v)| (p.render(), v.reward())).collect()
    };
    let need = || policy.ok_or(DataError::MissingPolicy(reasoner.id()));
    Ok(match reasoner {
        Reasoner::Bfs => from_search(classic_solve(instance, &config.bfs)),
        Reasoner::Dfs => from_search(classic_solve(instance, &config.dfs)),
        Reasoner::Cot => {
            let p = need()?;
            let x = encode_prompt(p.vocab(), instance)?;
            let cfg = DecodeConfig { seed: seed(config.decode.seed), ..config.decode.clone() };
            decode(p, &x, &cfg)?
                .into_iter()
                .map(|y| {
                    let text = canonicalize(&p.vocab().decode_text(y.strip_suffix(&[EOS]).unwrap_or(&y)));
                    let label = verify_text(instance, &text).reward();
                    (text, label)
                })
                .collect()
        }
        Reasoner::Tot | Reasoner::Rap => {
            let mut proposer = PolicyProposer::new(need()?);
            proposer.temperature = config.propose_temperature;
            let out = if reasoner == Reasoner::Tot {
                beam_search(&proposer, &config.evaluator, instance, &BeamConfig { seed: seed(config.beam.seed), ..config.beam.clone() })?
            } else {
                mcts_search(&proposer, &config.evaluator, instance, &MctsConfig { seed: seed(config.mcts.seed), ..config.mcts.clone() })?
            };
            from_search(out.paths)
        }
    })
}

/// Runs a reasoner over tagged instances in parallel and ingests the
/// result with [`collect`].
pub fn generate_paths(
    reasoner: Reasoner,
    instances: &[(PuzzleInstance, Split)],
    policy: Option<&dyn Policy>,
    config: &ReasonerConfig,
    training: bool,
) -> Result<Vec<PathRecord>, DataError> {
    if training {
        if let Some((inst, _)) = instances.iter().find(|(_, s)| *s == Split::Test) {
            return Err(DataError::SplitViolation(inst.key()));
        }
    }
    let per: Vec<Vec<(String, u8)>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, (inst, _))| reason(reasoner, inst, i, policy, config))
        .collect::<Result<_, _>>()?;
    let raw = instances.iter().zip(per).flat_map(|((inst, split), paths)| {
        paths.into_iter().map(move |(path, label)| RawPath {
            instance: inst.clone(),
            split: *split,
            path,
            label,
            reasoner: reasoner.id().into(),
        })
    });
    collect(raw, training)
}
