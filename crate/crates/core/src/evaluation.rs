//! Success rates and wall-clock cost of the inference methods on a held-out
//! instance set, plus the report rendering.
//!
//! Every generated path is kept with its verdict in the per-instance
//! results so reports can be rebuilt offline. Timing covers decoding and
//! search only.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::policy::{decode, encode_prompt, DecodeConfig, Policy, PolicyError, EOS};
use crate::puzzle::{verify_text, PuzzleInstance};
use crate::search::{beam_search, mcts_search, BeamConfig, Evaluator, MctsConfig, PolicyProposer, SearchError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid method config: {0}")]
    InvalidMethodConfig(String),
    #[error("empty instance set")]
    EmptyInstanceSet,
    #[error("results mix method configs for `{0}`")]
    InconsistentResults(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    PassAt1,
    Beam,
    Mcts,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::PassAt1 => "pass_at_1",
            Method::Beam => "beam",
            Method::Mcts => "mcts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Greedy, Method::PassAt1, Method::Beam, Method::Mcts].into_iter().find(|m| m.id() == s)
    }
}

/// Settings for one method; only the part matching the method is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub decode: DecodeConfig,
    pub beam: BeamConfig,
    pub mcts: MctsConfig,
    pub evaluator: Evaluator,
    /// Proposal sampling temperature for beam and MCTS.
    pub propose_temperature: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            decode: DecodeConfig::sampling(8, 0),
            beam: BeamConfig::default(),
            mcts: MctsConfig::default(),
            evaluator: Evaluator::oracle(),
            propose_temperature: 0.7,
        }
    }
}

impl MethodConfig {
    /// The settings that matter for `method`, as canonical JSON.
    fn relevant(&self, method: Method) -> serde_json::Value {
        match method {
            Method::Greedy => serde_json::json!({ "max_tokens": self.decode.max_tokens }),
            Method::PassAt1 => serde_json::json!({ "decode": self.decode }),
            Method::Beam => serde_json::json!({
                "beam": self.beam, "evaluator": self.evaluator, "propose_temperature": self.propose_temperature
            }),
            Method::Mcts => serde_json::json!({
                "mcts": self.mcts, "evaluator": self.evaluator, "propose_temperature": self.propose_temperature
            }),
        }
    }

    pub fn validate(&self, method: Method) -> Result<(), EvalError> {
        let bad = |e: String| EvalError::InvalidMethodConfig(e);
        match method {
            Method::Greedy => DecodeConfig { temperature: 0.0, n_samples: 1, ..self.decode.clone() }
                .validate()
                .map_err(|e| bad(e.to_string())),
            Method::PassAt1 => self.decode.validate().map_err(|e| bad(e.to_string())),
            Method::Beam => self.beam.validate().map_err(|e| bad(e.to_string())),
            Method::Mcts => self.mcts.validate().map_err(|e| bad(e.to_string())),
        }?;
        if matches!(method, Method::Beam | Method::Mcts)
            && !(self.propose_temperature.is_finite() && self.propose_temperature >= 0.0)
        {
            return Err(bad("propose_temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the method id and its relevant settings.
    pub fn digest(&self, method: Method) -> String {
        let doc = serde_json::json!({ "method": method.id(), "config": self.relevant(method) });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }
}

/// A path produced during evaluation and whether it verified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPath {
    pub path: String,
    pub success: bool,
}

/// One result row. For pass@1 there is one row per sample; for search
/// methods `explored` lists every emitted path and `path` is the selected
/// one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub method: String,
    pub instance: PuzzleInstance,
    #[serde(default)]
    pub sample: usize,
    pub path: String,
    pub success: bool,
    pub seconds: f64,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explored: Vec<ScoredPath>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub method: String,
    /// `successes / trials`; trials equal instances except for pass@1,
    /// where every sample is a trial.
    pub success_rate: f64,
    pub successes: usize,
    pub trials: usize,
    pub n_instances: usize,
    pub seconds: f64,
    pub config_digest: String,
}

fn path_text(policy: &dyn Policy, y: &[u32]) -> String {
    let body = y.strip_suffix(&[EOS]).unwrap_or(y);
    policy.vocab().decode_text(body)
}

fn eval_one(
    policy: &dyn Policy,
    instance: &PuzzleInstance,
    index: usize,
    method: Method,
    config: &MethodConfig,
) -> Result<Vec<(usize, String, bool, f64, Vec<ScoredPath>)>, EvalError> {
    let seed_for = |base: u64| base.wrapping_add(index as u64);
    match method {
        Method::Greedy | Method::PassAt1 => {
            let cfg = if method == Method::Greedy {
                DecodeConfig { temperature: 0.0, n_samples: 1, ..config.decode.clone() }
            } else {
                DecodeConfig { seed: seed_for(config.decode.seed), ..config.decode.clone() }
            };
            let x = encode_prompt(policy.vocab(), instance)?;
            let start = Instant::now();
            let ys = decode(policy, &x, &cfg)?;
            let per = start.elapsed().as_secs_f64() / ys.len() as f64;
            Ok(ys
                .iter()
                .enumerate()
                .map(|(i, y)| {
                    let text = path_text(policy, y);
                    let ok = verify_text(instance, &text).success();
                    (i, text, ok, per, Vec::new())
                })
                .collect())
        }
        Method::Beam | Method::Mcts => {
            let mut proposer = PolicyProposer::new(policy);
            proposer.temperature = config.propose_temperature;
            let start = Instant::now();
            let out = if method == Method::Beam {
                let cfg = BeamConfig { seed: seed_for(config.beam.seed), ..config.beam.clone() };
                beam_search(&proposer, &config.evaluator, instance, &cfg)?
            } else {
                let cfg = MctsConfig { seed: seed_for(config.mcts.seed), ..config.mcts.clone() };
                mcts_search(&proposer, &config.evaluator, instance, &cfg)?
            };
            let secs = start.elapsed().as_secs_f64();
            let explored: Vec<ScoredPath> =
                out.paths.iter().map(|(p, v)| ScoredPath { path: p.render(), success: v.success() }).collect();
            let (path, ok) = match out.selected_path() {
                Some((p, v)) => (p.render(), v.success()),
                None => (String::new(), false),
            };
            Ok(vec![(0, path, ok, secs, explored)])
        }
    }
}

/// Runs `method` on every instance (in parallel) and returns the summary
/// entry and the per-instance rows in instance order.
pub fn evaluate(
    policy: &dyn Policy,
    instances: &[PuzzleInstance],
    method: Method,
    config: &MethodConfig,
    label: Option<&str>,
) -> Result<(EvalEntry, Vec<InstanceResult>), EvalError> {
    if instances.is_empty() {
        return Err(EvalError::EmptyInstanceSet);
    }
    config.validate(method)?;
    let digest = config.digest(method);
    let name = label.unwrap_or(method.id()).to_string();
    let per: Vec<_> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| eval_one(policy, inst, i, method, config))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (inst, outs) in instances.iter().zip(per) {
        for (sample, path, success, seconds, explored) in outs {
            rows.push(InstanceResult {
                method: name.clone(),
                instance: inst.clone(),
                sample,
                path,
                success,
                seconds,
                digest: digest.clone(),
                explored,
            });
        }
    }
    let entry = summarize(&rows)?.pop().expect("one method");
    Ok((entry, rows))
}

/// Rebuilds summary entries from result rows, one per method, sorted by
/// method id.
pub fn summarize(rows: &[InstanceResult]) -> Result<Vec<EvalEntry>, EvalError> {
    let mut by: BTreeMap<&str, Vec<&InstanceResult>> = BTreeMap::new();
    for r in rows {
        by.entry(&r.method).or_default().push(r);
    }
    by.into_iter()
        .map(|(m, rs)| {
            let digest = &rs[0].digest;
            if rs.iter().any(|r| &r.digest != digest) {
                return Err(EvalError::InconsistentResults(m.into()));
            }
            let mut instances: Vec<&PuzzleInstance> = rs.iter().map(|r| &r.instance).collect();
            instances.sort();
            instances.dedup();
            let successes = rs.iter().filter(|r| r.success).count();
            Ok(EvalEntry {
                method: m.into(),
                success_rate: successes as f64 / rs.len() as f64,
                successes,
                trials: rs.len(),
                n_instances: instances.len(),
                seconds: rs.iter().map(|r| r.seconds).sum(),
                config_digest: digest.clone(),
            })
        })
        .collect()
}

/// Aligned text table and JSON lines, both sorted by method id. Rates are
/// percentages with one decimal, times seconds with two. With
/// `timing = false` times are omitted so that output is reproducible.
pub fn report(entries: &[EvalEntry], timing: bool) -> (String, String) {
    let mut sorted: Vec<&EvalEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.method.cmp(&b.method));
    let mut rows = vec![vec!["method".to_string(), "success".into(), "n".into()]];
    if timing {
        rows[0].push("seconds".into());
    }
    rows[0].push("config".into());
    for e in &sorted {
        let mut r = vec![e.method.clone(), format!("{:.1}%", 100.0 * e.success_rate), e.n_instances.to_string()];
        if timing {
            r.push(format!("{:.2}", e.seconds));
        }
        r.push(e.config_digest[..12.min(e.config_digest.len())].to_string());
        rows.push(r);
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut table = String::new();
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        table.push_str(cells.join("  ").trim_end());
        table.push('\n');
    }
    let mut jsonl = String::new();
    for e in &sorted {
        let mut v = serde_json::to_value(e).expect("entry serializes");
        if !timing {
            v.as_object_mut().expect("object").remove("seconds");
        }
        jsonl.push_str(&v.to_string());
        jsonl.push('\n');
    }
    (table, jsonl)
}
