//! Run configuration for `train` and `sweep`, and the training driver.
//!
//! A run directory holds the resolved `config.json`, `log.jsonl`,
//! `checkpoints/step_*.ckpt` and, when a validation set is configured,
//! `selected.ckpt` plus `selection.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pathforge_core::data::{load_instances, load_paths, pairs_to_sequences, split_by_label, to_sequences, Split};
use pathforge_core::evaluation::{evaluate, Method, MethodConfig};
use pathforge_core::policy::{
    load_checkpoint, AnyPolicy, Checkpoint, Policy, TabularPolicy, TinyTransformer, TransformerConfig, Vocabulary,
};
use pathforge_core::trainer::{checkpoint_path, select_checkpoint, TrainConfig, TrainData, TrainError, Trainer};

use crate::{keep_existing, read_json, read_pairs, write_text, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Transformer,
    Tabular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub transformer: TransformerConfig,
    pub tabular_k: usize,
    pub init_seed: u64,
    /// Start from these weights instead of a fresh initialization.
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Transformer,
            transformer: TransformerConfig::default(),
            tabular_k: 8,
            init_seed: 0,
            init_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub policy: PolicySpec,
    /// Labeled path files; their `train` records form D⁺ and D⁻.
    pub data: Vec<PathBuf>,
    /// Preference pairs, for paired objectives.
    pub pairs: Option<PathBuf>,
    /// Instances used for checkpoint selection.
    pub valid: Option<PathBuf>,
    pub select_method: Method,
    pub select_config: MethodConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            policy: PolicySpec::default(),
            data: Vec::new(),
            pairs: None,
            valid: None,
            select_method: Method::Greedy,
            select_config: MethodConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Reads a run configuration; relative paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = read_json(path)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.data.iter_mut().for_each(fix);
        for p in [&mut self.pairs, &mut self.valid, &mut self.out_dir, &mut self.policy.init_checkpoint]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub total_steps: usize,
    pub final_loss: Option<f64>,
    pub selected_step: Option<u64>,
    pub selected_score: Option<f64>,
    pub skipped: bool,
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        TrainError::EmptyDataset(_) | TrainError::ResumeMismatch(_) => CliError::data(e),
        _ => CliError::runtime(e),
    }
}

fn initial_policy(spec: &PolicySpec, data: &TrainData) -> Result<AnyPolicy, CliError> {
    if let Some(p) = &spec.init_checkpoint {
        return Ok(load_checkpoint(p).map_err(CliError::data)?.policy);
    }
    let vocab = Vocabulary::default();
    Ok(match spec.kind {
        PolicyKind::Transformer => AnyPolicy::Transformer(
            TinyTransformer::new(vocab, spec.transformer.clone(), spec.init_seed).map_err(|e| CliError::Usage(e.to_string()))?,
        ),
        PolicyKind::Tabular => {
            let mut t = TabularPolicy::new(vocab, spec.tabular_k);
            for (x, y) in data.pos.iter().chain(&data.neg) {
                t.register(x, y);
            }
            AnyPolicy::Tabular(t)
        }
    })
}

fn load_train_data(cfg: &RunConfig, vocab: &Vocabulary) -> Result<TrainData, CliError> {
    if cfg.train.objective.kind.is_paired() {
        let path = cfg.pairs.as_ref().ok_or_else(|| CliError::Usage("paired objectives need `pairs`".into()))?;
        let (pos, neg) = pairs_to_sequences(&read_pairs(path)?, vocab)?;
        return Ok(TrainData { pos, neg });
    }
    let mut records = Vec::new();
    for p in &cfg.data {
        records.extend(load_paths(p)?.into_iter().filter(|r| r.split == Split::Train));
    }
    let (pos, neg) = split_by_label(records);
    Ok(TrainData { pos: to_sequences(&pos, vocab)?, neg: to_sequences(&neg, vocab)? })
}

fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir.join("checkpoints"))
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    files.sort();
    files.pop()
}

/// Drops log lines past `step`, so a resumed run does not repeat them.
fn truncate_log(dir: &Path, step: usize) -> Result<(), CliError> {
    let path = dir.join("log.jsonl");
    let Ok(text) = fs::read_to_string(&path) else { return Ok(()) };
    let kept: String = text
        .lines()
        .filter(|l| serde_json::from_str::<Value>(l).ok().and_then(|v| v["step"].as_u64()).is_some_and(|s| s as usize <= step))
        .map(|l| format!("{l}\n"))
        .collect();
    write_text(&path, &kept)
}

/// Trains per `cfg` into its run directory, then selects a checkpoint on
/// the validation instances when configured.
pub fn run_training(cfg: &RunConfig, force: bool, resume: bool) -> Result<RunSummary, CliError> {
    cfg.train.validate().map_err(train_err)?;
    let run_dir = cfg.out_dir.clone().ok_or_else(|| CliError::Usage("no run directory (`out_dir` or --out-dir)".into()))?;
    let config_path = run_dir.join("config.json");
    if !resume && keep_existing(&config_path, force) {
        let total = fs::read_to_string(run_dir.join("summary.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<RunSummary>(&t).ok());
        return Ok(RunSummary { skipped: true, ..total.unwrap_or(RunSummary {
            run_dir,
            total_steps: 0,
            final_loss: None,
            selected_step: None,
            selected_score: None,
            skipped: true,
        }) });
    }
    if !resume {
        for f in ["log.jsonl", "selected.ckpt", "selection.json", "summary.json"] {
            let _ = fs::remove_file(run_dir.join(f));
        }
        let _ = fs::remove_dir_all(run_dir.join("checkpoints"));
    }
    let vocab = match &cfg.policy.init_checkpoint {
        Some(p) => load_checkpoint(p).map_err(CliError::data)?.policy.vocab().clone(),
        None => Vocabulary::default(),
    };
    let data = load_train_data(cfg, &vocab)?;
    write_text(&config_path, &serde_json::to_string_pretty(cfg).expect("json"))?;

    let resume_from = if resume { latest_checkpoint(&run_dir) } else { None };
    let trainer = match &resume_from {
        Some(p) => {
            let ck = load_checkpoint(p).map_err(CliError::data)?;
            truncate_log(&run_dir, ck.step as usize)?;
            Trainer::resume(&ck, data, cfg.train.clone()).map_err(train_err)?
        }
        None => Trainer::new(initial_policy(&cfg.policy, &data)?, data, cfg.train.clone()).map_err(train_err)?,
    };
    let mut trainer = trainer.with_run_dir(&run_dir).map_err(train_err)?;
    let total = trainer.total_steps();
    let mut last_loss = None;
    while !trainer.is_done() {
        let e = trainer.train_step().map_err(train_err)?;
        if trainer.is_checkpoint_step(e.step) {
            eprintln!("step {}/{} loss {:.6} lr {:.3e}", e.step, total, e.loss, e.lr);
        }
        last_loss = Some(e.loss);
    }

    let mut summary = RunSummary {
        run_dir: run_dir.clone(),
        total_steps: total,
        final_loss: last_loss,
        selected_step: None,
        selected_score: None,
        skipped: false,
    };
    if let Some(valid) = &cfg.valid {
        let instances: Vec<_> = load_instances(valid)?.into_iter().map(|(i, _)| i).collect();
        let mut steps: Vec<usize> = (1..=total).filter(|&s| trainer.is_checkpoint_step(s)).collect();
        steps.retain(|&s| checkpoint_path(&run_dir, s).exists());
        let ckpts: Vec<Checkpoint> = steps
            .iter()
            .map(|&s| load_checkpoint(&checkpoint_path(&run_dir, s)).map_err(CliError::data))
            .collect::<Result<_, _>>()?;
        if ckpts.is_empty() {
            return Err(CliError::Runtime("no checkpoints to select from".into()));
        }
        let (best, scores) = select_checkpoint(&ckpts, |ck| {
            evaluate(ck.policy.as_policy(), &instances, cfg.select_method, &cfg.select_config, None)
                .map(|(e, _)| e.success_rate)
                .map_err(CliError::from)
        })?;
        let chosen = checkpoint_path(&run_dir, steps[best]);
        fs::copy(&chosen, run_dir.join("selected.ckpt")).map_err(CliError::runtime)?;
        let table: BTreeMap<String, f64> = steps.iter().zip(&scores).map(|(s, v)| (format!("{s:06}"), *v)).collect();
        let doc = serde_json::json!({ "selected_step": steps[best], "score": scores[best], "scores": table });
        write_text(&run_dir.join("selection.json"), &serde_json::to_string_pretty(&doc).expect("json"))?;
        summary.selected_step = Some(steps[best] as u64);
        summary.selected_score = Some(scores[best]);
    }
    write_text(&run_dir.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("json"))?;
    Ok(summary)
}

fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| CliError::Usage(format!("grid key `{key}` crosses a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Expands `{"base": ..., "grid": {"a.b": [..], ...}}` into one run
/// configuration per grid point (keys in sorted order, the last varying
/// fastest). Each run gets `out_dir/run_NNN`.
pub fn expand_grid(
    doc: &Value,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<(PathBuf, RunConfig, BTreeMap<String, Value>)>, CliError> {
    let base = doc.get("base").cloned().unwrap_or(Value::Object(Default::default()));
    let grid: BTreeMap<String, Vec<Value>> = serde_json::from_value(doc.get("grid").cloned().unwrap_or_default())
        .map_err(|e| CliError::Usage(format!("grid: {e}")))?;
    if grid.values().any(Vec::is_empty) {
        return Err(CliError::Usage("grid axes must be non-empty".into()));
    }
    let keys: Vec<&String> = grid.keys().collect();
    let total: usize = grid.values().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    for n in 0..total {
        let mut rem = n;
        let mut point = BTreeMap::new();
        for k in keys.iter().rev() {
            let axis = &grid[*k];
            point.insert((*k).clone(), axis[rem % axis.len()].clone());
            rem /= axis.len();
        }
        let mut d = base.clone();
        for (k, v) in &point {
            set_dotted(&mut d, k, v.clone())?;
        }
        let mut cfg: RunConfig = serde_json::from_value(d).map_err(|e| CliError::Usage(format!("grid point {n}: {e}")))?;
        cfg.resolve(base_dir);
        let dir = out_dir.join(format!("run_{n:03}"));
        cfg.out_dir = Some(dir.clone());
        cfg.train.validate().map_err(train_err)?;
        out.push((dir, cfg, point));
    }
    Ok(out)
}
