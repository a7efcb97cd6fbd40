//! Fine-tuning loop: independent positive/negative batch sampling, linear
//! warmup followed by cosine decay to a floor, optional global-norm
//! clipping, periodic checkpoints and validation-based selection.
//!
//! Step `s` (1-based) uses `lr_at(s, total)`. Batches are a pure function
//! of `(seed, stream, step)`: item `i = (s - 1) * B + j` of a stream is
//! element `i mod n` of that stream's permutation for epoch `i / n`. The
//! positive and negative streams use different ChaCha streams, so resuming
//! from a checkpoint needs only the step count and optimizer state.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::objectives::{loss_gradient, ObjectiveError, ObjectiveSpec, Sequence};
use crate::policy::{save_checkpoint, AnyPolicy, Checkpoint, Policy, PolicyError};

const POS_STREAM: u64 = 1;
const NEG_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// θ ← θ − lr·g
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub checkpoint_every_fraction: f64,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Overrides the epoch-derived step count when set.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveSpec::default(),
            peak_lr: 1e-5,
            min_lr: 7e-8,
            warmup_fraction: 0.10,
            batch_size: 128,
            epochs: 1,
            seed: 0,
            checkpoint_every_fraction: 0.05,
            optimizer: OptimizerKind::Sgd,
            clip_norm: Some(1.0),
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        self.objective.validate()?;
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return bad("peak_lr must be positive");
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.peak_lr) {
            return bad("min_lr must lie in (0, peak_lr]");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.checkpoint_every_fraction > 0.0 && self.checkpoint_every_fraction <= 1.0) {
            return bad("checkpoint_every_fraction must lie in (0, 1]");
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return bad("clip_norm must be positive");
            }
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive");
        }
        Ok(())
    }

    fn warmup_steps(&self, total: usize) -> usize {
        ((self.warmup_fraction * total as f64).ceil() as usize).clamp(1, total)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("step {step} outside 0..={total}")]
    OutOfRangeStep { step: usize, total: usize },
    #[error("empty required dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("non-finite loss at step {step}; batch saved to {saved:?}")]
    NonfiniteLoss { step: usize, saved: Option<PathBuf> },
    #[error("checkpoint does not belong to this run: {0}")]
    ResumeMismatch(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Learning rate at `step` of `total`: linear from 0 to `peak_lr` over the
/// warmup steps, then cosine from `peak_lr` to `min_lr` at `total`.
pub fn lr_at(step: usize, total: usize, config: &TrainConfig) -> Result<f64, TrainError> {
    if total == 0 || step > total {
        return Err(TrainError::OutOfRangeStep { step, total });
    }
    let warmup = config.warmup_steps(total);
    let (peak, floor) = (config.peak_lr, config.min_lr);
    if step < warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    if total == warmup {
        return Ok(if step == total { floor } else { peak });
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Training sequences. For paired objectives `pos[i]` and `neg[i]` form a
/// pair and are drawn together.
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub pos: Vec<Sequence>,
    pub neg: Vec<Sequence>,
}

impl TrainData {
    /// Stable content hash, recorded in checkpoints to guard resumes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (tag, set) in [(b'+', &self.pos), (b'-', &self.neg)] {
            for (x, y) in set {
                h.update([tag]);
                for t in x.iter().chain([u32::MAX].iter()).chain(y) {
                    h.update(t.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Total optimizer steps: `ceil(E·|D|/B)` over the dataset that drives an
/// epoch (positives, pairs, or negatives for UL-only training).
pub fn total_steps(data: &TrainData, config: &TrainConfig) -> usize {
    if let Some(m) = config.max_steps {
        return m;
    }
    let n = if config.objective.uses_pos() { data.pos.len() } else { data.neg.len() };
    (config.epochs * n).div_ceil(config.batch_size).max(1)
}

/// Stateless epoch-permutation sampler.
#[derive(Clone, Debug)]
struct Sampler {
    seed: u64,
    stream: u64,
    n: usize,
    cached: Option<(usize, Vec<usize>)>,
}

impl Sampler {
    fn new(seed: u64, stream: u64, n: usize) -> Self {
        Self { seed, stream, n, cached: None }
    }

    fn permutation(&mut self, epoch: usize) -> &[usize] {
        if self.cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
            // One generator per (seed, epoch); the stream separates D+ from D-.
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            rng.set_stream(self.stream);
            let mut p: Vec<usize> = (0..self.n).collect();
            p.shuffle(&mut rng);
            self.cached = Some((epoch, p));
        }
        &self.cached.as_ref().expect("just filled").1
    }

    fn batch(&mut self, step: usize, size: usize) -> Vec<usize> {
        (0..size)
            .map(|j| {
                let i = (step - 1) * size + j;
                let (epoch, off) = (i / self.n, i % self.n);
                self.permutation(epoch)[off]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
enum OptState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64> },
}

/// One training run over a policy it owns.
pub struct Trainer {
    policy: AnyPolicy,
    data: TrainData,
    config: TrainConfig,
    total: usize,
    step: usize,
    pos_sampler: Sampler,
    neg_sampler: Sampler,
    opt: OptState,
    log: Vec<LogEntry>,
    run_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(policy: AnyPolicy, data: TrainData, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let spec = &config.objective;
        if spec.kind.is_paired() {
            if data.pos.is_empty() || data.pos.len() != data.neg.len() {
                return Err(TrainError::EmptyDataset("paired data needs equal, non-empty chosen/rejected sets"));
            }
        } else {
            if spec.uses_pos() && data.pos.is_empty() {
                return Err(TrainError::EmptyDataset("positive"));
            }
            if spec.uses_neg() && data.neg.is_empty() {
                return Err(TrainError::EmptyDataset("negative"));
            }
        }
        let total = total_steps(&data, &config);
        let n_params = policy.params().len();
        let opt = match config.optimizer {
            OptimizerKind::Sgd => OptState::Sgd,
            OptimizerKind::Adam { .. } => OptState::Adam { m: vec![0.0; n_params], v: vec![0.0; n_params] },
        };
        Ok(Self {
            pos_sampler: Sampler::new(config.seed, POS_STREAM, data.pos.len().max(1)),
            neg_sampler: Sampler::new(config.seed, NEG_STREAM, data.neg.len().max(1)),
            policy,
            data,
            total,
            step: 0,
            opt,
            log: Vec::new(),
            run_dir: None,
            config,
        })
    }

    /// Writes `log.jsonl` and step checkpoints under `dir`.
    pub fn with_run_dir(mut self, dir: &Path) -> Result<Self, TrainError> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        self.run_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    /// Continues a run from one of its checkpoints.
    pub fn resume(ckpt: &Checkpoint, data: TrainData, config: TrainConfig) -> Result<Self, TrainError> {
        let mut t = Self::new(ckpt.policy.clone(), data, config)?;
        let expect = |key: &str| ckpt.extra.get(key).cloned().unwrap_or_default();
        if expect("data_digest") != serde_json::Value::String(t.data.digest()) {
            return Err(TrainError::ResumeMismatch("training data differs".into()));
        }
        if expect("config") != serde_json::to_value(&t.config).unwrap_or_default() {
            return Err(TrainError::ResumeMismatch("training config differs".into()));
        }
        t.step = ckpt.step as usize;
        if let OptState::Adam { m, v } = &mut t.opt {
            match (ckpt.array("adam_m"), ckpt.array("adam_v")) {
                (Some(a), Some(b)) if a.len() == m.len() && b.len() == v.len() => {
                    m.copy_from_slice(a);
                    v.copy_from_slice(b);
                }
                _ => return Err(TrainError::ResumeMismatch("missing optimizer state".into())),
            }
        }
        Ok(t)
    }

    pub fn policy(&self) -> &AnyPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> AnyPolicy {
        self.policy
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total
    }

    /// Steps at which checkpoints are taken: every
    /// `ceil(fraction · total)` steps and at the final step.
    pub fn is_checkpoint_step(&self, step: usize) -> bool {
        let every = ((self.config.checkpoint_every_fraction * self.total as f64).ceil() as usize).max(1);
        step == self.total || step % every == 0
    }

    /// Snapshot of the current parameters, optimizer state and run identity.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.policy.clone(), self.step as u64);
        ck.extra = serde_json::json!({
            "config": self.config,
            "data_digest": self.data.digest(),
            "total_steps": self.total,
        });
        if let OptState::Adam { m, v } = &self.opt {
            ck.arrays.push(("adam_m".into(), m.clone()));
            ck.arrays.push(("adam_v".into(), v.clone()));
        }
        ck
    }

    fn persist_batch(&self, pos: &[usize], neg: &[usize]) -> Option<PathBuf> {
        let dir = self.run_dir.as_ref()?;
        let path = dir.join(format!("nonfinite_batch_step_{}.json", self.step + 1));
        let dump = serde_json::json!({
            "step": self.step + 1,
            "pos": pos.iter().map(|&i| &self.data.pos[i]).collect::<Vec<_>>(),
            "neg": neg.iter().map(|&i| &self.data.neg[i]).collect::<Vec<_>>(),
        });
        fs::write(&path, dump.to_string()).ok()?;
        Some(path)
    }

    /// Runs one optimizer step and returns its log entry.
    pub fn train_step(&mut self) -> Result<LogEntry, TrainError> {
        if self.is_done() {
            return Err(TrainError::OutOfRangeStep { step: self.step + 1, total: self.total });
        }
        let s = self.step + 1;
        let b = self.config.batch_size;
        let spec = self.config.objective.clone();
        let (pos_idx, neg_idx) = if spec.kind.is_paired() {
            let idx = self.pos_sampler.batch(s, b);
            (idx.clone(), idx)
        } else {
            let p = if spec.uses_pos() { self.pos_sampler.batch(s, b) } else { Vec::new() };
            let n = if spec.uses_neg() { self.neg_sampler.batch(s, b) } else { Vec::new() };
            (p, n)
        };
        let pos: Vec<Sequence> = pos_idx.iter().map(|&i| self.data.pos[i].clone()).collect();
        let neg: Vec<Sequence> = neg_idx.iter().map(|&i| self.data.neg[i].clone()).collect();
        let out = match loss_gradient(&self.policy, &spec, &pos, &neg) {
            Ok(o) if o.value.is_finite() => o,
            Ok(_) | Err(ObjectiveError::NonfiniteGradient) => {
                return Err(TrainError::NonfiniteLoss { step: s, saved: self.persist_batch(&pos_idx, &neg_idx) })
            }
            Err(e) => return Err(e.into()),
        };
        let mut grad = out.grad;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if let Some(c) = self.config.clip_norm {
            if norm > c {
                let k = c / norm;
                grad.iter_mut().for_each(|g| *g *= k);
            }
        }
        let lr = lr_at(s, self.total, &self.config)?;
        let theta = &mut self.policy.params_mut().values;
        match (&mut self.opt, self.config.optimizer) {
            (OptState::Adam { m, v }, OptimizerKind::Adam { beta1, beta2, eps }) => {
                let c1 = 1.0 - beta1.powi(s as i32);
                let c2 = 1.0 - beta2.powi(s as i32);
                for i in 0..theta.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
            _ => {
                for (t, g) in theta.iter_mut().zip(&grad) {
                    *t -= lr * g;
                }
            }
        }
        self.step = s;
        let entry = LogEntry { step: s, loss: out.value, lr, grad_norm: norm };
        if let Some(dir) = &self.run_dir {
            let mut f = fs::OpenOptions::new().create(true).append(true).open(dir.join("log.jsonl"))?;
            writeln!(f, "{}", serde_json::to_string(&entry).expect("log entry serializes"))?;
            if self.is_checkpoint_step(s) {
                save_checkpoint(&checkpoint_path(dir, s), &self.checkpoint())?;
            }
        }
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Trains to the end and returns the in-memory checkpoints taken on
    /// the checkpoint schedule.
    pub fn run(&mut self) -> Result<Vec<Checkpoint>, TrainError> {
        let mut out = Vec::new();
        while !self.is_done() {
            let e = self.train_step()?;
            if self.is_checkpoint_step(e.step) {
                out.push(self.checkpoint());
            }
        }
        Ok(out)
    }

    /// Trains until `step` (or the end) without keeping checkpoints.
    pub fn run_until(&mut self, step: usize) -> Result<(), TrainError> {
        while !self.is_done() && self.step < step {
            self.train_step()?;
        }
        Ok(())
    }
}

pub fn checkpoint_path(run_dir: &Path, step: usize) -> PathBuf {
    run_dir.join("checkpoints").join(format!("step_{step:06}.ckpt"))
}

/// Index of the checkpoint with the highest validation score; ties go to
/// the later step. Also returns every score.
pub fn select_checkpoint<E>(
    checkpoints: &[Checkpoint],
    mut score: impl FnMut(&Checkpoint) -> Result<f64, E>,
) -> Result<(usize, Vec<f64>), E> {
    let mut scores = Vec::with_capacity(checkpoints.len());
    let mut best = 0;
    for (i, ck) in checkpoints.iter().enumerate() {
        let s = score(ck)?;
        if i == 0 || s > scores[best] || (s == scores[best] && ck.step >= checkpoints[best].step) {
            best = i;
        }
        scores.push(s);
    }
    Ok((best, scores))
}
