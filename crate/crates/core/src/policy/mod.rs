//! Autoregressive token policies: a tabular softmax policy for exact
//! analysis and a small causal transformer with hand-written backprop.
//!
//! A sequence pair `(x, y)` is a prompt `x` (starting with `<bos>`) and a
//! continuation `y` ending with `<eos>`; `log π(y|x) = Σ_t log π(y_t | x, y_<t)`.

mod checkpoint;
mod decode;
mod tabular;
mod transformer;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::puzzle::PuzzleInstance;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use decode::{decode, sample_token, DecodeConfig};
pub use tabular::TabularPolicy;
pub use transformer::{TinyTransformer, TransformerConfig};
pub use vocab::{Vocabulary, BOS, EOS};

pub use crate::objectives::loss_gradient;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown token: {0}")]
    UnknownToken(String),
    #[error("continuation must end with <eos>")]
    MissingEos,
    #[error("sequence of {len} tokens exceeds the context window of {ctx}")]
    ContextOverflow { len: usize, ctx: usize },
    #[error("empty required batch: {0}")]
    EmptyRequiredBatch(&'static str),
    #[error("non-finite gradient")]
    NonfiniteGradient,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Named slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat real parameter vector plus its block layout.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyParams {
    pub values: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl PolicyParams {
    pub fn from_shapes(shapes: &[(&str, Vec<usize>)]) -> Self {
        let mut blocks = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for (name, shape) in shapes {
            let b = Block { name: name.to_string(), offset, shape: shape.clone() };
            offset += b.len();
            blocks.push(b);
        }
        Self { values: vec![0.0; offset], blocks }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn is_consistent(&self) -> bool {
        self.blocks.iter().map(Block::len).sum::<usize>() == self.values.len()
            && self.values.iter().all(|v| v.is_finite())
    }
}

/// Incremental decoding state: the next-token logits given everything fed
/// so far.
pub trait Cursor {
    fn logits(&self) -> &[f64];
    fn push(&mut self, token: u32) -> Result<(), PolicyError>;
    /// Number of tokens consumed so far.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn box_clone(&self) -> Box<dyn Cursor + '_>;
}

/// An autoregressive token distribution `π_θ`.
pub trait Policy: Send + Sync {
    fn vocab(&self) -> &Vocabulary;
    fn params(&self) -> &PolicyParams;
    fn params_mut(&mut self) -> &mut PolicyParams;
    /// Log-probability of every token of `y` given `x` and the tokens of `y`
    /// before it.
    fn token_logprobs(&self, x: &[u32], y: &[u32]) -> Result<Vec<f64>, PolicyError>;
    /// Adds `coef * ∇_θ log π(y|x)` to `grad` and returns `log π(y|x)`.
    fn accumulate_grad(&self, x: &[u32], y: &[u32], coef: f64, grad: &mut [f64]) -> Result<f64, PolicyError>;
    /// Decoding state after feeding `prefix`.
    fn cursor(&self, prefix: &[u32]) -> Result<Box<dyn Cursor + '_>, PolicyError>;
    /// Longest `x ‖ y` the policy accepts.
    fn max_len(&self) -> usize;
}

/// Per-token log-probabilities and their sum.
pub fn logprob(policy: &dyn Policy, x: &[u32], y: &[u32]) -> Result<(Vec<f64>, f64), PolicyError> {
    let per = policy.token_logprobs(x, y)?;
    let total = per.iter().sum();
    Ok((per, total))
}

pub(crate) fn check_pair(policy: &dyn Policy, x: &[u32], y: &[u32]) -> Result<(), PolicyError> {
    policy.vocab().check(x)?;
    policy.vocab().check(y)?;
    if y.last() != Some(&EOS) {
        return Err(PolicyError::MissingEos);
    }
    let len = x.len() + y.len();
    if x.is_empty() || len > policy.max_len() {
        return Err(PolicyError::ContextOverflow { len, ctx: policy.max_len() });
    }
    Ok(())
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let lz = m + z.ln();
    logits.iter().map(|l| l - lz).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `<bos>` + the instance prompt.
pub fn encode_prompt(vocab: &Vocabulary, instance: &PuzzleInstance) -> Result<Vec<u32>, PolicyError> {
    let mut ids = vec![BOS];
    ids.extend(vocab.encode(&instance.prompt())?);
    Ok(ids)
}

/// Path text + `<eos>`.
pub fn encode_target(vocab: &Vocabulary, path_text: &str) -> Result<Vec<u32>, PolicyError> {
    let mut ids = vocab.encode(path_text)?;
    ids.push(EOS);
    Ok(ids)
}

/// Either policy kind behind one serializable handle.
#[derive(Clone, Debug)]
pub enum AnyPolicy {
    Tabular(TabularPolicy),
    Transformer(TinyTransformer),
}

impl AnyPolicy {
    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            AnyPolicy::Tabular(p) => p,
            AnyPolicy::Transformer(p) => p,
        }
    }

    pub fn as_policy_mut(&mut self) -> &mut dyn Policy {
        match self {
            AnyPolicy::Tabular(p) => p,
            AnyPolicy::Transformer(p) => p,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyPolicy::Tabular(_) => "tabular",
            AnyPolicy::Transformer(_) => "transformer",
        }
    }
}

impl Policy for AnyPolicy {
    fn vocab(&self) -> &Vocabulary {
        self.as_policy().vocab()
    }
    fn params(&self) -> &PolicyParams {
        self.as_policy().params()
    }
    fn params_mut(&mut self) -> &mut PolicyParams {
        self.as_policy_mut().params_mut()
    }
    fn token_logprobs(&self, x: &[u32], y: &[u32]) -> Result<Vec<f64>, PolicyError> {
        self.as_policy().token_logprobs(x, y)
    }
    fn accumulate_grad(&self, x: &[u32], y: &[u32], coef: f64, grad: &mut [f64]) -> Result<f64, PolicyError> {
        self.as_policy().accumulate_grad(x, y, coef, grad)
    }
    fn cursor(&self, prefix: &[u32]) -> Result<Box<dyn Cursor + '_>, PolicyError> {
        self.as_policy().cursor(prefix)
    }
    fn max_len(&self) -> usize {
        self.as_policy().max_len()
    }
}
