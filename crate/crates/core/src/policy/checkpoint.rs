//! Self-describing binary checkpoint: `PFCK`, a format version, a
//! length-prefixed JSON header (vocabulary, architecture, block layout,
//! training metadata) and the raw little-endian `f64` arrays it lists.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnyPolicy, Block, Policy, PolicyError, TabularPolicy, TinyTransformer, TransformerConfig, Vocabulary};

const MAGIC: &[u8; 4] = b"PFCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub vocab: Vec<String>,
    pub blocks: Vec<Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformer: Option<TransformerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular_contexts: Option<Vec<Vec<u32>>>,
    pub step: u64,
    /// Free-form training metadata (config, sampler state, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
    /// Names and lengths of the arrays that follow the header; the first
    /// is always `params`.
    pub arrays: Vec<(String, usize)>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub policy: AnyPolicy,
    pub step: u64,
    pub extra: serde_json::Value,
    /// Additional named arrays, e.g. optimizer moments.
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(policy: AnyPolicy, step: u64) -> Self {
        Self { policy, step, extra: serde_json::Value::Null, arrays: Vec::new() }
    }

    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, PolicyError> {
        let p = self.policy.as_policy();
        let mut meta = CheckpointMeta {
            kind: self.policy.kind().into(),
            vocab: p.vocab().tokens().to_vec(),
            blocks: p.params().blocks.clone(),
            transformer: None,
            tabular_k: None,
            tabular_contexts: None,
            step: self.step,
            extra: self.extra.clone(),
            arrays: vec![("params".into(), p.params().len())],
        };
        match &self.policy {
            AnyPolicy::Tabular(t) => {
                meta.tabular_k = Some(t.k());
                meta.tabular_contexts = Some(t.contexts().to_vec());
            }
            AnyPolicy::Transformer(t) => meta.transformer = Some(t.config().clone()),
        }
        meta.arrays.extend(self.arrays.iter().map(|(n, v)| (n.clone(), v.len())));
        let header = serde_json::to_vec(&meta).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        let n_values: usize = meta.arrays.iter().map(|(_, l)| l).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * n_values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in p.params().values.iter().chain(self.arrays.iter().flat_map(|(_, v)| v)) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated header"))?;
        let header = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
        let meta: CheckpointMeta = serde_json::from_slice(header).map_err(|e| bad(&e.to_string()))?;
        let mut data = &body[hlen..];
        let mut arrays = Vec::new();
        for (name, len) in &meta.arrays {
            let raw = data.get(..len * 8).ok_or_else(|| bad("truncated data"))?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name.clone(), values));
            data = &data[len * 8..];
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after data"));
        }
        if arrays.first().map(|(n, _)| n.as_str()) != Some("params") {
            return Err(bad("missing parameter array"));
        }
        let params = arrays.remove(0).1;
        let vocab = Vocabulary::from_tokens(meta.vocab.clone())?;
        let policy = match meta.kind.as_str() {
            "tabular" => AnyPolicy::Tabular(TabularPolicy::from_parts(
                vocab,
                meta.tabular_k.ok_or_else(|| bad("missing tabular_k"))?,
                meta.tabular_contexts.clone().ok_or_else(|| bad("missing tabular contexts"))?,
                params,
            )?),
            "transformer" => AnyPolicy::Transformer(TinyTransformer::from_parts(
                vocab,
                meta.transformer.clone().ok_or_else(|| bad("missing transformer config"))?,
                params,
            )?),
            other => return Err(bad(&format!("unknown policy kind `{other}`"))),
        };
        if policy.params().blocks != meta.blocks {
            return Err(bad("block layout does not match the architecture"));
        }
        Ok(Self { policy, step: meta.step, extra: meta.extra, arrays })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), PolicyError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, ckpt.to_bytes()?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PolicyError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
