use std::collections::HashMap;

use super::{check_pair, log_softmax, Cursor, Policy, PolicyError, PolicyParams, Vocabulary};

/// Logit assigned to tokens never observed in a context by [`TabularPolicy::fit_counts`].
pub const UNSEEN_LOGIT: f64 = -1e3;

/// Softmax over a logit table with one row per distinct context of the last
/// `k` tokens. Contexts are registered from a corpus up front; any context
/// never registered shares row 0.
#[derive(Clone, Debug)]
pub struct TabularPolicy {
    vocab: Vocabulary,
    k: usize,
    contexts: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    params: PolicyParams,
}

impl TabularPolicy {
    pub const DEFAULT_K: usize = 8;

    /// Table with only the shared fallback row, all logits zero.
    pub fn new(vocab: Vocabulary, k: usize) -> Self {
        let v = vocab.len();
        Self {
            vocab,
            k: k.max(1),
            contexts: vec![Vec::new()],
            index: HashMap::new(),
            params: PolicyParams::from_shapes(&[("logits", vec![1, v])]),
        }
    }

    pub(crate) fn from_parts(
        vocab: Vocabulary,
        k: usize,
        contexts: Vec<Vec<u32>>,
        values: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        let v = vocab.len();
        if contexts.is_empty() || values.len() != contexts.len() * v {
            return Err(PolicyError::Checkpoint("tabular table size does not match its contexts".into()));
        }
        let index = contexts.iter().enumerate().skip(1).map(|(i, c)| (c.clone(), i)).collect();
        let mut params = PolicyParams::from_shapes(&[("logits", vec![contexts.len(), v])]);
        params.values = values;
        Ok(Self { vocab, k, contexts, index, params })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn contexts(&self) -> &[Vec<u32>] {
        &self.contexts
    }

    pub fn num_rows(&self) -> usize {
        self.contexts.len()
    }

    fn key(&self, seq: &[u32]) -> Vec<u32> {
        seq[seq.len().saturating_sub(self.k)..].to_vec()
    }

    /// Row used to predict the token following `seq`.
    pub fn row_for(&self, seq: &[u32]) -> usize {
        self.index.get(&self.key(seq)).copied().unwrap_or(0)
    }

    /// Adds a zero-logit row for every context occurring in `(x, y)`.
    pub fn register(&mut self, x: &[u32], y: &[u32]) {
        let v = self.vocab.len();
        let mut seq = x.to_vec();
        for &tok in y {
            let key = self.key(&seq);
            if !self.index.contains_key(&key) {
                self.index.insert(key.clone(), self.contexts.len());
                self.contexts.push(key);
                self.params.values.extend(std::iter::repeat(0.0).take(v));
            }
            seq.push(tok);
        }
        self.params.blocks[0].shape = vec![self.contexts.len(), v];
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.params.values[row * v..(row + 1) * v]
    }

    /// Maximum-likelihood fit: each registered row gets `ln(count)` for
    /// observed next tokens and [`UNSEEN_LOGIT`] otherwise, reproducing the
    /// empirical conditional frequencies.
    pub fn fit_counts(&mut self, corpus: &[(Vec<u32>, Vec<u32>)]) {
        for (x, y) in corpus {
            self.register(x, y);
        }
        let v = self.vocab.len();
        let mut counts = vec![0u64; self.params.values.len()];
        for (x, y) in corpus {
            let mut seq = x.clone();
            for &tok in y {
                counts[self.row_for(&seq) * v + tok as usize] += 1;
                seq.push(tok);
            }
        }
        for row in 1..self.contexts.len() {
            let slice = &counts[row * v..(row + 1) * v];
            if slice.iter().all(|&c| c == 0) {
                continue;
            }
            for (j, &c) in slice.iter().enumerate() {
                self.params.values[row * v + j] = if c > 0 { (c as f64).ln() } else { UNSEEN_LOGIT };
            }
        }
    }
}

impl Policy for TabularPolicy {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn params(&self) -> &PolicyParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut PolicyParams {
        &mut self.params
    }

    fn token_logprobs(&self, x: &[u32], y: &[u32]) -> Result<Vec<f64>, PolicyError> {
        check_pair(self, x, y)?;
        let mut seq = x.to_vec();
        let mut out = Vec::with_capacity(y.len());
        for &tok in y {
            let lp = log_softmax(self.row(self.row_for(&seq)));
            out.push(lp[tok as usize]);
            seq.push(tok);
        }
        Ok(out)
    }

    fn accumulate_grad(&self, x: &[u32], y: &[u32], coef: f64, grad: &mut [f64]) -> Result<f64, PolicyError> {
        check_pair(self, x, y)?;
        let v = self.vocab.len();
        let mut seq = x.to_vec();
        let mut total = 0.0;
        for &tok in y {
            let row = self.row_for(&seq);
            let lp = log_softmax(self.row(row));
            total += lp[tok as usize];
            let g = &mut grad[row * v..(row + 1) * v];
            for (j, l) in lp.iter().enumerate() {
                g[j] -= coef * l.exp();
            }
            g[tok as usize] += coef;
            seq.push(tok);
        }
        Ok(total)
    }

    fn cursor(&self, prefix: &[u32]) -> Result<Box<dyn Cursor + '_>, PolicyError> {
        self.vocab.check(prefix)?;
        Ok(Box::new(TabularCursor { policy: self, seq: prefix.to_vec() }))
    }

    fn max_len(&self) -> usize {
        usize::MAX
    }
}

#[derive(Clone)]
struct TabularCursor<'a> {
    policy: &'a TabularPolicy,
    seq: Vec<u32>,
}

impl Cursor for TabularCursor<'_> {
    fn logits(&self) -> &[f64] {
        self.policy.row(self.policy.row_for(&self.seq))
    }

    fn push(&mut self, token: u32) -> Result<(), PolicyError> {
        self.policy.vocab.check(&[token])?;
        self.seq.push(token);
        Ok(())
    }

    fn len(&self) -> usize {
        self.seq.len()
    }

    fn box_clone(&self) -> Box<dyn Cursor + '_> {
        Box::new(self.clone())
    }
}
