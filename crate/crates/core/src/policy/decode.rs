use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, Policy, PolicyError, EOS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { temperature: 0.0, top_p: 1.0, max_tokens: 200, n_samples: 1, seed: 0 }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self::default()
    }

    /// Sampling setting used for pass@1 and CoT data generation.
    pub fn sampling(n_samples: usize, seed: u64) -> Self {
        Self { temperature: 0.7, top_p: 0.8, n_samples, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.into()));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.max_tokens == 0 || self.n_samples == 0 {
            return bad("max_tokens and n_samples must be positive");
        }
        Ok(())
    }
}

/// Draws one token. Temperature 0 is argmax with ties to the lowest id;
/// otherwise logits are divided by the temperature, the smallest set of
/// most likely tokens whose mass reaches `top_p` is kept, and the draw is
/// from the renormalized remainder.
pub fn sample_token(logits: &[f64], temperature: f64, top_p: f64, rng: &mut impl Rng) -> u32 {
    if temperature == 0.0 {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return best as u32;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let probs = softmax(&scaled);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    if top_p < 1.0 {
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let mut mass = 0.0;
        let mut keep = 0;
        for &i in &order {
            mass += probs[i];
            keep += 1;
            if mass >= top_p {
                break;
            }
        }
        order.truncate(keep);
    }
    let z: f64 = order.iter().map(|&i| probs[i]).sum();
    let mut u = rng.gen::<f64>() * z;
    for &i in &order {
        u -= probs[i];
        if u < 0.0 {
            return i as u32;
        }
    }
    *order.last().expect("non-empty vocabulary") as u32
}

/// `n_samples` continuations of `x`, each ending with `<eos>` or cut at
/// `max_tokens` (or the context window). Sample `i` uses its own ChaCha
/// stream of `seed`, so outputs do not depend on evaluation order.
pub fn decode(policy: &dyn Policy, x: &[u32], config: &DecodeConfig) -> Result<Vec<Vec<u32>>, PolicyError> {
    config.validate()?;
    let room = policy.max_len().saturating_sub(x.len());
    let limit = config.max_tokens.min(room);
    let n = if config.temperature == 0.0 { 1 } else { config.n_samples };
    let mut out = Vec::with_capacity(config.n_samples);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let mut cursor = policy.cursor(x)?;
        let mut y = Vec::new();
        while y.len() < limit {
            let tok = sample_token(cursor.logits(), config.temperature, config.top_p, &mut rng);
            y.push(tok);
            if tok == EOS || y.len() == limit {
                break;
            }
            cursor.push(tok)?;
        }
        out.push(y);
    }
    while out.len() < config.n_samples {
        out.push(out[0].clone());
    }
    Ok(out)
}
