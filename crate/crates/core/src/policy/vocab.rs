use serde::{Deserialize, Serialize};

use super::PolicyError;

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;

const BOS_TEXT: &str = "<bos>";
const EOS_TEXT: &str = "<eos>";

/// Character/word hybrid vocabulary. Keywords of the path grammar are single
/// tokens; everything else is one character per token. Encoding is greedy
/// longest match.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut tokens: Vec<String> = vec![BOS_TEXT.into(), EOS_TEXT.into()];
        tokens.extend((0..10).map(|d| d.to_string()));
        for s in ["+", "-", "*", "/", "(", ")", " ", "\n", ":", "=", "left", "Answer", "Input", "Target", "Steps"] {
            tokens.push(s.into());
        }
        Self { tokens }
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, PolicyError> {
        if tokens.len() < 2 || tokens[0] != BOS_TEXT || tokens[1] != EOS_TEXT {
            return Err(PolicyError::Checkpoint("vocabulary must start with <bos>, <eos>".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !tokens.iter().all(|t| !t.is_empty() && seen.insert(t.as_str())) {
            return Err(PolicyError::Checkpoint("vocabulary tokens must be distinct and non-empty".into()));
        }
        Ok(Self { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, s: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == s).map(|i| i as u32)
    }

    /// Greedy longest-match encoding. `<bos>` and `<eos>` are recognized
    /// literally so that `encode(decode(ids)) == ids`.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>, PolicyError> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let best = self
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| rest.starts_with(t.as_str()))
                .max_by_key(|(i, t)| (t.len(), std::cmp::Reverse(*i)));
            match best {
                Some((id, t)) => {
                    out.push(id as u32);
                    rest = &rest[t.len()..];
                }
                None => {
                    let c = rest.chars().next().unwrap_or_default();
                    return Err(PolicyError::UnknownToken(c.to_string()));
                }
            }
        }
        Ok(out)
    }

    /// Concatenated token strings, including the special markers.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().filter_map(|&i| self.token(i)).collect()
    }

    /// Like [`Vocabulary::decode`] but drops `<bos>`/`<eos>`.
    pub fn decode_text(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i != BOS && i != EOS)
            .filter_map(|&i| self.token(i))
            .collect()
    }

    pub fn check(&self, ids: &[u32]) -> Result<(), PolicyError> {
        match ids.iter().find(|&&i| i as usize >= self.tokens.len()) {
            Some(i) => Err(PolicyError::UnknownToken(format!("id {i}"))),
            None => Ok(()),
        }
    }
}
