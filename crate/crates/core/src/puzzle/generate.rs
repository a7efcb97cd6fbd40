use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PuzzleError, PuzzleInstance, Task};
use crate::classic::reachable;

/// Countdown instance generator settings. Defaults follow the usual
/// Countdown setup: inputs 1..=99, targets 10..=100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub count: usize,
    pub input_min: i64,
    pub input_max: i64,
    pub target_min: i64,
    pub target_max: i64,
    pub exclude_targets: Vec<i64>,
    /// Consecutive rejected draws tolerated before giving up.
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            count: 0,
            input_min: 1,
            input_max: 99,
            target_min: 10,
            target_max: 100,
            exclude_targets: Vec::new(),
            max_attempts: 100_000,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(), PuzzleError> {
        let bad = |m: &str| Err(PuzzleError::ConfigUnsatisfiable(m.to_string()));
        if self.input_min < 1 || self.input_min > self.input_max {
            return bad("input range is empty or non-positive");
        }
        if self.target_min < 1 || self.target_min > self.target_max {
            return bad("target range is empty or non-positive");
        }
        let allowed = (self.target_min..=self.target_max)
            .filter(|t| !self.exclude_targets.contains(t))
            .count();
        if allowed == 0 {
            return bad("every target in range is excluded");
        }
        Ok(())
    }
}

/// Draws solvable Countdown instances by rejection sampling. Every emitted
/// instance has a solution whose intermediate results are all integers.
/// Deterministic for a given seed.
pub fn generate_countdown(config: &GeneratorConfig, seed: u64) -> Result<Vec<PuzzleInstance>, PuzzleError> {
    config.validate()?;
    let targets: Vec<i64> = (config.target_min..=config.target_max)
        .filter(|t| !config.exclude_targets.contains(t))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.count);
    let mut misses = 0usize;
    while out.len() < config.count {
        let inputs: Vec<i64> = (0..4)
            .map(|_| rng.gen_range(config.input_min..=config.input_max))
            .collect();
        let target = *targets.choose(&mut rng).expect("non-empty targets");
        let inst = PuzzleInstance::new(Task::Countdown, inputs, target)?;
        if reachable(&inst.input_values(), inst.target_value(), true) {
            out.push(inst);
            misses = 0;
        } else {
            misses += 1;
            if misses >= config.max_attempts {
                return Err(PuzzleError::ConfigUnsatisfiable(format!(
                    "{misses} consecutive draws were unsolvable"
                )));
            }
        }
    }
    Ok(out)
}

/// Distinct solvable Game-of-24 instances with inputs in 1..=13, used when
/// the ranked case list is not available. Inputs are stored sorted.
pub fn generate_game24(count: usize, seed: u64) -> Vec<PuzzleInstance> {
    let mut all: Vec<PuzzleInstance> = Vec::new();
    for a in 1..=13 {
        for b in a..=13 {
            for c in b..=13 {
                for d in c..=13 {
                    let inst = PuzzleInstance::game24([a, b, c, d]);
                    if reachable(&inst.input_values(), inst.target_value(), false) {
                        all.push(inst);
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(count);
    all
}

/// Reads the ranked Game-of-24 case list (CSV with a header row, a `Rank`
/// column and a `Puzzles` column holding four space-separated numbers).
/// Returns the cases in rank order.
pub fn load_game24_csv(path: &Path) -> Result<Vec<PuzzleInstance>, PuzzleError> {
    let text = std::fs::read_to_string(path).map_err(|e| PuzzleError::Io(e.to_string()))?;
    parse_game24_csv(&text)
}

pub(crate) fn parse_game24_csv(text: &str) -> Result<Vec<PuzzleInstance>, PuzzleError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| PuzzleError::Io("empty case list".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| PuzzleError::Io(format!("missing `{name}` column")))
    };
    let (rank_col, puzzle_col) = (col("Rank")?, col("Puzzles")?);
    let mut ranked = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = || PuzzleError::Io(format!("malformed case list row {}", lineno + 2));
        let rank: u64 = fields.get(rank_col).and_then(|r| r.parse().ok()).ok_or_else(err)?;
        let nums: Vec<i64> = fields
            .get(puzzle_col)
            .ok_or_else(err)?
            .split_whitespace()
            .map(|n| n.parse().map_err(|_| err()))
            .collect::<Result<_, _>>()?;
        ranked.push((rank, PuzzleInstance::new(Task::Game24, nums, 24)?));
    }
    ranked.sort_by_key(|(r, _)| *r);
    Ok(ranked.into_iter().map(|(_, i)| i).collect())
}

#[derive(Clone, Debug, Default)]
pub struct Game24Split {
    pub train: Vec<PuzzleInstance>,
    pub valid: Vec<PuzzleInstance>,
    pub test: Vec<PuzzleInstance>,
}

/// Splits a ranked case list: ranks 1-900 are shuffled into 720 train and
/// 180 valid cases, ranks 901-1000 form the test set. Shorter lists are
/// split in the same 72/18/10 proportions.
pub fn split_game24(ranked: &[PuzzleInstance], seed: u64) -> Game24Split {
    let n = ranked.len().min(1000);
    let n_test = if n == 1000 { 100 } else { n / 10 };
    let head = n - n_test;
    let mut first: Vec<PuzzleInstance> = ranked[..head].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    first.shuffle(&mut rng);
    let n_train = head * 4 / 5;
    let valid = first.split_off(n_train);
    Game24Split { train: first, valid, test: ranked[head..n].to_vec() }
}

/// Removes instances whose inputs and target repeat an earlier one.
pub fn distinct(instances: Vec<PuzzleInstance>) -> Vec<PuzzleInstance> {
    let mut seen = HashSet::new();
    instances
        .into_iter()
        .filter(|i| {
            let mut key = i.inputs.clone();
            key.sort_unstable();
            seen.insert((key, i.target))
        })
        .collect()
}
