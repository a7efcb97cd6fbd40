//! Desk-scale reproduction of the data-quality and unlikelihood findings on
//! mini-Countdown with the default neural policy.
//!
//! A base policy is first fitted on exhaustive-search solutions of a
//! disjoint seed set, so that it can sample chain-of-thought data of its
//! own. Every run then starts from it and picks its checkpoint by greedy
//! validation success; the UFT coefficient is chosen once, by mean
//! validation success across seeds, and used for every seed.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pathforge::{run_training, PolicySpec, RunConfig};
use pathforge_core::data::{
    dedup, generate_paths, quality, split_by_label, write_jsonl, InstanceRecord, PathRecord, Reasoner, ReasonerConfig,
    Split,
};
use pathforge_core::evaluation::{evaluate, Method, MethodConfig};
use pathforge_core::objectives::ObjectiveSpec;
use pathforge_core::policy::{load_checkpoint, DecodeConfig, TransformerConfig};
use pathforge_core::puzzle::{enumerate_solutions, generate_countdown, GeneratorConfig, PuzzleInstance};
use pathforge_core::trainer::{OptimizerKind, TrainConfig};

use super::Outcome;

const N_BASE: usize = 1000;
const N_TRAIN: usize = 5000;
const N_VALID: usize = 200;
const N_TEST: usize = 500;
const SEEDS: [u64; 3] = [1, 2, 3];
const ALPHAS: [f64; 2] = [0.05, 0.2];
const COT_SAMPLES: usize = 4;
/// Solutions per seed instance in the base corpus.
const BASE_PATHS: usize = 4;

fn log(start: Instant, msg: &str) {
    eprintln!("[desk {:>7.1}s] {msg}", start.elapsed().as_secs_f64());
}

/// Distinct instances (by input multiset and target), in generation order.
fn instances() -> Vec<PuzzleInstance> {
    let want = N_BASE + N_TRAIN + N_VALID + N_TEST;
    let gen = GeneratorConfig {
        count: want * 2,
        input_min: 1,
        input_max: 20,
        target_min: 10,
        target_max: 30,
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let out: Vec<PuzzleInstance> = generate_countdown(&gen, 7_000)
        .unwrap()
        .into_iter()
        .filter(|i| {
            let mut k = i.inputs.clone();
            k.sort_unstable();
            seen.insert((k, i.target))
        })
        .take(want)
        .collect();
    assert_eq!(out.len(), want, "not enough distinct instances");
    out
}

fn tagged(instances: &[PuzzleInstance], split: Split) -> Vec<(PuzzleInstance, Split)> {
    instances.iter().map(|i| (i.clone(), split)).collect()
}

/// Up to `BASE_PATHS` integer solutions per instance, evenly spread over
/// the enumeration order.
fn exhaustive(instances: &[PuzzleInstance]) -> Vec<PathRecord> {
    let mut out = Vec::new();
    for inst in instances {
        let sols = enumerate_solutions(inst, true);
        let stride = (sols.len() / BASE_PATHS).max(1);
        for p in sols.iter().step_by(stride).take(BASE_PATHS) {
            out.push(PathRecord::labeled(inst, &p.render(), "exhaustive", Split::Train));
        }
    }
    out
}

fn classic(instances: &[PuzzleInstance]) -> Vec<PathRecord> {
    let t = tagged(instances, Split::Train);
    let cfg = ReasonerConfig::default();
    let mut all = generate_paths(Reasoner::Bfs, &t, None, &cfg, true).unwrap();
    all.extend(generate_paths(Reasoner::Dfs, &t, None, &cfg, true).unwrap());
    dedup(all)
}

/// Positives plus an evenly strided subset of negatives of the same size.
fn balanced(records: Vec<PathRecord>) -> (Vec<PathRecord>, usize, usize) {
    let (pos, neg) = split_by_label(records);
    let stride = neg.len().div_ceil(pos.len().max(1)).max(1);
    let neg: Vec<PathRecord> = neg.into_iter().step_by(stride).collect();
    let (np, nn) = (pos.len(), neg.len());
    (pos.into_iter().chain(neg).collect(), np, nn)
}

fn write_instances(path: &Path, instances: &[PuzzleInstance], split: Split) {
    let recs: Vec<InstanceRecord> = instances.iter().map(|i| InstanceRecord::new(i, split)).collect();
    write_jsonl(path, &recs).unwrap();
}

fn train_config(objective: ObjectiveSpec, peak_lr: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        objective,
        peak_lr,
        min_lr: peak_lr * 1e-2,
        warmup_fraction: 0.05,
        batch_size: 32,
        epochs,
        seed,
        checkpoint_every_fraction: 0.1,
        optimizer: OptimizerKind::adam(),
        ..TrainConfig::default()
    }
}

struct Runner<'a> {
    dir: &'a Path,
    valid: PathBuf,
}

impl Runner<'_> {
    /// Trains one run and returns its selected checkpoint and validation score.
    fn run(&self, name: &str, data: &Path, train: TrainConfig, init: Option<&Path>) -> (PathBuf, f64) {
        let cfg = RunConfig {
            train,
            policy: PolicySpec {
                transformer: TransformerConfig::default(),
                init_seed: 11,
                init_checkpoint: init.map(Path::to_path_buf),
                ..PolicySpec::default()
            },
            data: vec![data.to_path_buf()],
            valid: Some(self.valid.clone()),
            select_method: Method::Greedy,
            select_config: MethodConfig::default(),
            out_dir: Some(self.dir.join("runs").join(name)),
            ..RunConfig::default()
        };
        let summary = run_training(&cfg, true, false).unwrap();
        (summary.run_dir.join("selected.ckpt"), summary.selected_score.unwrap())
    }
}

fn greedy(ckpt: &Path, instances: &[PuzzleInstance]) -> f64 {
    let ck = load_checkpoint(ckpt).unwrap();
    let (entry, _) = evaluate(ck.policy.as_policy(), instances, Method::Greedy, &MethodConfig::default(), None).unwrap();
    entry.success_rate
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let all = instances();
    let (base_set, rest) = all.split_at(N_BASE);
    let (train_set, rest) = rest.split_at(N_TRAIN);
    let (valid_set, test_set) = rest.split_at(N_VALID);
    let runner = Runner { dir, valid: dir.join("valid.jsonl") };
    write_instances(&runner.valid, valid_set, Split::Valid);

    // Base policy.
    let base_pos = exhaustive(base_set);
    let base_data = dir.join("base.jsonl");
    write_jsonl(&base_data, &base_pos).unwrap();
    log(start, &format!("base data: {} positive paths", base_pos.len()));
    let (base, base_valid) = runner.run("base", &base_data, train_config(ObjectiveSpec::nll(), 2e-3, 3, 0), None);
    log(start, &format!("base policy: valid greedy {}", pct(base_valid)));

    // Classic data on the training instances.
    let classic_recs = classic(train_set);
    let q_classic = quality(&classic_recs, train_set).unwrap();
    let (classic_recs, n_pos, n_neg) = balanced(classic_recs);
    let classic_data = dir.join("classic.jsonl");
    write_jsonl(&classic_data, &classic_recs).unwrap();
    log(start, &format!("classic data: quality {}, {n_pos} positive / {n_neg} negative paths", pct(q_classic)));

    // Chain-of-thought data sampled from the base policy.
    let base_policy = load_checkpoint(&base).unwrap().policy;
    let cot_cfg = ReasonerConfig { decode: DecodeConfig::sampling(COT_SAMPLES, 99), ..ReasonerConfig::default() };
    let cot_recs =
        dedup(generate_paths(Reasoner::Cot, &tagged(train_set, Split::Train), Some(base_policy.as_policy()), &cot_cfg, true).unwrap());
    let q_cot = quality(&cot_recs, train_set).unwrap();
    let (cot_pos, _) = split_by_label(cot_recs);
    let cot_data = dir.join("cot.jsonl");
    write_jsonl(&cot_data, &cot_pos).unwrap();
    log(start, &format!("cot data: quality {}, {} positive paths", pct(q_cot), cot_pos.len()));

    let ft = |objective: ObjectiveSpec, seed: u64| train_config(objective, 1e-3, 1, seed);
    let mut sft = Vec::new();
    let mut sft_cot = Vec::new();
    let mut uft: Vec<Vec<(PathBuf, f64)>> = vec![Vec::new(); ALPHAS.len()];
    for seed in SEEDS {
        let (c, _) = runner.run(&format!("sft_classic_{seed}"), &classic_data, ft(ObjectiveSpec::nll(), seed), Some(&base));
        sft.push(greedy(&c, test_set));
        // Without a single correct sample there is nothing to fine-tune on
        // and the CoT model is the base policy itself.
        let c = if cot_pos.is_empty() {
            base.clone()
        } else {
            runner.run(&format!("sft_cot_{seed}"), &cot_data, ft(ObjectiveSpec::nll(), seed), Some(&base)).0
        };
        sft_cot.push(greedy(&c, test_set));
        for (k, &alpha) in ALPHAS.iter().enumerate() {
            let run = runner.run(&format!("uft_{alpha}_{seed}"), &classic_data, ft(ObjectiveSpec::uft(alpha), seed), Some(&base));
            uft[k].push(run);
        }
        log(start, &format!("seed {seed}: sft classic {}, sft cot {}", pct(sft[sft.len() - 1]), pct(sft_cot[sft_cot.len() - 1])));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let valid_means: Vec<f64> = uft.iter().map(|runs| mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>())).collect();
    let best = (0..ALPHAS.len()).fold(0, |b, k| if valid_means[k] > valid_means[b] { k } else { b });
    let uft_test: Vec<f64> = uft[best].iter().map(|(c, _)| greedy(c, test_set)).collect();

    let gap = q_classic - q_cot;
    let quality_ok = gap < 0.20 || mean(&sft) > mean(&sft_cot);
    let mean_ok = mean(&uft_test) >= mean(&sft) - 0.005;
    let wins = uft_test.iter().zip(&sft).filter(|(u, s)| u > s).count();
    let secs = start.elapsed();
    let pass = quality_ok && mean_ok && wins >= 2 && secs.as_secs() < 7200;
    let list = |v: &[f64]| v.iter().map(|x| pct(*x)).collect::<Vec<_>>().join("/");
    Outcome::new(
        pass,
        format!(
            "quality classic {} vs cot {}; test greedy % sft-classic {} (mean {}), sft-cot {} (mean {}); \
             uft α={} (valid-selected) {} (mean {}), wins over sft {wins}/3; base valid {}",
            pct(q_classic),
            pct(q_cot),
            list(&sft),
            pct(mean(&sft)),
            list(&sft_cot),
            pct(mean(&sft_cot)),
            ALPHAS[best],
            list(&uft_test),
            pct(mean(&uft_test)),
            pct(base_valid),
        ),
    )
}
