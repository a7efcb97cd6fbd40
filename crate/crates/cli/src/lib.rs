//! `pathforge` command line: instance generation, path collection, dataset
//! utilities, fine-tuning, evaluation and reporting.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
//! Subcommands leave existing outputs alone unless `--force` is given.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pathforge_core::data::{
    dedup, generate_paths, load_instances, load_pairs, load_paths, make_pairs, quality, read_jsonl, split_by_label,
    write_jsonl, DataError, InstanceRecord, PathRecord, Reasoner, ReasonerConfig, Split,
};
use pathforge_core::evaluation::{evaluate, report, summarize, EvalError, InstanceResult, Method, MethodConfig};
use pathforge_core::policy::{load_checkpoint, PolicyError};
use pathforge_core::puzzle::{distinct, generate_countdown, generate_game24, load_game24_csv, split_game24};
use pathforge_core::puzzle::{GeneratorConfig, PuzzleInstance, Task};
use pathforge_core::search::{Evaluator, EvaluatorMode};

pub use config::{expand_grid, run_training, PolicyKind, PolicySpec, RunConfig, RunSummary};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub(crate) fn data(e: impl fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub(crate) fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Search(_) | DataError::Policy(PolicyError::ContextOverflow { .. }) => CliError::runtime(e),
            _ => CliError::data(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidMethodConfig(_) => CliError::Usage(e.to_string()),
            EvalError::EmptyInstanceSet | EvalError::InconsistentResults(_) => CliError::data(e),
            _ => CliError::runtime(e),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pathforge", version, about = "Reasoning-path generation, fine-tuning and evaluation for arithmetic puzzles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate solvable puzzle instances.
    GenInstances(GenInstancesArgs),
    /// Run a reasoner over instances and write labeled paths.
    GenData(GenDataArgs),
    /// Merge path files and drop exact duplicates.
    Dedup(DedupArgs),
    /// Build preference pairs from a labeled path file.
    Pair(PairArgs),
    /// Summarize a labeled path file.
    Stats(StatsArgs),
    /// Fine-tune a policy from a run configuration.
    Train(TrainArgs),
    /// Evaluate a checkpoint with one inference method.
    Eval(EvalArgs),
    /// Render a report from evaluation results.
    Report(ReportArgs),
    /// Expand a grid configuration into run configurations.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for all randomness.
    #[arg(long, env = "PATHFORGE_SEED")]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Args, Debug)]
pub struct GenInstancesArgs {
    #[arg(long, default_value = "countdown")]
    pub task: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub input_min: Option<i64>,
    #[arg(long)]
    pub input_max: Option<i64>,
    #[arg(long)]
    pub target_min: Option<i64>,
    #[arg(long)]
    pub target_max: Option<i64>,
    /// Instance files whose instances must not be repeated.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    /// Ranked Game-of-24 case list; `--split` picks its part.
    #[arg(long)]
    pub game24_csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub instances: PathBuf,
    /// bfs, dfs, cot, tot or rap.
    #[arg(long)]
    pub reasoner: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Policy for cot, tot and rap.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Reasoner settings (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub evaluator: Option<String>,
    /// Accept test instances (collecting paths on held-out data).
    #[arg(long)]
    pub allow_test: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Rejected paths sampled per successful path.
    #[arg(long, default_value_t = 1)]
    pub e: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Instances to measure quality against; defaults to those in the data.
    #[arg(long)]
    pub instances: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Continue from the latest checkpoint in the run directory.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    /// greedy, pass_at_1, beam or mcts.
    #[arg(long)]
    pub method: String,
    /// Per-instance results (JSON lines).
    #[arg(long)]
    pub results: PathBuf,
    /// Method name written to the results; defaults to the method id.
    #[arg(long)]
    pub label: Option<String>,
    /// Only evaluate instances of this split.
    #[arg(long)]
    pub split: Option<String>,
    /// Method settings (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub proposals: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub c_explore: Option<f64>,
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long)]
    pub propose_temperature: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// Report entries (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Text table; defaults to `--out` with a `.txt` extension.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Leave out wall-clock times so reports compare byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// `{"base": <run config>, "grid": {"train.peak_lr": [..], ..}}`
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub force: bool,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pathforge: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenInstances(a) => with_workers(a.common.workers, || gen_instances(&a)),
        Command::GenData(a) => with_workers(a.common.workers, || gen_data(&a)),
        Command::Dedup(a) => cmd_dedup(&a),
        Command::Pair(a) => cmd_pair(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Train(a) => with_workers(a.common.workers, || cmd_train(&a)),
        Command::Eval(a) => with_workers(a.common.workers, || cmd_eval(&a)),
        Command::Report(a) => cmd_report(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn with_workers(workers: Option<usize>, f: impl FnOnce() -> Result<(), CliError> + Send) -> Result<(), CliError> {
    match workers {
        None => f(),
        Some(0) => Err(CliError::Usage("--workers must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(CliError::runtime)?
            .install(f),
    }
}

/// True when `out` exists and must be left alone.
pub(crate) fn keep_existing(out: &Path, force: bool) -> bool {
    if out.exists() && !force {
        eprintln!("pathforge: {} exists; leaving it unchanged (pass --force to overwrite)", out.display());
        return true;
    }
    false
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    match s {
        "train" => Ok(Split::Train),
        "valid" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        _ => Err(CliError::Usage(format!("unknown split `{s}` (train, valid, test)"))),
    }
}

fn parse_evaluator(s: &str) -> Result<Evaluator, CliError> {
    match s {
        "oracle" => Ok(Evaluator::oracle()),
        "constant" => Ok(Evaluator { mode: EvaluatorMode::Constant, integer_only: false }),
        _ => Err(CliError::Usage(format!("unknown evaluator `{s}` (oracle, constant)"))),
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::runtime)?;
    }
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn gen_instances(a: &GenInstancesArgs) -> Result<(), CliError> {
    let task = match a.task.as_str() {
        "countdown" => Task::Countdown,
        "game24" => Task::Game24,
        t => return Err(CliError::Usage(format!("unknown task `{t}` (countdown, game24)"))),
    };
    let split = parse_split(&a.split)?;
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let d = GeneratorConfig::default();
    let gen = GeneratorConfig {
        count: a.count,
        input_min: a.input_min.unwrap_or(d.input_min),
        input_max: a.input_max.unwrap_or(d.input_max),
        target_min: a.target_min.unwrap_or(d.target_min),
        target_max: a.target_max.unwrap_or(d.target_max),
        ..d
    };
    if keep_existing(&a.out, a.common.force) {
        return Ok(());
    }
    let mut excluded = std::collections::HashSet::new();
    for p in &a.exclude {
        for (inst, _) in load_instances(p)? {
            excluded.insert(key_of(&inst));
        }
    }
    let seed = a.common.seed();
    let chosen: Vec<PuzzleInstance> = match (task, &a.game24_csv) {
        (Task::Game24, Some(csv)) => {
            let ranked = load_game24_csv(csv).map_err(CliError::data)?;
            let parts = split_game24(&ranked, seed);
            let part = match split {
                Split::Train => parts.train,
                Split::Valid => parts.valid,
                Split::Test => parts.test,
            };
            part.into_iter().filter(|i| !excluded.contains(&key_of(i))).take(a.count).collect()
        }
        (Task::Game24, None) => generate_game24(usize::MAX, seed)
            .into_iter()
            .filter(|i| !excluded.contains(&key_of(i)))
            .take(a.count)
            .collect(),
        (Task::Countdown, _) => {
            let mut want = a.count;
            loop {
                let drawn = generate_countdown(&GeneratorConfig { count: want, ..gen.clone() }, seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                let kept: Vec<PuzzleInstance> =
                    distinct(drawn).into_iter().filter(|i| !excluded.contains(&key_of(i))).collect();
                if kept.len() >= a.count || want >= 64 * a.count {
                    break kept.into_iter().take(a.count).collect();
                }
                want *= 2;
            }
        }
    };
    if chosen.len() < a.count {
        return Err(CliError::Data(format!("only {} distinct instances available", chosen.len())));
    }
    let records: Vec<InstanceRecord> = chosen.iter().map(|i| InstanceRecord::new(i, split)).collect();
    write_jsonl(&a.out, &records)?;
    println!("{}", json!({ "out": a.out, "count": records.len() }));
    Ok(())
}

fn key_of(i: &PuzzleInstance) -> (Vec<i64>, i64) {
    let mut k = i.inputs.clone();
    k.sort_unstable();
    (k, i.target)
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let reasoner = Reasoner::parse(&a.reasoner)
        .ok_or_else(|| CliError::Usage(format!("unknown reasoner `{}` (bfs, dfs, cot, tot, rap)", a.reasoner)))?;
    if reasoner.needs_policy() && a.checkpoint.is_none() {
        return Err(CliError::Usage(format!("reasoner `{}` needs --checkpoint", reasoner.id())));
    }
    let mut cfg: ReasonerConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ReasonerConfig::default(),
    };
    if let Some(n) = a.samples {
        cfg.decode.n_samples = n;
    }
    if let Some(t) = a.temperature {
        cfg.decode.temperature = t;
    }
    if let Some(p) = a.top_p {
        cfg.decode.top_p = p;
    }
    if let Some(b) = a.beam_size {
        cfg.beam.beam_size = b;
    }
    if let Some(i) = a.iterations {
        cfg.mcts.iterations = i;
    }
    if let Some(e) = &a.evaluator {
        cfg.evaluator = parse_evaluator(e)?;
    }
    let seed = a.common.seed();
    cfg.decode.seed = seed;
    cfg.beam.seed = seed;
    cfg.mcts.seed = seed;
    cfg.decode.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.beam.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.mcts.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.bfs.validate().map_err(CliError::Usage)?;
    cfg.dfs.validate().map_err(CliError::Usage)?;
    if keep_existing(&a.out, a.common.force) {
        return Ok(());
    }
    let instances = load_instances(&a.instances)?;
    let ckpt = match &a.checkpoint {
        Some(p) => Some(load_checkpoint(p).map_err(CliError::data)?),
        None => None,
    };
    let policy = ckpt.as_ref().map(|c| c.policy.as_policy());
    let records = generate_paths(reasoner, &instances, policy, &cfg, !a.allow_test)?;
    write_jsonl(&a.out, &records)?;
    let pos = records.iter().filter(|r| r.success()).count();
    println!("{}", json!({ "out": a.out, "records": records.len(), "positive": pos, "negative": records.len() - pos }));
    Ok(())
}

fn cmd_dedup(a: &DedupArgs) -> Result<(), CliError> {
    if keep_existing(&a.out, a.common.force) {
        return Ok(());
    }
    let mut all = Vec::new();
    for p in &a.input {
        all.extend(load_paths(p)?);
    }
    let before = all.len();
    let kept = dedup(all);
    write_jsonl(&a.out, &kept)?;
    println!("{}", json!({ "out": a.out, "input": before, "kept": kept.len() }));
    Ok(())
}

fn cmd_pair(a: &PairArgs) -> Result<(), CliError> {
    if keep_existing(&a.out, a.common.force) {
        return Ok(());
    }
    let records = load_paths(&a.input)?;
    let (pos, neg) = split_by_label(records);
    let pairs = make_pairs(&pos, &neg, a.e, a.common.seed());
    write_jsonl(&a.out, &pairs)?;
    println!("{}", json!({ "out": a.out, "pairs": pairs.len() }));
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> Result<(), CliError> {
    let records = load_paths(&a.input)?;
    let instances: Vec<PuzzleInstance> = match &a.instances {
        Some(p) => load_instances(p)?.into_iter().map(|(i, _)| i).collect(),
        None => {
            let mut v = records.iter().map(PathRecord::instance).collect::<Result<Vec<_>, _>>().map_err(CliError::data)?;
            v.sort();
            v.dedup();
            v
        }
    };
    let mut by_reasoner: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = by_reasoner.entry(&r.reasoner).or_default();
        e.0 += 1;
        e.1 += usize::from(r.success());
    }
    let pos = records.iter().filter(|r| r.success()).count();
    let neg = records.len() - pos;
    let q = if instances.is_empty() { None } else { Some(quality(&records, &instances)?) };
    let summary = json!({
        "records": records.len(),
        "positive": pos,
        "negative": neg,
        "neg_per_pos": if pos > 0 { Some(neg as f64 / pos as f64) } else { None },
        "instances": instances.len(),
        "quality": q,
        "by_reasoner": by_reasoner.iter().map(|(k, (n, s))| (k.to_string(), json!({"records": n, "positive": s}))).collect::<BTreeMap<_, _>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.common.seed {
        cfg.train.seed = s;
    }
    if let Some(k) = &a.objective {
        cfg.train.objective.kind = serde_json::from_value(json!(k))
            .map_err(|_| CliError::Usage(format!("unknown objective `{k}`")))?;
    }
    if let Some(x) = a.alpha {
        cfg.train.objective.alpha = x;
    }
    if let Some(x) = a.lr {
        cfg.train.peak_lr = x;
    }
    if let Some(x) = a.epochs {
        cfg.train.epochs = x;
    }
    if let Some(x) = a.batch_size {
        cfg.train.batch_size = x;
    }
    if let Some(x) = a.max_steps {
        cfg.train.max_steps = Some(x);
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    let summary = run_training(&cfg, a.common.force, a.resume)?;
    println!("{}", serde_json::to_string(&summary).expect("json"));
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let method = Method::parse(&a.method)
        .ok_or_else(|| CliError::Usage(format!("unknown method `{}` (greedy, pass_at_1, beam, mcts)", a.method)))?;
    let mut cfg: MethodConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => MethodConfig::default(),
    };
    if let Some(s) = a.common.seed {
        cfg.decode.seed = s;
        cfg.beam.seed = s;
        cfg.mcts.seed = s;
    }
    if let Some(x) = a.samples {
        cfg.decode.n_samples = x;
    }
    if let Some(x) = a.temperature {
        cfg.decode.temperature = x;
    }
    if let Some(x) = a.top_p {
        cfg.decode.top_p = x;
    }
    if let Some(x) = a.max_tokens {
        cfg.decode.max_tokens = x;
    }
    if let Some(x) = a.beam_size {
        cfg.beam.beam_size = x;
    }
    if let Some(x) = a.proposals {
        cfg.beam.proposals = x;
        cfg.mcts.proposals = x;
    }
    if let Some(x) = a.iterations {
        cfg.mcts.iterations = x;
    }
    if let Some(x) = a.c_explore {
        cfg.mcts.c_explore = x;
    }
    if let Some(e) = &a.evaluator {
        cfg.evaluator = parse_evaluator(e)?;
    }
    if let Some(x) = a.propose_temperature {
        cfg.propose_temperature = x;
    }
    cfg.validate(method)?;
    let split = a.split.as_deref().map(parse_split).transpose()?;
    if keep_existing(&a.results, a.common.force) {
        return Ok(());
    }
    let instances: Vec<PuzzleInstance> = load_instances(&a.instances)?
        .into_iter()
        .filter(|(_, s)| split.is_none_or(|want| *s == want))
        .map(|(i, _)| i)
        .collect();
    let ckpt = load_checkpoint(&a.checkpoint).map_err(CliError::data)?;
    let (entry, rows) = evaluate(ckpt.policy.as_policy(), &instances, method, &cfg, a.label.as_deref())?;
    write_jsonl(&a.results, &rows)?;
    let (table, _) = report(std::slice::from_ref(&entry), true);
    print!("{table}");
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let table_path = a.table.clone().unwrap_or_else(|| a.out.with_extension("txt"));
    if keep_existing(&a.out, a.force) {
        return Ok(());
    }
    let mut rows: Vec<InstanceResult> = Vec::new();
    for p in &a.results {
        rows.extend(read_jsonl::<InstanceResult>(p)?);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no evaluation results".into()));
    }
    let entries = summarize(&rows)?;
    let (table, jsonl) = report(&entries, !a.no_timing);
    write_text(&a.out, &jsonl)?;
    write_text(&table_path, &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let grid: serde_json::Value = read_json(&a.config)?;
    let listing = a.out_dir.join("sweep.jsonl");
    if keep_existing(&listing, a.force) {
        return Ok(());
    }
    let base_dir = a.config.parent().unwrap_or(Path::new("."));
    let runs = expand_grid(&grid, base_dir, &a.out_dir)?;
    let mut lines = String::new();
    for (dir, cfg, overrides) in &runs {
        write_text(&dir.join("config.json"), &serde_json::to_string_pretty(cfg).expect("json"))?;
        lines.push_str(&json!({ "run": dir, "overrides": overrides }).to_string());
        lines.push('\n');
    }
    write_text(&listing, &lines)?;
    println!("{}", json!({ "runs": runs.len(), "listing": listing }));
    Ok(())
}

/// Reads a paired dataset, for paired objectives.
pub(crate) fn read_pairs(path: &Path) -> Result<Vec<pathforge_core::data::PairedRecord>, CliError> {
    Ok(load_pairs(path)?)
}
