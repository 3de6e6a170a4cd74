//! Command line: argument parsing and subcommand dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmgr_core::corpus::Corpus;
use dmgr_core::eval::{compare, compare_csv, evaluate, paired_targets, turn_curve_csv, RunManifest};
use dmgr_core::experiment::{ExperimentConfig, World};
use dmgr_core::feedback::{FeedbackConfig, Grammar};
use dmgr_core::manager::{run_episode, write_traces, DialogManager, SelectionMode};
use dmgr_core::nn::{load_checkpoint, save_checkpoint};
use dmgr_core::training::{Phase, Trainer};

use crate::engine::Engine;
use crate::server::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "dmgr", version, about = "Dialog-based interactive retrieval: corpus, training, evaluation and sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus file.
    GenCorpus(GenCorpusArgs),
    /// Run one training phase.
    Train(TrainArgs),
    /// Per-turn ranking percentile on the test split.
    Eval(EvalArgs),
    /// Batch episodes written as JSON-lines traces.
    Simulate(SimulateArgs),
    /// Align the per-turn means of several evaluation manifests.
    Compare(CompareArgs),
    /// HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON); missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus file; generated from the config when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Grammar file for the simulator and vocabulary.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Fraction of items in the training split.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Sl,
    Mbpi,
    Scst,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Sl => Phase::Sl,
            PhaseArg::Mbpi => Phase::Mbpi,
            PhaseArg::Scst => Phase::Scst,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub phase: PhaseArg,
    #[command(flatten)]
    pub common: Common,
    /// Starting checkpoint (RL phases normally start from SL).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Feedback preset: nl, attr1, attr3, attr10, attr10-deep.
    #[arg(long)]
    pub feedback: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub feedback: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Overrides the evaluation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label in reports; defaults to the checkpoint file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Stochastic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Untrained weights from the config's init seed when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub feedback: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    pub mode: ModeArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Append-only JSON-lines session log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Seed for sessions created without one.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit 2 for bad configuration or input files, 1 for failures while running.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(config_err),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Config plus the world it describes, with an optional feedback preset override.
fn setup(common: &Common, feedback: Option<&str>) -> Result<(ExperimentConfig, World)> {
    let mut config = load_config(common.config.as_deref())?;
    if let Some(name) = feedback {
        config.feedback = FeedbackConfig::preset(name).map_err(config_err)?;
    }
    let grammar = match &common.grammar {
        Some(p) => Grammar::load(p).map_err(config_err)?,
        None => Grammar::default(),
    };
    let world = match &common.corpus {
        Some(p) => {
            let corpus = Corpus::load(p).map_err(config_err)?;
            config.corpus_seed = corpus.seed;
            config.corpus_size = corpus.len();
            World::from_corpus(corpus, &config, grammar)
        }
        None => World::generate(&config, grammar),
    }
    .map_err(config_err)?;
    Ok((config, world))
}

fn load_manager(config: &ExperimentConfig, world: &World, checkpoint: &Path) -> Result<DialogManager> {
    let params = load_checkpoint(checkpoint).map_err(|e| config_err(format!("{}: {e}", checkpoint.display())))?;
    DialogManager::from_params(config.manager.clone(), world.vocab_size(), params).map_err(config_err)
}

fn manifest(config: &ExperimentConfig, common: &Common, config_id: String) -> RunManifest {
    RunManifest {
        config_id,
        corpus: common.corpus.clone(),
        corpus_seed: config.corpus_seed,
        corpus_size: config.corpus_size,
        grammar: common.grammar.clone(),
        feature_seed: config.feature_seed,
        manager: config.manager.clone(),
        feedback: config.feedback.clone(),
        train: None,
        init_checkpoint: None,
        checkpoint: None,
        metrics: None,
        report: None,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let seed = a.seed.unwrap_or(config.corpus_seed);
    let n = a.n.unwrap_or(config.corpus_size);
    let fraction = a.train_fraction.unwrap_or(config.train_fraction);
    let corpus = Corpus::generate(seed, n, fraction).map_err(config_err)?;
    corpus.save(&a.out).map_err(runtime)?;
    eprintln!(
        "wrote {} items ({} train / {} test) to {}",
        corpus.len(),
        corpus.split.train.len(),
        corpus.split.test.len(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let (mut config, world) = setup(&a.common, a.feedback.as_deref())?;
    if let Some(seed) = a.seed {
        config.train.seed = seed;
    }
    if a.epochs.is_some() {
        config.train.epochs = a.epochs;
    }
    let phase = Phase::from(a.phase);
    let train_config = config.phase(phase);
    train_config.validate().map_err(config_err)?;
    let manager = match &a.init {
        Some(p) => load_manager(&config, &world, p)?,
        None => DialogManager::new(config.manager.clone(), world.vocab_size()).map_err(config_err)?,
    };
    create_dir(&a.out)?;
    let mut trainer = Trainer::new(manager, world.env(config.options()), train_config.clone()).map_err(config_err)?;
    let summary = trainer.run(Some(&a.out)).map_err(runtime)?;
    let checkpoint = a.out.join(format!("{}.ckpt", phase.name()));
    save_checkpoint(trainer.manager().params(), &checkpoint).map_err(runtime)?;

    let mut m = manifest(&config, &a.common, config.config_id(phase));
    m.train = Some(train_config);
    m.init_checkpoint = a.init.clone();
    m.checkpoint = Some(checkpoint.clone());
    m.metrics = summary.metrics.clone();
    m.save(a.out.join(format!("manifest-{}.json", phase.name()))).map_err(runtime)?;
    for e in &summary.epochs {
        eprintln!(
            "{} epoch {:>3}: loss {:.5}  mean percentile {:.4}",
            phase.name(),
            e.epoch,
            e.mean_loss,
            e.mean_percentile
        );
    }
    eprintln!("wrote {}", checkpoint.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (mut config, world) = setup(&a.common, a.feedback.as_deref())?;
    if let Some(seed) = a.seed {
        config.eval_seed = seed;
    }
    if let Some(n) = a.episodes {
        config.eval_episodes = n;
    }
    config.validate().map_err(config_err)?;
    let mut manager = load_manager(&config, &world, &a.checkpoint)?;
    let id = a.id.clone().unwrap_or_else(|| {
        a.checkpoint
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let report = evaluate(
        &mut manager,
        &world.test,
        &world.sim,
        &config.options(),
        config.eval_episodes,
        config.eval_seed,
        &id,
    )
    .map_err(runtime)?;
    create_dir(&a.out)?;
    let curve = a.out.join(format!("curve-{id}.csv"));
    fs::write(&curve, turn_curve_csv(&report).map_err(runtime)?).map_err(runtime)?;
    let mut m = manifest(&config, &a.common, id.clone());
    m.checkpoint = Some(a.checkpoint.clone());
    m.report = Some(report.clone());
    m.save(a.out.join(format!("eval-{id}.json"))).map_err(runtime)?;
    for (t, (mean, std)) in report.mean.iter().zip(&report.std).enumerate() {
        println!("{id} turn {}: {mean:.4} (std {std:.4})", t + 1);
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (mut config, world) = setup(&a.common, a.feedback.as_deref())?;
    if let Some(seed) = a.seed {
        config.eval_seed = seed;
    }
    let mut manager = match &a.checkpoint {
        Some(p) => load_manager(&config, &world, p)?,
        None => DialogManager::new(config.manager.clone(), world.vocab_size()).map_err(config_err)?,
    };
    let mode = match a.mode {
        ModeArg::Greedy => SelectionMode::Greedy,
        ModeArg::Stochastic => SelectionMode::Stochastic,
    };
    let options = config.options();
    let traces = paired_targets(&world.test, a.episodes, config.eval_seed)
        .into_iter()
        .map(|(target, seed)| run_episode(&mut manager, &world.test, &world.sim, target, &options, mode, seed))
        .collect::<dmgr_core::Result<Vec<_>>>()
        .map_err(runtime)?;
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            let mut w = std::io::BufWriter::new(file);
            write_traces(&mut w, &traces).and_then(|_| w.flush()).map_err(runtime)?;
        }
        None => write_traces(std::io::stdout().lock(), &traces).map_err(runtime)?,
    }
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    let manifests = a
        .manifests
        .iter()
        .map(|p| RunManifest::load(p).map_err(|e| config_err(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let rows = compare(&manifests).map_err(config_err)?;
    let csv = compare_csv(&rows).map_err(runtime)?;
    match &a.out {
        Some(p) => fs::write(p, csv).map_err(runtime),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let (config, world) = setup(&a.common, None)?;
    let manager = load_manager(&config, &world, &a.checkpoint)?;
    let engine = Engine {
        manager,
        options: config.options(),
        corpus: world.corpus,
        bank: world.test,
        sim: world.sim,
    };
    let corpus_name = match &a.common.corpus {
        Some(p) => p.display().to_string(),
        None => format!("generated seed {} n {}", config.corpus_seed, config.corpus_size),
    };
    let mut state = AppState::new(engine, a.seed, a.checkpoint.display().to_string(), corpus_name);
    if let Some(log) = &a.log {
        state = state.with_log(log).map_err(|e| config_err(format!("{}: {e}", log.display())))?;
    }
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(serve(Arc::new(state), &a.addr)).map_err(runtime)
}
