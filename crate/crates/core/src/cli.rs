//! Command-line front end.
//!
//! Every option can also come from a flat `key = value` file passed with
//! `--config`; keys are the long flag names (`learning-rate`, `B`, ...) and
//! flags given on the command line win. Exit codes: 0 owned / success,
//! 1 not owned, 2 error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Parser, Subcommand};

use crate::classifier::{self, Model, TrainConfig, TrainOutcome};
use crate::corpus::{self, Corpus, CorpusFormat, NormalizationConfig};
use crate::demo::{self, DemoConfig};
use crate::evalsuite::{self, EvalSettings, ExperimentData, Suite};
use crate::seed;
use crate::tfidf::{Order, TfIdfIndex};
use crate::trigger::{self, GenerationConfig, TriggerSet};
use crate::watermark::{self, Decision, VerifyOptions};

pub const EXIT_OWNED: i32 = 0;
pub const EXIT_NOT_OWNED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

type CliResult<T> = anyhow::Result<T>;

#[derive(Parser, Debug)]
#[command(
    name = "textmark",
    version,
    about = "Watermark text classifiers with swapped-word trigger sets and verify ownership"
)]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for every random choice (default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for written artifacts (default: current directory)
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Only print warnings and errors on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic two-class corpus as train.jsonl and test.jsonl
    MakeDemoCorpus(DemoArgs),
    /// Build a trigger set (trigger.json) and the reduced training corpus
    Generate(GenerateArgs),
    /// Train a watermarked model on the reduced corpus plus the trigger set
    Embed(EmbedArgs),
    /// Train an unwatermarked baseline model
    Train(TrainArgs),
    /// Query a model with the trigger set and decide ownership
    Verify(VerifyArgs),
    /// Zero the smallest-magnitude weights of a model
    Prune(PruneArgs),
    /// Run evaluation suites and write reports plus a manifest
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Number of documents before the split
    #[arg(long)]
    documents: Option<usize>,
    /// Share of each class held out as test data
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Labeled corpus (JSONL or CSV)
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// jsonl or csv; guessed from the extension when absent
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Document pairs per class pairing
    #[arg(long = "B", value_name = "B")]
    pairs: Option<usize>,
    /// Words exchanged per pair
    #[arg(long = "K", value_name = "K")]
    swap_words: Option<usize>,
    /// ASC (lowest-scored words) or DES (highest-scored words)
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args, Debug)]
struct TrainOpts {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[command(flatten)]
    gen: GenArgs,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Reduced training corpus written by `generate`
    #[arg(long, value_name = "PATH")]
    reduced: Option<PathBuf>,
    /// Trigger set written by `generate`
    #[arg(long, value_name = "PATH")]
    trigger: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    train: TrainOpts,
    /// Model file (default: <output-dir>/watermarked_model.json)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-epoch metrics (default: <output-dir>/watermarked_metrics.csv)
    #[arg(long, value_name = "PATH")]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[command(flatten)]
    train: TrainOpts,
    /// Model file (default: <output-dir>/baseline_model.json)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-epoch metrics (default: <output-dir>/baseline_metrics.csv)
    #[arg(long, value_name = "PATH")]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    trigger: Option<PathBuf>,
    /// Ownership threshold on trigger accuracy, in (0, 1]
    #[arg(long)]
    theta: Option<f64>,
    /// Leave failed queries out of the accuracy instead of aborting
    #[arg(long)]
    skip_errors: bool,
    /// Also write the JSON report here
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PruneArgs {
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Share of weights to zero, in [0, 1]
    #[arg(long)]
    fraction: Option<f64>,
    /// Output model (default: <output-dir>/pruned_model.json)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: CorpusArgs,
    /// Held-out corpus; without it the training corpus is split
    #[arg(long, value_name = "PATH")]
    test: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Comma-separated suite names or `all`
    #[arg(long)]
    suite: Option<String>,
    #[command(flatten)]
    gen: GenArgs,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated, strictly increasing
    #[arg(long)]
    prune_fractions: Option<String>,
    /// Comma-separated K values for the sweep
    #[arg(long)]
    k_values: Option<String>,
    /// Unmarked models trained for the integrity suite
    #[arg(long)]
    unmarked: Option<usize>,
    /// Random queries sent by the security probe
    #[arg(long)]
    probes: Option<usize>,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output-dir",
    "quiet",
    "documents",
    "test-fraction",
    "corpus",
    "format",
    "B",
    "K",
    "strategy",
    "epochs",
    "learning-rate",
    "batch-size",
    "embed-dim",
    "hidden-dim",
    "validation-fraction",
    "reduced",
    "trigger",
    "out",
    "metrics",
    "model",
    "theta",
    "skip-errors",
    "report",
    "fraction",
    "test",
    "suite",
    "prune-fractions",
    "k-values",
    "unmarked",
    "probes",
];

/// Parsed `key = value` file. Blank lines and lines starting with `#` are
/// skipped; underscores in keys are read as dashes.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", n + 1))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key `{key}`", n + 1);
            }
            let value = value.trim().trim_matches('"').to_string();
            if values.insert(key.clone(), value).is_some() {
                bail!("config line {}: `{key}` given twice", n + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn get<T>(&self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key `{key}`: {e}")))
            .transpose()
    }
}

struct Context {
    file: ConfigFile,
    seed: u64,
    output_dir: PathBuf,
    quiet: bool,
}

impl Context {
    fn pick<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key),
        }
    }

    fn require<T>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| anyhow!("missing --{key} (flag or config key)"))
    }

    fn note(&self, msg: impl Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn output(&self, explicit: Option<PathBuf>, key: &str, default_name: &str) -> CliResult<PathBuf> {
        let path = match self.pick(explicit, key)? {
            Some(p) => p,
            None => self.output_dir.join(default_name),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }

    fn corpus(&self, args: &CorpusArgs) -> CliResult<Corpus> {
        let path: PathBuf = self.require(args.corpus.clone(), "corpus")?;
        self.load_corpus(&path, args.format.clone())
    }

    fn load_corpus(&self, path: &Path, format: Option<String>) -> CliResult<Corpus> {
        let format = match self.pick(format, "format")? {
            Some(f) => f.parse::<CorpusFormat>()?,
            None => CorpusFormat::from_path(path),
        };
        let (corpus, report) = corpus::load_corpus(path, format, &NormalizationConfig::default())
            .with_context(|| format!("loading corpus {}", path.display()))?;
        if report.dropped_empty > 0 {
            eprintln!(
                "warning: {} document(s) in {} were empty after normalization and were dropped",
                report.dropped_empty,
                path.display()
            );
        }
        self.note(format!(
            "loaded {} documents from {} (classes: {})",
            report.loaded,
            path.display(),
            corpus.classes.join(", ")
        ));
        Ok(corpus)
    }

    fn generation(&self, args: &GenArgs) -> CliResult<GenerationConfig> {
        let d = GenerationConfig::default();
        let strategy = match self.pick(args.strategy.clone(), "strategy")? {
            Some(s) => s.parse::<Order>()?,
            None => d.strategy,
        };
        let cfg = GenerationConfig {
            pairs: self.pick(args.pairs, "B")?.unwrap_or(d.pairs),
            swap_words: self.pick(args.swap_words, "K")?.unwrap_or(d.swap_words),
            strategy,
            seed: self.seed,
            theta_hint: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn training(&self, args: &TrainOpts) -> CliResult<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.pick(args.epochs, "epochs")?.unwrap_or(d.epochs),
            learning_rate: self.pick(args.learning_rate, "learning-rate")?.unwrap_or(d.learning_rate),
            batch_size: self.pick(args.batch_size, "batch-size")?.unwrap_or(d.batch_size),
            embed_dim: self.pick(args.embed_dim, "embed-dim")?.unwrap_or(d.embed_dim),
            hidden_dim: self.pick(args.hidden_dim, "hidden-dim")?.unwrap_or(d.hidden_dim),
            seed: self.seed,
            validation_fraction: self
                .pick(args.validation_fraction, "validation-fraction")?
                .unwrap_or(d.validation_fraction),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn theta(&self, flag: Option<f64>) -> CliResult<f64> {
        let theta = self.pick(flag, "theta")?.unwrap_or(watermark::DEFAULT_THETA);
        if !(theta > 0.0 && theta <= 1.0) {
            bail!("theta must lie in (0, 1], got {theta}");
        }
        Ok(theta)
    }
}

fn parse_list<T>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| anyhow!("{what}: `{x}`: {e}")))
        .collect()
}

fn write_training(ctx: &Context, outcome: &TrainOutcome, model_path: &Path, metrics_path: &Path) -> CliResult<()> {
    outcome.model.save(model_path)?;
    fs::write(metrics_path, classifier::history_csv(&outcome.history))
        .with_context(|| format!("writing {}", metrics_path.display()))?;
    if let Some(last) = outcome.history.last() {
        ctx.note(format!(
            "trained {} epochs: training loss {:.4}, validation accuracy {:.4}",
            last.epoch, last.training_loss, last.accuracy
        ));
    }
    ctx.note(format!("wrote {} and {}", model_path.display(), metrics_path.display()));
    Ok(())
}

fn make_demo_corpus(ctx: &Context, args: DemoArgs) -> CliResult<i32> {
    let d = DemoConfig::default();
    let cfg = DemoConfig {
        documents: ctx.pick(args.documents, "documents")?.unwrap_or(d.documents),
        seed: ctx.seed,
        ..d
    };
    let fraction = ctx.pick(args.test_fraction, "test-fraction")?.unwrap_or(0.2);
    let data = demo::experiment_data(&cfg, fraction)?;
    fs::create_dir_all(&ctx.output_dir)
        .with_context(|| format!("creating {}", ctx.output_dir.display()))?;
    let train = ctx.output_dir.join("train.jsonl");
    let test = ctx.output_dir.join("test.jsonl");
    data.train.write_jsonl(&train)?;
    data.test.write_jsonl(&test)?;
    ctx.note(format!(
        "wrote {} training documents to {} and {} test documents to {}",
        data.train.len(),
        train.display(),
        data.test.len(),
        test.display()
    ));
    Ok(0)
}

fn generate(ctx: &Context, args: GenerateArgs) -> CliResult<i32> {
    let corpus = ctx.corpus(&args.input)?;
    let cfg = ctx.generation(&args.gen)?;
    let index = TfIdfIndex::build(&corpus)?;
    let (trigger, reduced) = trigger::generate(&corpus, &index, &cfg)?;
    let trigger_path = ctx.output(None, "trigger", "trigger.json")?;
    let reduced_path = ctx.output(None, "reduced", "reduced_train.jsonl")?;
    trigger.save(&trigger_path)?;
    reduced.write_jsonl(&reduced_path)?;
    ctx.note(format!(
        "wrote {} trigger records to {} and {} remaining documents to {}",
        trigger.len(),
        trigger_path.display(),
        reduced.len(),
        reduced_path.display()
    ));
    println!("{}", trigger.digest()?);
    Ok(0)
}

fn embed(ctx: &Context, args: EmbedArgs) -> CliResult<i32> {
    let trigger_path: PathBuf = ctx.require(args.trigger, "trigger")?;
    let trigger = TriggerSet::load(&trigger_path)
        .with_context(|| format!("loading trigger set {}", trigger_path.display()))?;
    let reduced_path: PathBuf = ctx.require(args.reduced, "reduced")?;
    let reduced = ctx.load_corpus(&reduced_path, args.format)?;
    let cfg = ctx.training(&args.train)?;
    let embedded = watermark::embed(&reduced, &trigger, &cfg)?;
    for w in &embedded.warnings {
        eprintln!("warning: {w}");
    }
    let model_path = ctx.output(args.out, "out", "watermarked_model.json")?;
    let metrics_path = ctx.output(args.metrics, "metrics", "watermarked_metrics.csv")?;
    write_training(ctx, &embedded.outcome, &model_path, &metrics_path)?;
    Ok(0)
}

fn train(ctx: &Context, args: TrainArgs) -> CliResult<i32> {
    let corpus = ctx.corpus(&args.input)?;
    let cfg = ctx.training(&args.train)?;
    let outcome = classifier::train(&corpus, &cfg)?;
    let model_path = ctx.output(args.out, "out", "baseline_model.json")?;
    let metrics_path = ctx.output(args.metrics, "metrics", "baseline_metrics.csv")?;
    write_training(ctx, &outcome, &model_path, &metrics_path)?;
    Ok(0)
}

fn verify(ctx: &Context, args: VerifyArgs) -> CliResult<i32> {
    let theta = ctx.theta(args.theta)?;
    let model_path: PathBuf = ctx.require(args.model, "model")?;
    let trigger_path: PathBuf = ctx.require(args.trigger, "trigger")?;
    let model =
        Model::load(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let trigger = TriggerSet::load(&trigger_path)
        .with_context(|| format!("loading trigger set {}", trigger_path.display()))?;
    if model.classes != trigger.classes {
        bail!(
            "model classes {:?} do not match trigger set classes {:?}",
            model.classes,
            trigger.classes
        );
    }
    let skip_errors = args.skip_errors || ctx.file.get::<bool>("skip-errors")?.unwrap_or(false);
    let report = watermark::verify_with(&model, &trigger, VerifyOptions { theta, skip_errors })?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = ctx.pick(args.report, "report")? {
        fs::write(&path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{json}");
    let decision = match report.decision {
        Decision::Owned => "OWNED",
        Decision::NotOwned => "NOT_OWNED",
    };
    ctx.note(format!(
        "{decision}: {}/{} trigger records matched (accuracy {:.4}, theta {theta}, chance tail {:.3e})",
        report.matches,
        report.trigger_count - report.errored,
        report.trigger_accuracy,
        report.binomial_tail
    ));
    Ok(match report.decision {
        Decision::Owned => EXIT_OWNED,
        Decision::NotOwned => EXIT_NOT_OWNED,
    })
}

fn prune(ctx: &Context, args: PruneArgs) -> CliResult<i32> {
    let model_path: PathBuf = ctx.require(args.model, "model")?;
    let fraction: f64 = ctx.require(args.fraction, "fraction")?;
    let model =
        Model::load(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let pruned = model.prune(fraction)?;
    let out = ctx.output(args.out, "out", "pruned_model.json")?;
    pruned.save(&out)?;
    ctx.note(format!(
        "{} of {} weights are zero; wrote {}",
        pruned.zero_weight_count(),
        pruned.weight_count(),
        out.display()
    ));
    Ok(0)
}

fn evaluate(ctx: &Context, args: EvaluateArgs) -> CliResult<i32> {
    let suites = Suite::parse_list(&ctx.pick(args.suite, "suite")?.unwrap_or_else(|| "all".into()))?;
    let train = ctx.corpus(&args.input)?;
    let data = match ctx.pick(args.test, "test")? {
        Some(path) => {
            let test: Corpus = ctx.load_corpus(&path, None)?;
            if test.classes != train.classes {
                bail!("test classes {:?} differ from training classes {:?}", test.classes, train.classes);
            }
            ExperimentData { train, test }
        }
        None => {
            let fraction = ctx.pick(args.test_fraction, "test-fraction")?.unwrap_or(0.2);
            let (train, test) = corpus::split(&train, fraction, seed::derive(ctx.seed, "split"))?;
            ExperimentData { train, test }
        }
    };
    let mut settings = EvalSettings::new(ctx.generation(&args.gen)?, ctx.training(&args.train)?);
    settings.theta = ctx.theta(args.theta)?;
    if let Some(s) = ctx.pick::<String>(args.prune_fractions, "prune-fractions")? {
        settings.prune_fractions = parse_list(&s, "prune-fractions")?;
    }
    if let Some(s) = ctx.pick::<String>(args.k_values, "k-values")? {
        settings.k_values = parse_list(&s, "k-values")?;
    }
    if let Some(n) = ctx.pick(args.unmarked, "unmarked")? {
        settings.n_unmarked = n;
    }
    if let Some(n) = ctx.pick(args.probes, "probes")? {
        settings.n_probes = n;
    }
    let manifest = evalsuite::evaluate(&data, &settings, &suites, &ctx.output_dir)?;
    for entry in &manifest.reports {
        match &entry.error {
            Some(e) => eprintln!("{}: failed: {e}", entry.suite),
            None => ctx.note(format!("{}: ok", entry.suite)),
        }
    }
    if manifest.failures() == manifest.reports.len() {
        bail!("every selected suite failed");
    }
    ctx.note(format!("wrote manifest to {}", ctx.output_dir.join("manifest.json").display()));
    Ok(0)
}

fn execute(cli: Cli) -> CliResult<i32> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file.get("seed")?.unwrap_or(0),
    };
    let output_dir = match cli.output_dir {
        Some(d) => d,
        None => file.get("output-dir")?.unwrap_or_else(|| PathBuf::from(".")),
    };
    let quiet = cli.quiet || file.get::<bool>("quiet")?.unwrap_or(false);
    let ctx = Context { file, seed, output_dir, quiet };
    match cli.command {
        Command::MakeDemoCorpus(a) => make_demo_corpus(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Embed(a) => embed(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Verify(a) => verify(&ctx, a),
        Command::Prune(a) => prune(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
    }
}

/// Run with the given arguments (first is the program name) and return the
/// process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
