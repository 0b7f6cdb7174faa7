//! `cws`: train, apply, score and audit the word segmenter.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cws_core::analysis::{inconsistency_scan, oov_inventory, oov_inventory_text};
use cws_core::corpus::{corpus_stats, read_corpus, read_raw_lines, split_dev, ReadMode, Sentence};
use cws_core::evaluation::{bootstrap_significance, evaluate, word_set};
use cws_core::model::segment_all;
use cws_core::training::{
    apply_embeddings, config_from_entries, fit, format_ranked, grid_from_entries, grid_search, load_checkpoint,
    parse_key_values, read_word2vec, save_checkpoint, Checkpoint, EmbeddingMode, KeyValue, Pretrained, TrainError,
};

#[derive(Parser)]
#[command(name = "cws", version, about = "Chinese word segmentation with a bi-LSTM tagger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a segmenter and write its best checkpoint.
    Train(TrainArgs),
    /// Segment raw text, one sentence per line.
    Segment(SegmentArgs),
    /// Score a segmentation against gold.
    Eval(EvalArgs),
    /// Train every point of a hyperparameter grid and rank by dev F1.
    Grid(GridArgs),
    /// Paired bootstrap test: is system A better than system B?
    Significance(SignificanceArgs),
    /// Report annotation inconsistencies in a segmented corpus.
    Inconsistency(InconsistencyArgs),
    /// Sentence, token, character and word-type counts.
    Stats(StatsArgs),
    /// Copy pretrained vectors into a checkpoint's embedding tables.
    ImportEmbeddings(ImportArgs),
    /// List test words unseen in training and how they were segmented.
    Oov(OovArgs),
}

#[derive(Args)]
struct CorpusFlags {
    /// Reject irregular spacing instead of collapsing it.
    #[arg(long)]
    strict: bool,
}

impl CorpusFlags {
    fn mode(&self) -> ReadMode {
        if self.strict {
            ReadMode::Strict
        } else {
            ReadMode::Lenient
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Segmented training corpus.
    #[arg(long)]
    train: PathBuf,
    /// Segmented development corpus; without it a dev set is split off train.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Fraction of train held out as dev when --dev is absent.
    #[arg(long, default_value_t = 0.1)]
    dev_fraction: f64,
    /// Pretrained character vectors (word2vec text format).
    #[arg(long)]
    char_vectors: Option<PathBuf>,
    /// Pretrained character-bigram vectors (word2vec text format).
    #[arg(long)]
    bigram_vectors: Option<PathBuf>,
    /// random, pretrained-fixed or pretrained-finetune.
    #[arg(long)]
    embedding_mode: Option<String>,
    /// Seed for initialisation, shuffling, dropout and the dev split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Gradient workers; 1 is synchronous and deterministic.
    #[arg(long)]
    workers: Option<usize>,
    /// Extra key=value setting, applied after the config file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    corpus: CorpusFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// key=value training config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the best checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the training log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Raw text, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Training corpus; enables OOV rate and recall.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(flatten)]
    corpus: CorpusFlags,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Grid file: key=value lines, comma-separated value lists.
    #[arg(long)]
    grid: PathBuf,
    /// Output file for the ranked table; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred_a: PathBuf,
    #[arg(long)]
    pred_b: PathBuf,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    corpus: CorpusFlags,
}

#[derive(Args)]
struct InconsistencyArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Also write every counted occurrence with its line and token position.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[command(flatten)]
    flags: CorpusFlags,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    flags: CorpusFlags,
}

#[derive(Args)]
struct ImportArgs {
    /// Checkpoint to read.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    char_vectors: Option<PathBuf>,
    #[arg(long)]
    bigram_vectors: Option<PathBuf>,
    /// Where to write the updated checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OovArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Predicted segmentation of the test corpus.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusFlags,
}

enum Failure {
    Usage(String),
    Data(String),
    Training(String),
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Divergence is a training failure; bad inputs are data errors.
impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } | TrainError::Model(_) | TrainError::Numerics(_) => {
                Failure::Training(e.to_string())
            }
            TrainError::Config(_) | TrainError::MissingPretrained(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path, flags: &CorpusFlags) -> Result<Vec<Sentence>> {
    read_corpus(path, flags.mode()).map_err(Failure::data)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn set_entries(set: &[String]) -> Result<Vec<KeyValue>> {
    set.iter()
        .enumerate()
        .map(|(i, s)| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            Ok(KeyValue {
                key: k.trim().to_owned(),
                value: v.trim().to_owned(),
                line: i + 1,
            })
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Train and dev corpora plus pretrained vectors.
struct Data {
    train: Vec<Sentence>,
    dev: Vec<Sentence>,
    pretrained: Option<Pretrained>,
}

fn load_data(a: &DataArgs) -> Result<Data> {
    let train = read(&a.train, &a.corpus)?;
    let (train, dev) = match &a.dev {
        Some(p) => (train, read(p, &a.corpus)?),
        None => {
            let s = split_dev(&train, a.dev_fraction, a.seed).map_err(|e| Failure::Usage(e.to_string()))?;
            (s.train, s.dev)
        }
    };
    let load = |p: &Option<PathBuf>| p.as_ref().map(read_word2vec).transpose();
    let unigrams = load(&a.char_vectors)?;
    let bigrams = load(&a.bigram_vectors)?;
    let pretrained = (unigrams.is_some() || bigrams.is_some()).then_some(Pretrained { unigrams, bigrams });
    Ok(Data { train, dev, pretrained })
}

/// Command-line overrides shared by `train` and `grid`, as config entries.
fn overrides(a: &DataArgs) -> Result<Vec<KeyValue>> {
    let mut entries = set_entries(&a.set)?;
    let mut push = |key: &str, value: String| {
        entries.push(KeyValue {
            key: key.into(),
            value,
            line: 0,
        })
    };
    push("seed", a.seed.to_string());
    if let Some(w) = a.workers {
        push("workers", w.to_string());
    }
    if let Some(m) = &a.embedding_mode {
        push("embedding_mode", m.clone());
    } else if a.char_vectors.is_some() || a.bigram_vectors.is_some() {
        push("embedding_mode", EmbeddingMode::PretrainedFinetune.name().into());
    }
    Ok(entries)
}

fn train(a: &TrainArgs) -> Result<String> {
    let (mut entries, path) = match &a.config {
        Some(p) => {
            let name = p.display().to_string();
            (parse_key_values(&read_text(p)?, &name)?, name)
        }
        None => (Vec::new(), "command line".to_owned()),
    };
    entries.extend(overrides(&a.data)?);
    let (hp, cfg) = config_from_entries(&entries, &path)?;
    let data = load_data(&a.data)?;
    let out = fit::<f32>(&data.train, &data.dev, &hp, &cfg, data.pretrained.as_ref())?;
    save_checkpoint(&a.out, &out.best).map_err(Failure::data)?;
    let log = out.log.to_text();
    if let Some(p) = &a.log {
        emit(Some(p), &log)?;
    }
    Ok(format!(
        "steps={}\nbest_step={}\ndev_f1={:.2}\ncheckpoint={}\n",
        out.steps,
        out.best.optimizer.step,
        100.0 * out.best.dev_f1,
        a.out.display()
    ))
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let c: Checkpoint<f32> = load_checkpoint(&a.model).map_err(Failure::data)?;
    let lines = read_raw_lines(&a.input).map_err(Failure::data)?;
    let out = segment_all(&lines, &c.model, &c.vocab).map_err(|e| Failure::Training(e.to_string()))?;
    let mut text = String::new();
    for s in out {
        let _ = writeln!(text, "{s}");
    }
    emit(a.output.as_deref(), &text)
}

fn eval(a: &EvalArgs) -> Result<String> {
    let gold = read(&a.gold, &a.corpus)?;
    let pred = read(&a.pred, &a.corpus)?;
    let words = a.train.as_ref().map(|p| read(p, &a.corpus)).transpose()?.map(|t| word_set(&t));
    let r = evaluate(&gold, &pred, words.as_ref()).map_err(Failure::data)?;
    Ok(match a.format {
        Format::Text => r.to_key_value(),
        Format::Json => r.to_json(),
    })
}

fn grid(a: &GridArgs) -> Result<()> {
    let name = a.grid.display().to_string();
    let mut entries = parse_key_values(&read_text(&a.grid)?, &name)?;
    entries.extend(overrides(&a.data)?);
    let (grid, cfg) = grid_from_entries(&entries, &name)?;
    let data = load_data(&a.data)?;
    let results = grid_search::<f32>(&data.train, &data.dev, &grid, &cfg, data.pretrained.as_ref())?;
    emit(a.output.as_deref(), &format_ranked(&results))
}

fn significance(a: &SignificanceArgs) -> Result<String> {
    let gold = read(&a.gold, &a.corpus)?;
    let pa = read(&a.pred_a, &a.corpus)?;
    let pb = read(&a.pred_b, &a.corpus)?;
    let r = bootstrap_significance(&gold, &pa, &pb, a.resamples, a.seed).map_err(|e| match e {
        cws_core::evaluation::EvalError::NoResamples => Failure::Usage(e.to_string()),
        _ => Failure::data(e),
    })?;
    Ok(format!(
        "delta_f1={:.2}\nresamples={}\nseed={}\np_value={:.3}\n",
        100.0 * r.delta_f1,
        r.resamples,
        r.seed,
        r.p_value
    ))
}

fn inconsistency(a: &InconsistencyArgs) -> Result<String> {
    let c = read(&a.corpus, &a.flags)?;
    let r = inconsistency_scan(&c).map_err(Failure::data)?;
    if let Some(p) = &a.audit {
        emit(Some(p), &r.audit_text())?;
    }
    Ok(r.to_text())
}

fn stats(a: &StatsArgs) -> Result<String> {
    let s = corpus_stats(&read(&a.corpus, &a.flags)?);
    Ok(format!(
        "sentences={}\ntokens={}\ncharacters={}\nword_types={}\n",
        s.sentences, s.tokens, s.characters, s.word_types
    ))
}

fn import_embeddings(a: &ImportArgs) -> Result<String> {
    if a.char_vectors.is_none() && a.bigram_vectors.is_none() {
        return Err(Failure::Usage("give --char-vectors and/or --bigram-vectors".into()));
    }
    let mut c: Checkpoint<f32> = load_checkpoint(&a.model).map_err(Failure::data)?;
    let mut out = String::new();
    if let Some(p) = &a.char_vectors {
        let cov = apply_embeddings(&read_word2vec(p)?, &c.vocab.unigrams, &mut c.model.char_emb.table)?;
        let _ = writeln!(out, "char {cov}");
    }
    if let Some(p) = &a.bigram_vectors {
        let cov = apply_embeddings(&read_word2vec(p)?, &c.vocab.bigrams, &mut c.model.bigram_emb.table)?;
        let _ = writeln!(out, "bigram {cov}");
    }
    save_checkpoint(&a.out, &c).map_err(Failure::data)?;
    Ok(out)
}

fn oov(a: &OovArgs) -> Result<String> {
    let train = read(&a.train, &a.corpus)?;
    let test = read(&a.test, &a.corpus)?;
    let pred = a.pred.as_ref().map(|p| read(p, &a.corpus)).transpose()?;
    let inv = oov_inventory(&train, &test, pred.as_deref()).map_err(Failure::data)?;
    Ok(oov_inventory_text(&inv))
}

fn run(cli: Cli) -> Result<()> {
    let text = match &cli.command {
        Command::Train(a) => train(a)?,
        Command::Segment(a) => {
            segment(a)?;
            return Ok(());
        }
        Command::Eval(a) => eval(a)?,
        Command::Grid(a) => {
            grid(a)?;
            return Ok(());
        }
        Command::Significance(a) => significance(a)?,
        Command::Inconsistency(a) => inconsistency(a)?,
        Command::Stats(a) => stats(a)?,
        Command::ImportEmbeddings(a) => import_embeddings(a)?,
        Command::Oov(a) => oov(a)?,
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let level = std::env::var("SEG_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (1, m),
                Failure::Data(m) => (2, m),
                Failure::Training(m) => (3, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
