//! Training loop, hyperparameter grid, pretrained-embedding import and the
//! checkpoint container.

mod checkpoint;
mod config;
mod embeddings;
mod grid;

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus::{encode_bies, featurize, CorpusError, FeatureSeq, Sentence, TagSeq, Vocab};
use crate::evaluation::segment_f1;
use crate::model::{
    segment_all, DropoutSpec, ModelConfig, ModelError, RecurrentMode, SegmenterModel, StackOrder, Variant,
};
use crate::numerics::{
    clip_to_unit_norm, global_grad_norm, lr_at_step, optimizer_step, rng_from_seed, NumericsError,
    OptimizerState, Parameterized, Rng, Scalar,
};

pub use self::checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use self::config::{config_from_entries, parse_key_values, read_config, KeyValue};
pub use self::embeddings::{
    apply_embeddings, load_pretrained_embeddings, parse_word2vec, read_word2vec, write_word2vec, Coverage, EmbeddingFile,
    Pretrained,
};
pub use self::grid::{
    format_ranked, grid_from_entries, grid_search, grid_search_datasets, read_grid, Dataset, GridResult, HyperGrid,
    MultiGridResult, MultiGridRow,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus has no nonempty sentences")]
    EmptyTrain,
    #[error("development corpus has no nonempty sentences")]
    EmptyDev,
    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: u64, loss: f64 },
    #[error("{0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    ConfigLine { path: String, line: usize, msg: String },
    #[error("embedding mode {0} needs pretrained vectors")]
    MissingPretrained(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// One point of the tuned hyperparameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub char_dim: usize,
    pub bigram_dim: usize,
    pub lr0: f64,
    pub decay_steps: u64,
    pub input_dropout: f64,
    pub recurrent_dropout: f64,
    pub mu: f64,
}

impl Default for HyperParams {
    /// The first value of each tuned set.
    fn default() -> Self {
        HyperParams {
            char_dim: 64,
            bigram_dim: 16,
            lr0: 0.04,
            decay_steps: 32_000,
            input_dropout: 0.15,
            recurrent_dropout: 0.1,
            mu: 0.95,
        }
    }
}

impl HyperParams {
    pub const KEYS: [&'static str; 7] = [
        "char_dim",
        "bigram_dim",
        "lr0",
        "decay_steps",
        "input_dropout",
        "recurrent_dropout",
        "mu",
    ];

    /// Sets one field from its textual value. `Ok(false)` for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "char_dim" => self.char_dim = parse(key, value)?,
            "bigram_dim" => self.bigram_dim = parse(key, value)?,
            "lr0" => self.lr0 = parse(key, value)?,
            "decay_steps" => self.decay_steps = parse(key, value)?,
            "input_dropout" => self.input_dropout = parse(key, value)?,
            "recurrent_dropout" => self.recurrent_dropout = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("char_dim", self.char_dim.to_string()),
            ("bigram_dim", self.bigram_dim.to_string()),
            ("lr0", self.lr0.to_string()),
            ("decay_steps", self.decay_steps.to_string()),
            ("input_dropout", self.input_dropout.to_string()),
            ("recurrent_dropout", self.recurrent_dropout.to_string()),
            ("mu", self.mu.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.char_dim == 0 || self.bigram_dim == 0 {
            return bad("embedding sizes must be positive");
        }
        if !(self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if self.decay_steps == 0 {
            return bad("decay_steps must be positive");
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1)");
        }
        for r in [self.input_dropout, self.recurrent_dropout] {
            if !(0.0..1.0).contains(&r) {
                return bad("dropout rates must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value for {key}: {value:?}"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmbeddingMode {
    #[default]
    Random,
    PretrainedFixed,
    PretrainedFinetune,
}

impl EmbeddingMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingMode::Random => "random",
            EmbeddingMode::PretrainedFixed => "pretrained-fixed",
            EmbeddingMode::PretrainedFinetune => "pretrained-finetune",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(EmbeddingMode::Random),
            "pretrained-fixed" => Some(EmbeddingMode::PretrainedFixed),
            "pretrained-finetune" => Some(EmbeddingMode::PretrainedFinetune),
            _ => None,
        }
    }
}

/// Training-loop settings that are not tuned by the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub max_steps: Option<u64>,
    /// Evaluate on dev every this many updates (and once at the end).
    pub eval_every: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub embedding_mode: EmbeddingMode,
    /// 1 trains synchronously; more runs asynchronous workers.
    pub workers: usize,
    /// Stop after this many evaluations without a dev-F1 improvement.
    pub patience: usize,
    /// Stop once dev F1 reaches this value.
    pub target_f1: Option<f64>,
    pub hidden: usize,
    pub variant: Variant,
    pub stack_order: StackOrder,
    pub recurrent_mode: RecurrentMode,
    pub decay_factor: f64,
    pub averaging_start: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 30,
            max_steps: None,
            eval_every: 500,
            batch_size: 32,
            seed: 42,
            embedding_mode: EmbeddingMode::Random,
            workers: 1,
            patience: 10,
            target_f1: None,
            hidden: 256,
            variant: Variant::Stacked,
            stack_order: StackOrder::BackwardFirst,
            recurrent_mode: RecurrentMode::PerSequence,
            decay_factor: 0.5,
            averaging_start: 0,
            init_scale: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        let v = value.trim();
        match key {
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "max_steps" => self.max_steps = if v == "none" { None } else { Some(parse(key, v)?) },
            "eval_every" => self.eval_every = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "embedding_mode" => {
                self.embedding_mode = EmbeddingMode::parse(v).ok_or_else(|| format!("unknown embedding_mode {v:?}"))?
            }
            "workers" => self.workers = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "target_f1" => self.target_f1 = if v == "none" { None } else { Some(parse(key, v)?) },
            "hidden" => self.hidden = parse(key, v)?,
            "variant" => self.variant = Variant::parse(v).ok_or_else(|| format!("unknown variant {v:?}"))?,
            "stack_order" => {
                self.stack_order = StackOrder::parse(v).ok_or_else(|| format!("unknown stack_order {v:?}"))?
            }
            "recurrent_mode" => {
                self.recurrent_mode = RecurrentMode::parse(v).ok_or_else(|| format!("unknown recurrent_mode {v:?}"))?
            }
            "decay_factor" => self.decay_factor = parse(key, v)?,
            "averaging_start" => self.averaging_start = parse(key, v)?,
            "init_scale" => self.init_scale = parse(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every field as it would appear in a config file; `set` parses these back.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        vec![
            ("max_epochs", self.max_epochs.to_string()),
            ("max_steps", opt(self.max_steps.map(|v| v.to_string()))),
            ("eval_every", self.eval_every.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("embedding_mode", self.embedding_mode.name().into()),
            ("workers", self.workers.to_string()),
            ("patience", self.patience.to_string()),
            ("target_f1", opt(self.target_f1.map(|v| v.to_string()))),
            ("hidden", self.hidden.to_string()),
            ("variant", self.variant.name().into()),
            ("stack_order", self.stack_order.name().into()),
            ("recurrent_mode", self.recurrent_mode.name().into()),
            ("decay_factor", self.decay_factor.to_string()),
            ("averaging_start", self.averaging_start.to_string()),
            ("init_scale", self.init_scale.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(self.decay_factor > 0.0) {
            return bad("decay_factor must be positive");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sentence training loss since the previous record.
    pub loss: f64,
    /// Dev precision, recall and F1 with averaged weights.
    pub dev: Option<(f64, f64, f64)>,
    pub best_f1: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} epoch={} lr={:.6} loss={:.6}", self.step, self.epoch, self.lr, self.loss)?;
        if let Some((p, r, f1)) = self.dev {
            write!(
                f,
                " dev_p={:.4} dev_r={:.4} dev_f1={:.4} best_f1={:.4}",
                100.0 * p,
                100.0 * r,
                100.0 * f1,
                100.0 * self.best_f1
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    pub coverage: Vec<(String, Coverage)>,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (table, c) in &self.coverage {
            s.push_str(&format!("embeddings={table} {c}\n"));
        }
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    /// Loss of the first logged record, i.e. the loss at step 0.
    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    fn push(&mut self, r: LogRecord) {
        log::info!("{r}");
        self.records.push(r);
    }
}

pub struct TrainOutcome<F> {
    /// The checkpoint with the best dev F1.
    pub best: Checkpoint<F>,
    pub log: TrainLog,
    /// Total number of updates performed.
    pub steps: u64,
}

struct Example {
    features: FeatureSeq,
    gold: TagSeq,
}

fn examples(corpus: &[Sentence], vocab: &Vocab) -> Result<Vec<Example>> {
    corpus
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            Ok(Example {
                features: featurize(&s.chars(), vocab)?,
                gold: encode_bies(s),
            })
        })
        .collect()
}

/// Segments `corpus` with the averaged weights and scores it against itself.
pub fn evaluate_model<F: Scalar>(model: &SegmenterModel<F>, vocab: &Vocab, corpus: &[Sentence]) -> Result<(f64, f64, f64)> {
    let texts: Vec<Vec<char>> = corpus.iter().map(Sentence::chars).collect();
    let pred = segment_all(&texts, model, vocab)?;
    let r = segment_f1(corpus, &pred).expect("predictions cover the gold characters");
    Ok((r.precision, r.recall, r.f1))
}

/// Builds a freshly initialised model for `train`'s vocabulary, with
/// pretrained rows copied in when the embedding mode asks for them.
pub fn init_model<F: Scalar>(
    vocab: &Vocab,
    hp: &HyperParams,
    cfg: &TrainConfig,
    pretrained: Option<&Pretrained>,
    rng: &mut Rng,
    log: &mut TrainLog,
) -> Result<SegmenterModel<F>> {
    let mcfg = ModelConfig {
        char_dim: hp.char_dim,
        bigram_dim: hp.bigram_dim,
        hidden: cfg.hidden,
        variant: cfg.variant,
        stack_order: cfg.stack_order,
        init_scale: cfg.init_scale,
        ..ModelConfig::for_vocab(vocab)
    };
    let mut model = SegmenterModel::new(&mcfg, rng)?;
    if cfg.embedding_mode != EmbeddingMode::Random {
        let pre = pretrained.ok_or(TrainError::MissingPretrained(cfg.embedding_mode.name()))?;
        if let Some(file) = &pre.unigrams {
            let c = apply_embeddings(file, &vocab.unigrams, &mut model.char_emb.table)?;
            log.coverage.push(("char".into(), c));
        }
        if let Some(file) = &pre.bigrams {
            let c = apply_embeddings(file, &vocab.bigrams, &mut model.bigram_emb.table)?;
            log.coverage.push(("bigram".into(), c));
        }
        if cfg.embedding_mode == EmbeddingMode::PretrainedFixed {
            model.char_emb.set_trainable(false);
            model.bigram_emb.set_trainable(false);
        }
    }
    Ok(model)
}

/// Accumulates the mean gradient of one batch into `model` and returns the
/// summed sentence loss.
fn batch_gradient<F: Scalar>(
    model: &mut SegmenterModel<F>,
    data: &[Example],
    batch: &[usize],
    spec: &DropoutSpec,
    rng: &mut Rng,
    step: u64,
) -> Result<f64> {
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for &i in batch {
        let ex = &data[i];
        let masks = model.sample_masks(spec, ex.features.len(), rng);
        let loss = model.loss_and_grads(&ex.features, &ex.gold, &masks, weight)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step, loss });
        }
        total += loss;
    }
    Ok(total)
}

fn apply_update<F: Scalar>(model: &mut SegmenterModel<F>, opt: &mut OptimizerState) -> Result<()> {
    let step = opt.step;
    let mut params = model.params_mut();
    clip_to_unit_norm(&mut params).map_err(|_| TrainError::Diverged { step, loss: f64::NAN })?;
    debug_assert!(global_grad_norm(params.iter().map(|p| &**p)) <= 1.0 + 1e-6);
    optimizer_step(&mut params, opt);
    Ok(())
}

/// Shuffled minibatches of one epoch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Tracks dev evaluations, the best snapshot and the stopping rules.
struct Tracker<F> {
    best: Option<(SegmenterModel<F>, OptimizerState, f64)>,
    since_best: usize,
    log: TrainLog,
    loss_sum: f64,
    loss_count: usize,
}

impl<F: Scalar> Tracker<F> {
    fn best_f1(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |b| b.2)
    }

    /// Records an evaluation; returns true when training should stop.
    fn evaluate(
        &mut self,
        model: &SegmenterModel<F>,
        opt: &OptimizerState,
        epoch: usize,
        vocab: &Vocab,
        dev: &[Sentence],
        cfg: &TrainConfig,
    ) -> Result<bool> {
        let (p, r, f1) = evaluate_model(model, vocab, dev)?;
        if self.best.is_none() || f1 > self.best_f1() {
            self.best = Some((model.clone(), opt.clone(), f1));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let loss = if self.loss_count > 0 { self.loss_sum / self.loss_count as f64 } else { 0.0 };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        let best_f1 = self.best_f1();
        self.log.push(LogRecord {
            step: opt.step,
            epoch,
            lr: lr_at_step(opt, opt.step),
            loss,
            dev: Some((p, r, f1)),
            best_f1,
        });
        let reached = cfg.target_f1.is_some_and(|t| f1 >= t);
        Ok(reached || self.since_best >= cfg.patience)
    }
}

/// Trains a tagger on `train`, evaluating on `dev` with averaged weights,
/// and returns the best checkpoint together with the training log.
///
/// With `cfg.workers == 1` the run is a deterministic function of its inputs.
pub fn fit<F: Scalar>(
    train: &[Sentence],
    dev: &[Sentence],
    hp: &HyperParams,
    cfg: &TrainConfig,
    pretrained: Option<&Pretrained>,
) -> Result<TrainOutcome<F>> {
    hp.validate()?;
    cfg.validate()?;
    if train.iter().all(Sentence::is_empty) {
        return Err(TrainError::EmptyTrain);
    }
    if dev.iter().all(Sentence::is_empty) {
        return Err(TrainError::EmptyDev);
    }
    let vocab = Vocab::build(train)?;
    let data = examples(train, &vocab)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut tracker = Tracker {
        best: None,
        since_best: 0,
        log: TrainLog::default(),
        loss_sum: 0.0,
        loss_count: 0,
    };
    let model = init_model::<F>(&vocab, hp, cfg, pretrained, &mut rng, &mut tracker.log)?;
    let spec = DropoutSpec::new(hp.input_dropout, hp.recurrent_dropout, cfg.recurrent_mode)?;
    let opt = OptimizerState {
        step: 0,
        mu: hp.mu,
        lr0: hp.lr0,
        decay_steps: hp.decay_steps,
        decay_factor: cfg.decay_factor,
        averaging_start: cfg.averaging_start,
    };
    let steps = if cfg.workers == 1 {
        run_sync(model, opt, &data, &vocab, dev, &spec, cfg, &mut rng, &mut tracker)?
    } else {
        run_async(model, opt, &data, &vocab, dev, &spec, cfg, &mut rng, &mut tracker)?
    };
    let (model, opt, dev_f1) = tracker.best.expect("at least one evaluation");
    Ok(TrainOutcome {
        best: Checkpoint {
            model,
            vocab,
            hyper: hp.clone(),
            config: cfg.clone(),
            optimizer: opt,
            dev_f1,
        },
        log: tracker.log,
        steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_sync<F: Scalar>(
    mut model: SegmenterModel<F>,
    mut opt: OptimizerState,
    data: &[Example],
    vocab: &Vocab,
    dev: &[Sentence],
    spec: &DropoutSpec,
    cfg: &TrainConfig,
    rng: &mut Rng,
    tracker: &mut Tracker<F>,
) -> Result<u64> {
    let mut evaluated_at = None;
    let mut last_epoch = 1;
    'epochs: for epoch in 1..=cfg.max_epochs {
        last_epoch = epoch;
        for batch in epoch_batches(data.len(), cfg.batch_size, rng) {
            if cfg.max_steps.is_some_and(|m| opt.step >= m) {
                break 'epochs;
            }
            let loss = batch_gradient(&mut model, data, &batch, spec, rng, opt.step)?;
            if opt.step == 0 {
                tracker.log.push(LogRecord {
                    step: 0,
                    epoch,
                    lr: lr_at_step(&opt, 0),
                    loss: loss / batch.len() as f64,
                    dev: None,
                    best_f1: 0.0,
                });
            }
            tracker.loss_sum += loss;
            tracker.loss_count += batch.len();
            apply_update(&mut model, &mut opt)?;
            if opt.step.is_multiple_of(cfg.eval_every) {
                evaluated_at = Some(opt.step);
                if tracker.evaluate(&model, &opt, epoch, vocab, dev, cfg)? {
                    break 'epochs;
                }
            }
        }
    }
    if evaluated_at != Some(opt.step) {
        tracker.evaluate(&model, &opt, last_epoch, vocab, dev, cfg)?;
    }
    Ok(opt.step)
}

/// Asynchronous updates: each worker snapshots the shared weights, computes
/// a batch gradient without holding the lock, then applies it to the shared
/// store under the lock. Updates are therefore whole-model atomic, but a
/// gradient may be stale by the updates that landed while it was computed.
/// Batch order is fixed up front; which worker takes which batch is not.
#[allow(clippy::too_many_arguments)]
fn run_async<F: Scalar>(
    model: SegmenterModel<F>,
    opt: OptimizerState,
    data: &[Example],
    vocab: &Vocab,
    dev: &[Sentence],
    spec: &DropoutSpec,
    cfg: &TrainConfig,
    rng: &mut Rng,
    tracker: &mut Tracker<F>,
) -> Result<u64> {
    let mut schedule: Vec<(usize, Vec<usize>)> = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        for b in epoch_batches(data.len(), cfg.batch_size, rng) {
            schedule.push((epoch, b));
        }
    }
    if let Some(m) = cfg.max_steps {
        schedule.truncate(m as usize);
    }
    let store = Mutex::new((model, opt));
    let shared_tracker = Mutex::new(std::mem::replace(
        tracker,
        Tracker {
            best: None,
            since_best: 0,
            log: TrainLog::default(),
            loss_sum: 0.0,
            loss_count: 0,
        },
    ));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<TrainError>> = Mutex::new(None);
    let seeds: Vec<u64> = (0..cfg.workers).map(|_| rand::Rng::gen(rng)).collect();

    std::thread::scope(|scope| {
        for &seed in &seeds {
            let (store, shared_tracker, next, stop, failure, schedule) =
                (&store, &shared_tracker, &next, &stop, &failure, &schedule);
            scope.spawn(move || {
                let mut local_rng = rng_from_seed(seed);
                let mut local = store.lock().expect("store lock").0.clone();
                let result = (|| -> Result<()> {
                    loop {
                        if stop.load(Ordering::SeqCst) {
                            return Ok(());
                        }
                        let k = next.fetch_add(1, Ordering::SeqCst);
                        let Some((epoch, batch)) = schedule.get(k) else {
                            return Ok(());
                        };
                        {
                            let guard = store.lock().expect("store lock");
                            copy_values(&guard.0, &mut local);
                        }
                        let step_hint = k as u64;
                        let loss = batch_gradient(&mut local, data, batch, spec, &mut local_rng, step_hint)?;
                        let snapshot = {
                            let mut guard = store.lock().expect("store lock");
                            let (shared, opt) = &mut *guard;
                            move_grads(&mut local, shared);
                            apply_update(shared, opt)?;
                            (opt.step % cfg.eval_every == 0).then(|| (shared.clone(), opt.clone()))
                        };
                        let mut t = shared_tracker.lock().expect("tracker lock");
                        t.loss_sum += loss;
                        t.loss_count += batch.len();
                        if let Some((m, o)) = snapshot {
                            if t.evaluate(&m, &o, *epoch, vocab, dev, cfg)? {
                                stop.store(true, Ordering::SeqCst);
                            }
                        }
                    }
                })();
                if let Err(e) = result {
                    stop.store(true, Ordering::SeqCst);
                    failure.lock().expect("failure lock").get_or_insert(e);
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }
    *tracker = shared_tracker.into_inner().expect("tracker lock");
    let (model, opt) = store.into_inner().expect("store lock");
    let last_eval = tracker.log.records.last().map(|r| r.step);
    if last_eval != Some(opt.step) {
        let epoch = tracker.log.records.last().map_or(1, |r| r.epoch);
        tracker.evaluate(&model, &opt, epoch, vocab, dev, cfg)?;
    }
    Ok(opt.step)
}

fn copy_values<F: Scalar>(from: &SegmenterModel<F>, to: &mut SegmenterModel<F>) {
    for (src, dst) in from.params().into_iter().zip(to.params_mut()) {
        dst.value.data_mut().copy_from_slice(src.value.data());
    }
}

fn move_grads<F: Scalar>(from: &mut SegmenterModel<F>, to: &mut SegmenterModel<F>) {
    for (src, dst) in from.params_mut().into_iter().zip(to.params_mut()) {
        dst.grad.data_mut().copy_from_slice(src.grad.data());
        src.zero_grad();
    }
}
