//! The bidirectional LSTM tagger: embeddings, LSTM layers, dropout, the
//! BIES softmax, the training loss with full backpropagation through time,
//! and greedy decoding.
//!
//! Two architectures share one parameter layout:
//!
//! * [`Variant::Stacked`]: characters → first LSTM → second LSTM (opposite
//!   direction, reading the first layer's outputs) → softmax. The default
//!   [`StackOrder::BackwardFirst`] puts the right-to-left layer at the bottom.
//! * [`Variant::Parallel`]: both LSTMs read the embeddings and the softmax
//!   sees their concatenated outputs.

mod dropout;
mod lstm;

use thiserror::Error;

use crate::corpus::{decode_bies, featurize, CorpusError, FeatureSeq, Sentence, Tag, Vocab, BIGRAM_CONVENTION};
use crate::numerics::{
    axpy, gemm_raw, softmax_in_place, NumericsError, Param, Parameterized, Rng, Scalar, Tensor,
};

pub use self::dropout::{DropoutMasks, DropoutSpec, RecurrentMode};
pub use self::lstm::{Direction, LstmLayer};
use self::lstm::LstmTrace;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{table} id {id} out of range for table of {size} rows")]
    IdOutOfRange { table: &'static str, id: u32, size: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("empty input")]
    EmptyInput,
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Variant {
    #[default]
    Stacked,
    Parallel,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Stacked => "stacked",
            Variant::Parallel => "parallel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stacked" => Some(Variant::Stacked),
            "parallel" => Some(Variant::Parallel),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StackOrder {
    #[default]
    BackwardFirst,
    ForwardFirst,
}

impl StackOrder {
    pub fn name(self) -> &'static str {
        match self {
            StackOrder::BackwardFirst => "backward-first",
            StackOrder::ForwardFirst => "forward-first",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "backward-first" => Some(StackOrder::BackwardFirst),
            "forward-first" => Some(StackOrder::ForwardFirst),
            _ => None,
        }
    }

    /// Direction of the first (bottom) layer.
    pub fn first(self) -> Direction {
        match self {
            StackOrder::BackwardFirst => Direction::Backward,
            StackOrder::ForwardFirst => Direction::Forward,
        }
    }
}

/// Which copy of the weights a forward pass reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSource {
    Raw,
    Averaged,
}

impl WeightSource {
    #[inline]
    pub fn of<F>(self, p: &Param<F>) -> &Tensor<F> {
        match self {
            WeightSource::Raw => &p.value,
            WeightSource::Averaged => &p.average,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub char_vocab: usize,
    pub bigram_vocab: usize,
    pub char_dim: usize,
    pub bigram_dim: usize,
    pub hidden: usize,
    pub variant: Variant,
    pub stack_order: StackOrder,
    pub init_scale: f64,
    pub forget_bias: f64,
}

impl ModelConfig {
    pub fn for_vocab(vocab: &Vocab) -> Self {
        ModelConfig {
            char_vocab: vocab.unigrams.len(),
            bigram_vocab: vocab.bigrams.len(),
            ..Default::default()
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            char_vocab: 0,
            bigram_vocab: 0,
            char_dim: 64,
            bigram_dim: 16,
            hidden: 256,
            variant: Variant::Stacked,
            stack_order: StackOrder::BackwardFirst,
            init_scale: 0.05,
            forget_bias: 1.0,
        }
    }
}

/// Embedding matrix, one row per symbol id. A non-trainable table is
/// treated as a constant by training.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<F> {
    pub table: Param<F>,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn vocab_size(&self) -> usize {
        self.table.shape().0
    }

    pub fn dim(&self) -> usize {
        self.table.shape().1
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.table.trainable = trainable;
        if !trainable {
            self.table.zero_grad();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmenterModel<F> {
    pub char_emb: EmbeddingTable<F>,
    pub bigram_emb: EmbeddingTable<F>,
    pub layers: Vec<LstmLayer<F>>,
    /// 4 x d_out, rows in tag order B, I, E, S.
    pub softmax_w: Param<F>,
    pub softmax_b: Param<F>,
    pub variant: Variant,
    pub stack_order: StackOrder,
    pub bigram_convention: String,
}

/// Everything a backward pass needs from the forward pass.
pub(crate) struct ForwardTrace<F> {
    layers: Vec<LstmTrace<F>>,
    top: Tensor<F>,
    scores: Tensor<F>,
}

impl<F: Scalar> SegmenterModel<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.char_dim == 0 || cfg.bigram_dim == 0 || cfg.hidden == 0 {
            return Err(ModelError::Inconsistent("dimensions must be positive".into()));
        }
        let s = cfg.init_scale;
        let char_emb = Param::new("char_emb", Tensor::uniform(cfg.char_vocab, cfg.char_dim, -s, s, rng));
        let bigram_emb = Param::new("bigram_emb", Tensor::uniform(cfg.bigram_vocab, cfg.bigram_dim, -s, s, rng));
        let d_emb = cfg.char_dim + cfg.bigram_dim;
        let first = cfg.stack_order.first();
        let second_in = match cfg.variant {
            Variant::Stacked => cfg.hidden,
            Variant::Parallel => d_emb,
        };
        let layers = vec![
            LstmLayer::new("lstm0", d_emb, cfg.hidden, first, s, cfg.forget_bias, rng),
            LstmLayer::new("lstm1", second_in, cfg.hidden, first.opposite(), s, cfg.forget_bias, rng),
        ];
        let d_out = match cfg.variant {
            Variant::Stacked => cfg.hidden,
            Variant::Parallel => 2 * cfg.hidden,
        };
        let model = SegmenterModel {
            char_emb: EmbeddingTable { table: char_emb },
            bigram_emb: EmbeddingTable { table: bigram_emb },
            layers,
            softmax_w: Param::new("softmax.w", Tensor::uniform(4, d_out, -s, s, rng)),
            softmax_b: Param::new("softmax.b", Tensor::vector(4)),
            variant: cfg.variant,
            stack_order: cfg.stack_order,
            bigram_convention: BIGRAM_CONVENTION.to_owned(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the architectural invariants of the chosen variant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Inconsistent(m));
        if self.layers.len() != 2 {
            return bad(format!("expected 2 LSTM layers, found {}", self.layers.len()));
        }
        let (l0, l1) = (&self.layers[0], &self.layers[1]);
        if l0.direction == l1.direction {
            return bad("LSTM layers must run in opposite directions".into());
        }
        if l0.input_dim() != self.input_dim() {
            return bad(format!(
                "first layer reads {} inputs but embeddings give {}",
                l0.input_dim(),
                self.input_dim()
            ));
        }
        let (l1_in, d_out) = match self.variant {
            Variant::Stacked => {
                if l0.direction != self.stack_order.first() {
                    return bad(format!(
                        "stack order {} but bottom layer is {}",
                        self.stack_order.name(),
                        l0.direction.name()
                    ));
                }
                (l0.hidden(), l1.hidden())
            }
            Variant::Parallel => (self.input_dim(), l0.hidden() + l1.hidden()),
        };
        if l1.input_dim() != l1_in {
            return bad(format!("second layer reads {} inputs, expected {l1_in}", l1.input_dim()));
        }
        if self.softmax_w.shape() != (4, d_out) || self.softmax_b.shape() != (4, 1) {
            return bad(format!(
                "softmax is {:?}, expected (4, {d_out})",
                self.softmax_w.shape()
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.char_emb.dim() + self.bigram_emb.dim()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(LstmLayer::hidden).collect()
    }

    /// Width of the vector the softmax layer scores.
    pub fn output_dim(&self) -> usize {
        self.softmax_w.shape().1
    }

    pub fn sample_masks(&self, spec: &DropoutSpec, len: usize, rng: &mut Rng) -> DropoutMasks<F> {
        DropoutMasks::sample(spec, len, self.input_dim(), &self.hidden_sizes(), rng)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Concatenated char and bigram embeddings per position (T x d_emb),
    /// multiplied by the input dropout mask when one is given.
    pub fn embed_concat(&self, f: &FeatureSeq, input_mask: Option<&Tensor<F>>, src: WeightSource) -> Result<Tensor<F>> {
        if f.bigrams.len() != f.unigrams.len() {
            return Err(ModelError::LengthMismatch {
                what: "bigram features",
                expected: f.unigrams.len(),
                got: f.bigrams.len(),
            });
        }
        let (dc, db) = (self.char_emb.dim(), self.bigram_emb.dim());
        let (ct, bt) = (src.of(&self.char_emb.table), src.of(&self.bigram_emb.table));
        let mut x = Tensor::zeros(f.len(), dc + db);
        for (t, (&u, &b)) in f.unigrams.iter().zip(&f.bigrams).enumerate() {
            if u as usize >= ct.rows() {
                return Err(ModelError::IdOutOfRange { table: "char", id: u, size: ct.rows() });
            }
            if b as usize >= bt.rows() {
                return Err(ModelError::IdOutOfRange { table: "bigram", id: b, size: bt.rows() });
            }
            let row = x.row_mut(t);
            row[..dc].copy_from_slice(ct.row(u as usize));
            row[dc..].copy_from_slice(bt.row(b as usize));
        }
        if let Some(m) = input_mask {
            if m.shape() != x.shape() {
                return Err(ModelError::Shape(format!("input mask {:?} vs inputs {:?}", m.shape(), x.shape())));
            }
            for (v, &k) in x.data_mut().iter_mut().zip(m.data()) {
                *v *= k;
            }
        }
        Ok(x)
    }

    fn check_masks(&self, masks: &DropoutMasks<F>, len: usize) -> Result<()> {
        if masks.recurrent.len() != self.layers.len() {
            return Err(ModelError::Shape(format!(
                "{} recurrent masks for {} layers",
                masks.recurrent.len(),
                self.layers.len()
            )));
        }
        for (m, l) in masks.recurrent.iter().zip(&self.layers) {
            if let Some(m) = m {
                if m.shape() != (len, l.hidden()) {
                    return Err(ModelError::Shape(format!("recurrent mask {:?}, expected ({len}, {})", m.shape(), l.hidden())));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn forward(&self, f: &FeatureSeq, masks: &DropoutMasks<F>, src: WeightSource) -> Result<ForwardTrace<F>> {
        if f.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        self.validate()?;
        self.check_masks(masks, f.len())?;
        let emb = self.embed_concat(f, masks.input.as_ref(), src)?;
        let t_len = f.len();
        let (l0, l1) = (&self.layers[0], &self.layers[1]);
        let (r0, r1) = (masks.recurrent[0].as_ref(), masks.recurrent[1].as_ref());
        let (traces, top) = match self.variant {
            Variant::Stacked => {
                let a = l0.forward(&emb, r0, src);
                let b = l1.forward(&a.h, r1, src);
                let top = b.h.clone();
                (vec![a, b], top)
            }
            Variant::Parallel => {
                let a = l0.forward(&emb, r0, src);
                let b = l1.forward(&emb, r1, src);
                let (h0, h1) = (l0.hidden(), l1.hidden());
                let mut top = Tensor::zeros(t_len, h0 + h1);
                for t in 0..t_len {
                    let row = top.row_mut(t);
                    row[..h0].copy_from_slice(a.h.row(t));
                    row[h0..].copy_from_slice(b.h.row(t));
                }
                (vec![a, b], top)
            }
        };
        let mut scores = Tensor::zeros(t_len, 4);
        let (w, b) = (src.of(&self.softmax_w), src.of(&self.softmax_b));
        gemm_raw(F::one(), top.mat(), w.mat().t(), F::zero(), scores.data_mut(), t_len, 4);
        for t in 0..t_len {
            axpy(F::one(), b.data(), scores.row_mut(t));
        }
        if !scores.is_finite() {
            return Err(NumericsError::NonFinite("tag scores").into());
        }
        Ok(ForwardTrace { layers: traces, top, scores })
    }

    /// Tag scores (T x 4, columns B, I, E, S) under explicit masks.
    pub fn scores(&self, f: &FeatureSeq, masks: &DropoutMasks<F>, src: WeightSource) -> Result<Tensor<F>> {
        Ok(self.forward(f, masks, src)?.scores)
    }

    /// Tag scores with masks drawn from `dropout` (none when it is disabled).
    pub fn run_model(&self, f: &FeatureSeq, dropout: &DropoutSpec, rng: &mut Rng, src: WeightSource) -> Result<Tensor<F>> {
        let masks = self.sample_masks(dropout, f.len(), rng);
        self.scores(f, &masks, src)
    }

    /// Mean negative log-likelihood of `gold` under the raw weights.
    pub fn loss(&self, f: &FeatureSeq, gold: &[Tag], masks: &DropoutMasks<F>) -> Result<f64> {
        let trace = self.forward(f, masks, WeightSource::Raw)?;
        nll(&trace.scores, gold).map(|(l, _)| l)
    }

    /// Computes the mean per-position negative log-likelihood of `gold` and
    /// adds `weight` times its gradient into every trainable parameter.
    pub fn loss_and_grads(&mut self, f: &FeatureSeq, gold: &[Tag], masks: &DropoutMasks<F>, weight: f64) -> Result<f64> {
        let trace = self.forward(f, masks, WeightSource::Raw)?;
        let (loss, probs) = nll(&trace.scores, gold)?;
        let t_len = gold.len();
        let one = F::one();

        let mut d_scores = probs;
        let scale = F::of(weight / t_len as f64);
        for (t, tag) in gold.iter().enumerate() {
            let row = d_scores.row_mut(t);
            row[tag.index()] -= one;
            row.iter_mut().for_each(|x| *x *= scale);
        }
        let d_out = self.output_dim();
        gemm_raw(one, d_scores.mat().t(), trace.top.mat(), one, self.softmax_w.grad.data_mut(), 4, d_out);
        for t in 0..t_len {
            axpy(one, d_scores.row(t), self.softmax_b.grad.data_mut());
        }
        let mut d_top = Tensor::zeros(t_len, d_out);
        gemm_raw(one, d_scores.mat(), self.softmax_w.value.mat(), F::zero(), d_top.data_mut(), t_len, d_out);

        let want_emb = self.char_emb.table.trainable || self.bigram_emb.table.trainable;
        let (r0, r1) = (masks.recurrent[0].as_ref(), masks.recurrent[1].as_ref());
        let d_emb = match self.variant {
            Variant::Stacked => {
                let d_h0 = self.layers[1]
                    .backward(&trace.layers[1], &d_top, r1, true)
                    .expect("input gradient requested");
                self.layers[0].backward(&trace.layers[0], &d_h0, r0, want_emb)
            }
            Variant::Parallel => {
                let h0 = self.layers[0].hidden();
                let mut d0 = Tensor::zeros(t_len, h0);
                let mut d1 = Tensor::zeros(t_len, d_out - h0);
                for t in 0..t_len {
                    d0.row_mut(t).copy_from_slice(&d_top.row(t)[..h0]);
                    d1.row_mut(t).copy_from_slice(&d_top.row(t)[h0..]);
                }
                let a = self.layers[0].backward(&trace.layers[0], &d0, r0, want_emb);
                let b = self.layers[1].backward(&trace.layers[1], &d1, r1, want_emb);
                match (a, b) {
                    (Some(mut a), Some(b)) => {
                        axpy(one, b.data(), a.data_mut());
                        Some(a)
                    }
                    _ => None,
                }
            }
        };
        if let Some(mut d_emb) = d_emb {
            if let Some(m) = &masks.input {
                for (g, &k) in d_emb.data_mut().iter_mut().zip(m.data()) {
                    *g *= k;
                }
            }
            let dc = self.char_emb.dim();
            for (t, (&u, &b)) in f.unigrams.iter().zip(&f.bigrams).enumerate() {
                let row = d_emb.row(t);
                if self.char_emb.table.trainable {
                    axpy(one, &row[..dc], self.char_emb.table.grad.row_mut(u as usize));
                }
                if self.bigram_emb.table.trainable {
                    axpy(one, &row[dc..], self.bigram_emb.table.grad.row_mut(b as usize));
                }
            }
        }
        Ok(loss)
    }
}

/// Mean negative log-softmax of the gold tags, and the softmax probabilities.
fn nll<F: Scalar>(scores: &Tensor<F>, gold: &[Tag]) -> Result<(f64, Tensor<F>)> {
    if gold.len() != scores.rows() {
        return Err(ModelError::LengthMismatch {
            what: "gold tags",
            expected: scores.rows(),
            got: gold.len(),
        });
    }
    let mut probs = scores.clone();
    let mut loss = 0.0;
    for (t, tag) in gold.iter().enumerate() {
        let row = scores.row(t);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.as_f64()));
        let lse = max + row.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - row[tag.index()].as_f64();
        softmax_in_place(probs.row_mut(t));
    }
    Ok((loss / gold.len() as f64, probs))
}

impl<F: Scalar> Parameterized<F> for SegmenterModel<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = vec![&self.char_emb.table, &self.bigram_emb.table];
        for l in &self.layers {
            v.extend(l.params());
        }
        v.push(&self.softmax_w);
        v.push(&self.softmax_b);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = vec![&mut self.char_emb.table, &mut self.bigram_emb.table];
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        v.push(&mut self.softmax_w);
        v.push(&mut self.softmax_b);
        v
    }
}

/// Per-position argmax; ties go to the earliest tag in B, I, E, S order.
pub fn decode_greedy<F: Scalar>(scores: &Tensor<F>) -> Vec<Tag> {
    (0..scores.rows())
        .map(|t| {
            let row = scores.row(t);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            Tag::from_index(best).expect("four tag columns")
        })
        .collect()
}

/// Segments `text` with the averaged weights, dropout off.
pub fn segment<F: Scalar>(text: &[char], model: &SegmenterModel<F>, vocab: &Vocab) -> Result<Sentence> {
    if text.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let f = featurize(text, vocab)?;
    let scores = model.scores(&f, &DropoutMasks::none(model.layers.len()), WeightSource::Averaged)?;
    Ok(decode_bies(&decode_greedy(&scores), text)?)
}

/// Segments every line in parallel; empty lines give empty sentences.
pub fn segment_all<F: Scalar>(texts: &[Vec<char>], model: &SegmenterModel<F>, vocab: &Vocab) -> Result<Vec<Sentence>> {
    use rayon::prelude::*;
    texts
        .par_iter()
        .map(|t| if t.is_empty() { Ok(Sentence::default()) } else { segment(t, model, vocab) })
        .collect()
}
