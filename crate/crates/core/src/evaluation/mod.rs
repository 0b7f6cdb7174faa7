//! Word-level precision/recall/F1, OOV rate and recall, paired bootstrap
//! significance and the ablation harness.

mod ablation;
mod significance;

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Sentence;

pub use self::ablation::{ablation_run, Ablation, AblationRow, AblationTable};
pub use self::significance::{bootstrap_significance, SignificanceResult};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {index}: gold and predicted characters differ")]
    CharMismatch { index: usize },
    #[error("at least one resample is required")]
    NoResamples,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Word counts of one sentence pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub gold: usize,
    pub pred: usize,
    pub matched: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.gold += o.gold;
        self.pred += o.pred;
        self.matched += o.matched;
    }
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.pred)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    /// `2PR / (P + R)`, or 0 when both are 0.
    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Counts matching spans of one sentence pair. Both span lists are sorted
/// and disjoint, so a merge walk finds the identical pairs.
pub fn count_sentence(gold: &Sentence, pred: &Sentence) -> Counts {
    let (g, p) = (gold.spans(), pred.spans());
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < g.len() && j < p.len() {
        if g[i] == p[j] {
            matched += 1;
            i += 1;
            j += 1;
        } else if g[i].1 <= p[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    Counts {
        gold: g.len(),
        pred: p.len(),
        matched,
    }
}

fn check_aligned(gold: &[Sentence], pred: &[Sentence]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if !g.words().concat().chars().eq(p.words().concat().chars()) {
            return Err(EvalError::CharMismatch { index });
        }
    }
    Ok(())
}

/// Per-sentence counts after checking the corpora are aligned.
pub fn sentence_counts(gold: &[Sentence], pred: &[Sentence]) -> Result<Vec<Counts>> {
    check_aligned(gold, pred)?;
    Ok(gold.iter().zip(pred).map(|(g, p)| count_sentence(g, p)).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_words: usize,
    pub pred_words: usize,
    pub matched_words: usize,
    pub oov: Option<OovMetrics>,
}

impl EvalReport {
    fn from_counts(c: Counts) -> Self {
        EvalReport {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            gold_words: c.gold,
            pred_words: c.pred,
            matched_words: c.matched,
            oov: None,
        }
    }

    /// `key=value` lines. Rates are printed as percentages with two decimals.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let pct = |x: f64| format!("{:.2}", 100.0 * x);
        let _ = writeln!(s, "precision={}", pct(self.precision));
        let _ = writeln!(s, "recall={}", pct(self.recall));
        let _ = writeln!(s, "f1={}", pct(self.f1));
        let _ = writeln!(s, "gold_words={}", self.gold_words);
        let _ = writeln!(s, "pred_words={}", self.pred_words);
        let _ = writeln!(s, "matched_words={}", self.matched_words);
        if let Some(o) = &self.oov {
            let _ = writeln!(s, "oov_tokens={}", o.oov_tokens);
            let _ = writeln!(s, "oov_rate={}", pct(o.oov_rate));
            match o.oov_recall {
                Some(r) => {
                    let _ = writeln!(s, "oov_recall={}", pct(r));
                }
                None => {
                    let _ = writeln!(s, "oov_recall=undefined");
                }
            }
        }
        s
    }

    /// One JSON object; rates are fractions in [0, 1].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Micro-averaged word precision, recall and F1.
pub fn segment_f1(gold: &[Sentence], pred: &[Sentence]) -> Result<EvalReport> {
    let mut total = Counts::default();
    for c in sentence_counts(gold, pred)? {
        total += c;
    }
    Ok(EvalReport::from_counts(total))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OovMetrics {
    pub gold_tokens: usize,
    pub oov_tokens: usize,
    pub oov_rate: f64,
    /// Absent when the gold side has no OOV tokens.
    pub oov_recall: Option<f64>,
}

/// Surface forms of every training token.
pub fn word_set(corpus: &[Sentence]) -> HashSet<String> {
    corpus.iter().flat_map(|s| s.words().iter().cloned()).collect()
}

pub fn oov_metrics(train_words: &HashSet<String>, gold: &[Sentence], pred: &[Sentence]) -> Result<OovMetrics> {
    check_aligned(gold, pred)?;
    let (mut tokens, mut oov, mut found) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let pred_spans: HashSet<(usize, usize)> = p.spans().into_iter().collect();
        for (w, span) in g.words().iter().zip(g.spans()) {
            tokens += 1;
            if !train_words.contains(w) {
                oov += 1;
                if pred_spans.contains(&span) {
                    found += 1;
                }
            }
        }
    }
    Ok(OovMetrics {
        gold_tokens: tokens,
        oov_tokens: oov,
        oov_rate: ratio(oov, tokens),
        oov_recall: (oov > 0).then(|| found as f64 / oov as f64),
    })
}

/// F1 report with OOV fields when training words are supplied.
pub fn evaluate(gold: &[Sentence], pred: &[Sentence], train_words: Option<&HashSet<String>>) -> Result<EvalReport> {
    let mut report = segment_f1(gold, pred)?;
    if let Some(words) = train_words {
        report.oov = Some(oov_metrics(words, gold, pred)?);
    }
    Ok(report)
}
