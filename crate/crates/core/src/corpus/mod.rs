//! Segmented corpora: sentences, width normalization, the BIES codec,
//! symbol vocabularies, per-position features and dev splitting.

mod bies;
mod io;
pub mod synthetic;
mod vocab;

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use self::bies::{decode_bies, encode_bies, is_well_formed, Tag, TagSeq};
pub use self::io::{parse_corpus, read_corpus, read_raw_lines, write_corpus, ReadMode};
pub use self::vocab::{
    featurize, FeatureSeq, SymbolTable, Vocab, BIGRAM_CONVENTION, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty word at position {0}")]
    EmptyWord(usize),
    #[error("tag sequence has {tags} tags but there are {chars} characters")]
    LengthMismatch { tags: usize, chars: usize },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("cannot featurize an empty character sequence")]
    EmptyInput,
    #[error("dev fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// A gold segmentation: an ordered list of nonempty words.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Sentence {
    words: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        if let Some(i) = words.iter().position(|w| w.is_empty()) {
            return Err(CorpusError::EmptyWord(i));
        }
        Ok(Sentence { words })
    }

    /// Builds a sentence from a space-separated line, ignoring repeated spaces.
    pub fn from_spaced(line: &str) -> Self {
        Sentence {
            words: line.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn into_words(self) -> Vec<String> {
        self.words
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.words.iter().map(|w| w.chars().count()).sum()
    }

    pub fn chars(&self) -> Vec<char> {
        self.words.iter().flat_map(|w| w.chars()).collect()
    }

    pub fn text(&self) -> String {
        self.words.concat()
    }

    /// Half-open character spans of the words.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        self.words
            .iter()
            .map(|w| {
                let end = start + w.chars().count();
                let span = (start, end);
                start = end;
                span
            })
            .collect()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.words.join(" "))
    }
}

/// Maps full-width ASCII variants (U+FF01..=U+FF5E) and the ideographic
/// space to their half-width forms. Character count is preserved.
pub fn normalize_halfwidth(text: &str) -> String {
    text.chars().map(halfwidth_char).collect()
}

#[inline]
pub fn halfwidth_char(c: char) -> char {
    match c {
        '\u{3000}' => ' ',
        '\u{FF01}'..='\u{FF5E}' => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
        _ => c,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub characters: usize,
    pub word_types: usize,
}

pub fn corpus_stats(corpus: &[Sentence]) -> CorpusStats {
    let mut types = HashSet::new();
    let mut stats = CorpusStats {
        sentences: corpus.len(),
        ..Default::default()
    };
    for s in corpus {
        stats.tokens += s.num_words();
        stats.characters += s.num_chars();
        types.extend(s.words().iter().map(String::as_str));
    }
    stats.word_types = types.len();
    stats
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub seed: u64,
}

/// Moves `floor(fraction * N)` randomly chosen sentences into a dev set.
///
/// Both halves keep the original relative order of their sentences; the
/// choice of dev sentences is a seeded uniform shuffle.
pub fn split_dev(train: &[Sentence], fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let n = train.len();
    let n_dev = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut is_dev = vec![false; n];
    for &i in &order[..n_dev] {
        is_dev[i] = true;
    }
    let (dev, kept): (Vec<_>, Vec<_>) = train
        .iter()
        .zip(&is_dev)
        .partition(|(_, &d)| d);
    Ok(DatasetSplit {
        train: kept.into_iter().map(|(s, _)| s.clone()).collect(),
        dev: dev.into_iter().map(|(s, _)| s.clone()).collect(),
        test: Vec::new(),
        seed,
    })
}
