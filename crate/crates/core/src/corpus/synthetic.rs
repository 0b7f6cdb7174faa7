//! Seeded synthetic corpora drawn from a random lexicon.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Sentence;

/// First code point of the alphabet; the CJK unified ideographs block.
const ALPHABET_START: u32 = 0x4E00;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub lexicon_size: usize,
    /// Zipf exponent of word frequencies; 0 gives uniform frequencies.
    pub zipf_s: f64,
    /// Inclusive range of characters per word.
    pub word_len: (usize, usize),
    /// Inclusive range of words per sentence.
    pub sentence_words: (usize, usize),
    /// Number of distinct characters words are spelled with.
    pub alphabet: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            lexicon_size: 500,
            zipf_s: 1.0,
            word_len: (1, 3),
            sentence_words: (3, 10),
            alphabet: 3000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticGenerator {
    pub spec: SyntheticSpec,
    /// Distinct words, most frequent first.
    pub lexicon: Vec<String>,
    weights: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl SyntheticGenerator {
    /// Draws a lexicon of distinct words; panics if the alphabet is too
    /// small to spell `lexicon_size` distinct words.
    pub fn new(spec: SyntheticSpec, seed: u64) -> Self {
        let (lo, hi) = spec.word_len;
        assert!(lo >= 1 && lo <= hi, "bad word length range");
        assert!(spec.sentence_words.0 >= 1 && spec.sentence_words.0 <= spec.sentence_words.1);
        assert!(spec.lexicon_size >= 1 && spec.alphabet >= 1);
        let capacity: f64 = (lo..=hi).map(|l| (spec.alphabet as f64).powi(l as i32)).sum();
        assert!(capacity >= 2.0 * spec.lexicon_size as f64, "alphabet too small for lexicon");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut lexicon = Vec::with_capacity(spec.lexicon_size);
        while lexicon.len() < spec.lexicon_size {
            let len = rng.gen_range(lo..=hi);
            let w: String = (0..len)
                .map(|_| char::from_u32(ALPHABET_START + rng.gen_range(0..spec.alphabet as u32)).expect("CJK block"))
                .collect();
            if seen.insert(w.clone()) {
                lexicon.push(w);
            }
        }
        let weights = WeightedIndex::new((1..=spec.lexicon_size).map(|k| (k as f64).powf(-spec.zipf_s)))
            .expect("positive weights");
        SyntheticGenerator {
            spec,
            lexicon,
            weights,
            rng,
        }
    }

    pub fn sentence(&mut self) -> Sentence {
        let (lo, hi) = self.spec.sentence_words;
        let n = self.rng.gen_range(lo..=hi);
        let words: Vec<&str> = (0..n)
            .map(|_| self.lexicon[self.weights.sample(&mut self.rng)].as_str())
            .collect();
        Sentence::new(words).expect("lexicon words are nonempty")
    }

    pub fn corpus(&mut self, n: usize) -> Vec<Sentence> {
        (0..n).map(|_| self.sentence()).collect()
    }
}

/// Number of ways `chars` splits into words of `lexicon`, saturating at 2.
pub fn count_segmentations(chars: &[char], lexicon: &HashSet<String>, max_word_len: usize) -> u8 {
    let n = chars.len();
    let mut ways = vec![0u8; n + 1];
    ways[0] = 1;
    for end in 1..=n {
        let mut total = 0u8;
        for len in 1..=max_word_len.min(end) {
            let start = end - len;
            if ways[start] == 0 {
                continue;
            }
            let w: String = chars[start..end].iter().collect();
            if lexicon.contains(&w) {
                total = total.saturating_add(ways[start]).min(2);
            }
        }
        ways[end] = total;
    }
    ways[n]
}

/// Fraction of sentences whose character string has more than one
/// segmentation into lexicon words.
pub fn ambiguity_rate(corpus: &[Sentence], lexicon: &[String]) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let max_len = lexicon.iter().map(|w| w.chars().count()).max().unwrap_or(1);
    let set: HashSet<String> = lexicon.iter().cloned().collect();
    let ambiguous = corpus
        .iter()
        .filter(|s| count_segmentations(&s.chars(), &set, max_len) > 1)
        .count();
    ambiguous as f64 / corpus.len() as f64
}
