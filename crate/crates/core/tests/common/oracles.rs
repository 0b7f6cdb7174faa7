//! Brute-force references and random corpus generators shared by the
//! property and acceptance tests.

use std::collections::{BTreeMap, BTreeSet};

use cws_core::corpus::Sentence;
use rand::Rng;

/// (gold words, predicted words, matched) by comparing every span pair.
pub fn brute_counts(gold: &[Sentence], pred: &[Sentence]) -> (usize, usize, usize) {
    let (mut g, mut p, mut m) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(pred) {
        let a = gs.spans();
        let b = ps.spans();
        g += a.len();
        p += b.len();
        for x in &a {
            for y in &b {
                if x == y {
                    m += 1;
                }
            }
        }
    }
    (g, p, m)
}

pub fn brute_f1(gold: &[Sentence], pred: &[Sentence]) -> (f64, f64, f64) {
    let (g, p, m) = brute_counts(gold, pred);
    let prec = if p == 0 { 0.0 } else { m as f64 / p as f64 };
    let rec = if g == 0 { 0.0 } else { m as f64 / g as f64 };
    let f = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
    (prec, rec, f)
}

/// Per-surface analysis counts over every window of at most three tokens,
/// restricted to surfaces spelled by some adjacent token pair, and the
/// resulting minority total.
pub fn brute_inconsistency(corpus: &[Sentence]) -> (BTreeMap<String, BTreeMap<Vec<String>, usize>>, usize) {
    let mut windows: BTreeMap<String, BTreeMap<Vec<String>, usize>> = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    for s in corpus {
        let w = s.words();
        for i in 0..w.len() {
            for j in i + 1..=w.len().min(i + 3) {
                let parts = w[i..j].to_vec();
                if j - i == 2 {
                    pairs.insert(parts.concat());
                }
                *windows.entry(parts.concat()).or_default().entry(parts).or_default() += 1;
            }
        }
    }
    windows.retain(|k, _| pairs.contains(k));
    let minority = windows
        .values()
        .map(|a| a.values().sum::<usize>() - a.values().max().copied().unwrap_or(0))
        .sum();
    (windows, minority)
}

/// A random segmentation of `n` characters drawn from `alphabet`.
pub fn random_sentence(rng: &mut impl Rng, alphabet: &[char], max_chars: usize) -> Sentence {
    let n = rng.gen_range(1..=max_chars);
    let chars: Vec<char> = (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
    random_split(rng, &chars)
}

/// Splits `chars` at random boundaries.
pub fn random_split(rng: &mut impl Rng, chars: &[char]) -> Sentence {
    let mut words = vec![String::new()];
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 && rng.gen_bool(0.5) {
            words.push(String::new());
        }
        words.last_mut().unwrap().push(c);
    }
    Sentence::new(words).unwrap()
}

/// A corpus of up to `max_sentences` sentences over a tiny word list, so
/// surfaces recur with different analyses.
pub fn random_word_corpus(rng: &mut impl Rng, max_sentences: usize) -> Vec<Sentence> {
    const WORDS: [&str; 8] = ["a", "b", "ab", "c", "bc", "abc", "ca", "d"];
    let n = rng.gen_range(1..=max_sentences);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=8);
            Sentence::new((0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())])).unwrap()
        })
        .collect()
}
