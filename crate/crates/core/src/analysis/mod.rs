//! Corpus audits: the annotation-inconsistency scan and the OOV inventory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Sentence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("test has {test} sentences but prediction has {pred}")]
    SentenceCount { test: usize, pred: usize },
}

/// Where an analysis occurs: sentence index and index of its first token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Location {
    pub sentence: usize,
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisCount {
    /// One to three words whose concatenation is the surface.
    pub parts: Vec<String>,
    pub locations: Vec<Location>,
}

impl AnalysisCount {
    pub fn count(&self) -> usize {
        self.locations.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceEntry {
    pub surface: String,
    /// Sorted by parts.
    pub analyses: Vec<AnalysisCount>,
    /// Index into `analyses` of the dominant analysis.
    pub dominant: usize,
}

impl SurfaceEntry {
    pub fn total(&self) -> usize {
        self.analyses.iter().map(AnalysisCount::count).sum()
    }

    /// Occurrences of every non-dominant analysis; 0 with a single analysis.
    pub fn minority(&self) -> usize {
        self.total() - self.analyses[self.dominant].count()
    }

    pub fn is_inconsistent(&self) -> bool {
        self.analyses.len() > 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InconsistencyReport {
    /// Every candidate surface that occurs, sorted by surface.
    pub surfaces: Vec<SurfaceEntry>,
    pub minority_total: usize,
    pub tokens: usize,
}

impl InconsistencyReport {
    /// Minority occurrences as a percentage of corpus tokens.
    pub fn percentage(&self) -> f64 {
        100.0 * self.minority_total as f64 / self.tokens as f64
    }

    pub fn inconsistent(&self) -> impl Iterator<Item = &SurfaceEntry> {
        self.surfaces.iter().filter(|s| s.is_inconsistent())
    }

    /// One line per inconsistent surface, then the summary line.
    pub fn to_text(&self) -> String {
        let mut s = String::from("surface\tanalyses\tminority\n");
        for e in self.inconsistent() {
            let analyses: Vec<String> = e
                .analyses
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let mark = if i == e.dominant { "*" } else { "" };
                    format!("{}{mark}:{}", a.parts.join(" "), a.count())
                })
                .collect();
            let _ = writeln!(s, "{}\t{}\t{}", e.surface, analyses.join(" | "), e.minority());
        }
        let _ = writeln!(
            s,
            "tokens={} minority={} inconsistency={:.2}%",
            self.tokens,
            self.minority_total,
            self.percentage()
        );
        s
    }

    /// Every counted occurrence with its location, for audit.
    pub fn audit_text(&self) -> String {
        let mut s = String::new();
        for e in self.inconsistent() {
            for a in &e.analyses {
                for l in &a.locations {
                    let _ = writeln!(s, "{}\t{}\t{}\t{}", e.surface, a.parts.join(" "), l.sentence + 1, l.start + 1);
                }
            }
        }
        s
    }
}

/// Picks the analysis with the most occurrences; ties go to fewer parts,
/// then to the lexicographically smaller parts.
fn dominant(analyses: &[AnalysisCount]) -> usize {
    let mut best = 0;
    for (i, a) in analyses.iter().enumerate().skip(1) {
        let b = &analyses[best];
        let better = a.count() > b.count()
            || (a.count() == b.count()
                && (a.parts.len() < b.parts.len() || (a.parts.len() == b.parts.len() && a.parts < b.parts)));
        if better {
            best = i;
        }
    }
    best
}

/// Finds surfaces that are segmented in more than one way.
///
/// Candidate surfaces are the concatenations of adjacent word pairs. Every
/// run of 1, 2 or 3 consecutive tokens spelling a candidate is one
/// occurrence of that analysis, counted once per starting token.
pub fn inconsistency_scan(corpus: &[Sentence]) -> Result<InconsistencyReport, AnalysisError> {
    let tokens: usize = corpus.iter().map(Sentence::num_words).sum();
    if tokens == 0 {
        return Err(AnalysisError::EmptyCorpus);
    }
    let candidates: HashSet<String> = corpus
        .par_iter()
        .flat_map_iter(|s| s.words().windows(2).map(|w| w.concat()).collect::<Vec<_>>())
        .collect();
    let hits: Vec<Vec<(String, usize, usize)>> = corpus
        .par_iter()
        .map(|s| {
            let w = s.words();
            let mut out = Vec::new();
            for start in 0..w.len() {
                for len in 1..=3.min(w.len() - start) {
                    let surface = w[start..start + len].concat();
                    if candidates.contains(&surface) {
                        out.push((surface, start, len));
                    }
                }
            }
            out
        })
        .collect();
    let mut by_surface: HashMap<String, BTreeMap<Vec<String>, Vec<Location>>> = HashMap::new();
    for (sentence, list) in hits.into_iter().enumerate() {
        let w = corpus[sentence].words();
        for (surface, start, len) in list {
            by_surface
                .entry(surface)
                .or_default()
                .entry(w[start..start + len].to_vec())
                .or_default()
                .push(Location { sentence, start });
        }
    }
    let mut surfaces: Vec<SurfaceEntry> = by_surface
        .into_iter()
        .map(|(surface, analyses)| {
            let analyses: Vec<AnalysisCount> = analyses
                .into_iter()
                .map(|(parts, locations)| AnalysisCount { parts, locations })
                .collect();
            SurfaceEntry {
                dominant: dominant(&analyses),
                surface,
                analyses,
            }
        })
        .collect();
    surfaces.sort_by(|a, b| a.surface.cmp(&b.surface));
    let minority_total = surfaces.iter().map(SurfaceEntry::minority).sum();
    Ok(InconsistencyReport {
        surfaces,
        minority_total,
        tokens,
    })
}

/// How the predictions segmented one OOV word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProducedSegmentation {
    pub parts: Vec<String>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OovEntry {
    pub word: String,
    pub test_frequency: usize,
    /// Occurrences predicted as exactly this word.
    pub correct: usize,
    /// Occurrences split at the word's boundaries into two or more
    /// training-vocabulary words.
    pub oversegmented_known: usize,
    /// Distinct predicted segmentations, most frequent first.
    pub produced: Vec<ProducedSegmentation>,
}

impl OovEntry {
    pub fn is_oversegmented_into_known_parts(&self) -> bool {
        self.oversegmented_known > 0
    }
}

/// Predicted pieces inside `[start, end)`, cut at every predicted boundary.
/// Returns whether the span edges are themselves predicted boundaries.
fn pieces(chars: &[char], bounds: &[usize], start: usize, end: usize) -> (Vec<String>, bool) {
    let inside: Vec<usize> = bounds.iter().copied().filter(|&b| b > start && b < end).collect();
    let mut cuts = vec![start];
    cuts.extend(inside);
    cuts.push(end);
    let parts = cuts.windows(2).map(|w| chars[w[0]..w[1]].iter().collect()).collect();
    let aligned = bounds.binary_search(&start).is_ok() && bounds.binary_search(&end).is_ok();
    (parts, aligned)
}

/// (test frequency, correct, known-part oversegmentations, produced splits)
type OovTally = (usize, usize, usize, BTreeMap<Vec<String>, usize>);

/// Lists every test word absent from the training words, with its
/// frequency and, given predictions, how it was segmented.
pub fn oov_inventory(
    train: &[Sentence],
    test: &[Sentence],
    pred: Option<&[Sentence]>,
) -> Result<Vec<OovEntry>, AnalysisError> {
    if let Some(p) = pred {
        if p.len() != test.len() {
            return Err(AnalysisError::SentenceCount {
                test: test.len(),
                pred: p.len(),
            });
        }
    }
    let known: HashSet<&str> = train.iter().flat_map(|s| s.words().iter().map(String::as_str)).collect();
    let mut entries: BTreeMap<&str, OovTally> = BTreeMap::new();
    for (i, s) in test.iter().enumerate() {
        let chars = s.chars();
        let bounds: Option<Vec<usize>> = pred.map(|p| {
            let mut b = vec![0];
            b.extend(p[i].spans().into_iter().map(|(_, e)| e));
            b
        });
        for (w, (start, end)) in s.words().iter().zip(s.spans()) {
            if known.contains(w.as_str()) {
                continue;
            }
            let e = entries.entry(w.as_str()).or_default();
            e.0 += 1;
            if let Some(bounds) = &bounds {
                let (parts, aligned) = pieces(&chars, bounds, start, end);
                if aligned && parts.len() == 1 {
                    e.1 += 1;
                }
                if aligned && parts.len() > 1 && parts.iter().all(|p| known.contains(p.as_str())) {
                    e.2 += 1;
                }
                *e.3.entry(parts).or_default() += 1;
            }
        }
    }
    let mut out: Vec<OovEntry> = entries
        .into_iter()
        .map(|(word, (freq, correct, over, produced))| {
            let mut produced: Vec<ProducedSegmentation> = produced
                .into_iter()
                .map(|(parts, count)| ProducedSegmentation { parts, count })
                .collect();
            produced.sort_by_key(|p| std::cmp::Reverse(p.count));
            OovEntry {
                word: word.to_owned(),
                test_frequency: freq,
                correct,
                oversegmented_known: over,
                produced,
            }
        })
        .collect();
    out.sort_by(|a, b| b.test_frequency.cmp(&a.test_frequency).then_with(|| a.word.cmp(&b.word)));
    Ok(out)
}

/// Inventory as a text table.
pub fn oov_inventory_text(entries: &[OovEntry]) -> String {
    let mut s = String::from("word\ttest_freq\tcorrect\toversegmented_known\tproduced\n");
    for e in entries {
        let produced: Vec<String> = e.produced.iter().map(|p| format!("{}:{}", p.parts.join(" "), p.count)).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            e.word,
            e.test_frequency,
            e.correct,
            e.oversegmented_known,
            produced.join(" | ")
        );
    }
    let over = entries.iter().filter(|e| e.is_oversegmented_into_known_parts()).count();
    let _ = writeln!(s, "oov_types={} oversegmented_known_types={over}", entries.len());
    s
}
