use std::collections::HashMap;

use super::{CorpusError, Result, Sentence};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const EOS_ID: u32 = 2;

const RESERVED: [&str; 3] = [PAD, UNK, EOS];
const FORMAT_VERSION: &str = "cws-vocab 1";

/// Bigram at position i is (c[i], c[i+1]); the last position pairs with `</s>`.
pub const BIGRAM_CONVENTION: &str = "next-char-eos";

/// Contiguous id assignment for a set of string symbols, with the reserved
/// symbols `<pad>`, `<unk>` and `</s>` at ids 0, 1 and 2.
///
/// Corpus unigrams are single characters and corpus bigrams are two
/// characters or a character followed by `</s>`, so neither can collide
/// with a reserved symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut t = SymbolTable {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            t.insert(r);
        }
        t
    }

    pub fn insert(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        id
    }

    /// Id of `symbol`, or `UNK_ID` when absent.
    pub fn lookup(&self, symbol: &str) -> u32 {
        self.get(symbol).unwrap_or(UNK_ID)
    }

    pub fn get(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn num_reserved(&self) -> usize {
        RESERVED.len()
    }

    pub fn is_reserved(&self, id: u32) -> bool {
        (id as usize) < RESERVED.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Two header lines (format version, reserved count) then one symbol per
    /// line in id order.
    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_VERSION}\n{}\n", RESERVED.len());
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| CorpusError::Malformed {
            path: path.to_owned(),
            line,
            msg,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(FORMAT_VERSION) => {}
            other => {
                return Err(bad(1, format!("unsupported vocabulary header {other:?}")));
            }
        }
        let reserved: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| bad(2, "missing reserved-symbol count".into()))?;
        if reserved != RESERVED.len() {
            return Err(bad(2, format!("expected {} reserved symbols, found {reserved}", RESERVED.len())));
        }
        let mut table = SymbolTable {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            if i < RESERVED.len() && line != RESERVED[i] {
                return Err(bad(lineno, format!("expected reserved symbol {}", RESERVED[i])));
            }
            if table.index.contains_key(line) {
                return Err(bad(lineno, format!("duplicate symbol {line:?}")));
            }
            table.insert(line);
        }
        if table.len() < RESERVED.len() {
            return Err(bad(3, "reserved symbols missing".into()));
        }
        Ok(table)
    }
}

/// Character unigram and bigram symbol tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    pub unigrams: SymbolTable,
    pub bigrams: SymbolTable,
}

pub(crate) fn bigram_symbol(chars: &[char], i: usize) -> String {
    let mut s = String::with_capacity(8);
    s.push(chars[i]);
    match chars.get(i + 1) {
        Some(&c) => s.push(c),
        None => s.push_str(EOS),
    }
    s
}

impl Vocab {
    /// Collects every training unigram and bigram; no frequency cutoff.
    pub fn build(train: &[Sentence]) -> Result<Self> {
        if train.iter().all(Sentence::is_empty) {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut v = Vocab::default();
        for s in train {
            let chars = s.chars();
            let mut buf = [0u8; 4];
            for (i, &c) in chars.iter().enumerate() {
                v.unigrams.insert(c.encode_utf8(&mut buf));
                v.bigrams.insert(&bigram_symbol(&chars, i));
            }
        }
        Ok(v)
    }
}

/// Per-position unigram and bigram ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSeq {
    pub unigrams: Vec<u32>,
    pub bigrams: Vec<u32>,
}

impl FeatureSeq {
    pub fn len(&self) -> usize {
        self.unigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty()
    }
}

pub fn featurize(chars: &[char], vocab: &Vocab) -> Result<FeatureSeq> {
    if chars.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut buf = [0u8; 4];
    let unigrams = chars
        .iter()
        .map(|c| vocab.unigrams.lookup(c.encode_utf8(&mut buf)))
        .collect();
    let bigrams = (0..chars.len())
        .map(|i| vocab.bigrams.lookup(&bigram_symbol(chars, i)))
        .collect();
    Ok(FeatureSeq { unigrams, bigrams })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn build_enumerates_unigrams_and_bigrams() {
        let v = Vocab::build(&[Sentence::from_spaced("ab")]).unwrap();
        assert_eq!(v.unigrams.symbols(), [PAD, UNK, EOS, "a", "b"]);
        assert_eq!(v.bigrams.symbols(), [PAD, UNK, EOS, "ab", "b</s>"]);
        assert_eq!(v.unigrams.lookup("z"), UNK_ID);
    }

    #[test]
    fn build_rejects_empty() {
        assert!(matches!(Vocab::build(&[]), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn ids_are_contiguous() {
        let v = Vocab::build(&[Sentence::from_spaced("中国 人 民"), Sentence::from_spaced("人民")]).unwrap();
        for t in [&v.unigrams, &v.bigrams] {
            for (i, s) in t.symbols().iter().enumerate() {
                assert_eq!(t.get(s), Some(i as u32));
            }
        }
    }

    #[test]
    fn featurize_examples() {
        let v = Vocab::build(&[Sentence::from_spaced("abc")]).unwrap();
        let f = featurize(&chars("abc"), &v).unwrap();
        let u = |s: &str| v.unigrams.lookup(s);
        let b = |s: &str| v.bigrams.lookup(s);
        assert_eq!(f.unigrams, vec![u("a"), u("b"), u("c")]);
        assert_eq!(f.bigrams, vec![b("ab"), b("bc"), b("c</s>")]);

        let f = featurize(&chars("a"), &v).unwrap();
        assert_eq!(f.bigrams, vec![UNK_ID]);
        let v2 = Vocab::build(&[Sentence::from_spaced("a")]).unwrap();
        assert_eq!(featurize(&chars("a"), &v2).unwrap().bigrams, vec![v2.bigrams.lookup("a</s>")]);

        let f = featurize(&chars("ca"), &v).unwrap();
        assert_eq!(f.bigrams[0], UNK_ID);
        assert!(matches!(featurize(&[], &v), Err(CorpusError::EmptyInput)));
    }

    #[test]
    fn text_round_trip_and_header_checks() {
        let v = Vocab::build(&[Sentence::from_spaced("中国 人")]).unwrap();
        let text = v.bigrams.to_text();
        assert!(text.starts_with("cws-vocab 1\n3\n<pad>\n"));
        assert_eq!(SymbolTable::from_text(&text, "x").unwrap(), v.bigrams);
        assert!(SymbolTable::from_text("cws-vocab 9\n3\n", "x").is_err());
        assert!(SymbolTable::from_text("cws-vocab 1\n3\n<pad>\n<unk>\n", "x").is_err());
        assert!(SymbolTable::from_text("cws-vocab 1\n3\n<pad>\n<unk>\n</s>\na\na\n", "x").is_err());
    }
}
