use std::collections::HashSet;
use std::fmt;
use std::io::Write as _;
use std::path::Path;

use crate::corpus::{normalize_halfwidth, SymbolTable};
use crate::numerics::{Param, Scalar};

use super::{Result, TrainError};

/// Vectors read from a word2vec text file, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingFile {
    pub path: String,
    pub dim: usize,
    pub entries: Vec<(String, Vec<f32>)>,
}

/// Pretrained vectors for the two embedding tables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pretrained {
    pub unigrams: Option<EmbeddingFile>,
    pub bigrams: Option<EmbeddingFile>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Coverage {
    /// Vocabulary symbols that received a pretrained row.
    pub matched: usize,
    /// Vocabulary symbols (reserved ones excluded) with no pretrained row.
    pub missing: usize,
    /// File symbols that are not in the vocabulary.
    pub extraneous: usize,
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "matched={} missing={} extraneous={}", self.matched, self.missing, self.extraneous)
    }
}

fn malformed(path: &str, line: usize, msg: impl Into<String>) -> TrainError {
    TrainError::ConfigLine {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

/// Parses the word2vec text format: a `count dim` header, then one
/// `symbol v1 ... v_dim` line per vector. Symbols are width-normalized the
/// same way corpora are.
pub fn parse_word2vec(text: &str, path: &str) -> Result<EmbeddingFile> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(malformed(path, 1, format!("bad header {header:?}"))),
        },
        _ => return Err(malformed(path, 1, format!("header must be \"count dim\", got {header:?}"))),
    };
    let mut entries = Vec::with_capacity(count);
    let mut last = 1;
    for (i, line) in lines {
        last = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let symbol = parts.next().expect("nonempty line has a first field");
        let values: Vec<f32> = parts
            .map(|v| v.parse::<f32>().map_err(|_| malformed(path, i + 1, format!("bad number {v:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(malformed(path, i + 1, format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(malformed(path, i + 1, "non-finite value"));
        }
        entries.push((normalize_halfwidth(symbol), values));
    }
    if entries.len() != count {
        return Err(malformed(path, last, format!("header announces {count} vectors, found {}", entries.len())));
    }
    Ok(EmbeddingFile {
        path: path.to_owned(),
        dim,
        entries,
    })
}

pub fn read_word2vec(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let p = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref()).map_err(|source| TrainError::Io { path: p.clone(), source })?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        malformed(&p, line, "invalid UTF-8")
    })?;
    parse_word2vec(&text, &p)
}

/// Writes `rows` (symbol, vector) in word2vec text format. Values use the
/// shortest representation that parses back to the same f32.
pub fn write_word2vec<'a>(path: impl AsRef<Path>, dim: usize, rows: impl IntoIterator<Item = (&'a str, &'a [f32])>) -> Result<()> {
    let p = path.as_ref().display().to_string();
    let io = |source| TrainError::Io { path: p.clone(), source };
    let rows: Vec<_> = rows.into_iter().collect();
    let mut out = Vec::new();
    writeln!(out, "{} {}", rows.len(), dim).map_err(io)?;
    for (sym, v) in rows {
        write!(out, "{sym}").map_err(io)?;
        for x in v {
            write!(out, " {x}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    std::fs::write(path.as_ref(), out).map_err(io)
}

/// Overwrites the rows of `table` whose symbols appear in `file`. Rows of
/// reserved symbols are never matched. The running average is reset to the
/// new values.
pub fn apply_embeddings<F: Scalar>(file: &EmbeddingFile, symbols: &SymbolTable, table: &mut Param<F>) -> Result<Coverage> {
    let (rows, cols) = table.shape();
    if file.dim != cols {
        return Err(malformed(
            &file.path,
            1,
            format!("vectors have dimension {} but the table has {cols}", file.dim),
        ));
    }
    debug_assert_eq!(rows, symbols.len());
    let mut seen = HashSet::new();
    let mut cov = Coverage::default();
    for (sym, v) in &file.entries {
        match symbols.get(sym).filter(|&id| !symbols.is_reserved(id)) {
            Some(id) => {
                if seen.insert(id) {
                    cov.matched += 1;
                }
                let row = table.value.row_mut(id as usize);
                for (dst, &x) in row.iter_mut().zip(v) {
                    *dst = F::of(x as f64);
                }
            }
            None => cov.extraneous += 1,
        }
    }
    cov.missing = symbols.len() - symbols.num_reserved() - cov.matched;
    table.average = table.value.clone();
    Ok(cov)
}

/// Reads a word2vec text file and applies it to `table`.
pub fn load_pretrained_embeddings<F: Scalar>(
    path: impl AsRef<Path>,
    symbols: &SymbolTable,
    table: &mut Param<F>,
) -> Result<Coverage> {
    apply_embeddings(&read_word2vec(path)?, symbols, table)
}
