use std::fs;
use std::io::Write;
use std::path::Path;

use super::{normalize_halfwidth, CorpusError, Result, Sentence};

/// How the reader treats irregular spacing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReadMode {
    /// Trim and collapse spaces, logging a warning.
    #[default]
    Lenient,
    /// Reject lines with leading, trailing or doubled spaces.
    Strict,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn utf8_lines<'a>(bytes: &'a [u8], path: &'a str) -> impl Iterator<Item = Result<(usize, &'a str)>> + 'a {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(move |(i, raw)| {
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            std::str::from_utf8(raw)
                .map(|l| (i + 1, l))
                .map_err(|e| CorpusError::Malformed {
                    path: path.to_owned(),
                    line: i + 1,
                    msg: format!("invalid UTF-8: {e}"),
                })
        })
}

/// Reads a segmented corpus: one sentence per line, words separated by
/// single spaces, width-normalized at load time. Blank lines are skipped.
pub fn read_corpus(path: impl AsRef<Path>, mode: ReadMode) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    parse_corpus(&bytes, &path.display().to_string(), mode)
}

pub fn parse_corpus(bytes: &[u8], path: &str, mode: ReadMode) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut irregular = 0usize;
    for line in utf8_lines(bytes, path) {
        let (lineno, line) = line?;
        let line = normalize_halfwidth(line);
        if line.trim().is_empty() {
            continue;
        }
        let regular = !line.starts_with(' ') && !line.ends_with(' ') && !line.contains("  ");
        let has_other_ws = line.chars().any(|c| c.is_whitespace() && c != ' ');
        if !regular || has_other_ws {
            if mode == ReadMode::Strict {
                return Err(CorpusError::Malformed {
                    path: path.to_owned(),
                    line: lineno,
                    msg: "irregular spacing (leading, trailing, doubled or non-space separator)".into(),
                });
            }
            irregular += 1;
            log::debug!("{path}:{lineno}: collapsing irregular spacing");
        }
        out.push(Sentence::from_spaced(&line));
    }
    if irregular > 0 {
        log::warn!("{path}: trimmed or collapsed spacing on {irregular} line(s)");
    }
    Ok(out)
}

/// Reads unsegmented text, one sentence per line. Lines are width-normalized
/// and stripped of whitespace; blank lines are kept as empty entries so the
/// output stays line-aligned.
pub fn read_raw_lines(path: impl AsRef<Path>) -> Result<Vec<Vec<char>>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    let text_ends_with_newline = bytes.last() == Some(&b'\n');
    let mut lines: Vec<_> = utf8_lines(&bytes, &name).collect::<Result<_>>()?;
    if text_ends_with_newline || bytes.is_empty() {
        lines.pop();
    }
    for (_, line) in lines {
        out.push(
            normalize_halfwidth(line)
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect(),
        );
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[Sentence]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for s in corpus {
        writeln!(f, "{s}").map_err(io_err)?;
    }
    f.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenient_collapses_and_normalizes() {
        let c = parse_corpus("中国 人\n\n  ａｂ  ｃ \n".as_bytes(), "t", ReadMode::Lenient).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].words(), ["中国", "人"]);
        assert_eq!(c[1].words(), ["ab", "c"]);
    }

    #[test]
    fn ideographic_space_separates_words() {
        let c = parse_corpus("中国\u{3000}人".as_bytes(), "t", ReadMode::Strict).unwrap();
        assert_eq!(c[0].words(), ["中国", "人"]);
    }

    #[test]
    fn strict_reports_line_numbers() {
        let err = parse_corpus("a b\nc  d\n".as_bytes(), "f.txt", ReadMode::Strict).unwrap_err();
        match err {
            CorpusError::Malformed { line, path, .. } => {
                assert_eq!(line, 2);
                assert_eq!(path, "f.txt");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn invalid_utf8_is_reported() {
        let err = parse_corpus(b"ok\n\xff\xfe\n", "f", ReadMode::Lenient).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));
    }
}
