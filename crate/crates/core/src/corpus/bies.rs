use std::fmt;

use super::{CorpusError, Result, Sentence};

/// Position of a character inside its word.
///
/// The declaration order B < I < E < S is also the tie-break order used by
/// greedy decoding and the row order of the softmax layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    B,
    I,
    E,
    S,
}

pub type TagSeq = Vec<Tag>;

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::B, Tag::I, Tag::E, Tag::S];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    fn starts_word(self) -> bool {
        matches!(self, Tag::B | Tag::S)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::E => "E",
            Tag::S => "S",
        };
        f.write_str(c)
    }
}

pub fn encode_bies(sentence: &Sentence) -> TagSeq {
    let mut tags = Vec::with_capacity(sentence.num_chars());
    for word in sentence.words() {
        match word.chars().count() {
            0 => {}
            1 => tags.push(Tag::S),
            n => {
                tags.push(Tag::B);
                tags.extend(std::iter::repeat_n(Tag::I, n - 2));
                tags.push(Tag::E);
            }
        }
    }
    tags
}

/// Whether `tags` matches `(S | B I* E)*`.
pub fn is_well_formed(tags: &[Tag]) -> bool {
    let mut inside = false;
    for &t in tags {
        inside = match (inside, t) {
            (false, Tag::S) => false,
            (false, Tag::B) => true,
            (true, Tag::I) => true,
            (true, Tag::E) => false,
            _ => return false,
        };
    }
    !inside
}

/// Turns any tag sequence into a segmentation.
///
/// A character starts a new word iff its tag is B or S; the first character
/// always starts a word. On well-formed input this inverts [`encode_bies`].
pub fn decode_bies(tags: &[Tag], chars: &[char]) -> Result<Sentence> {
    if tags.len() != chars.len() {
        return Err(CorpusError::LengthMismatch {
            tags: tags.len(),
            chars: chars.len(),
        });
    }
    let mut words: Vec<String> = Vec::new();
    for (i, (&t, &c)) in tags.iter().zip(chars).enumerate() {
        match words.last_mut() {
            Some(w) if i > 0 && !t.starts_word() => w.push(c),
            _ => words.push(c.to_string()),
        }
    }
    Sentence::new(words)
}
