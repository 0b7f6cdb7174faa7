//! Single-file checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "CWSCKPT\0"
//! version u32
//! meta    u32 length + UTF-8 key=value lines
//! vocab   u32 length + unigram table text, u32 length + bigram table text
//! count   u32
//! tensor  u16 name length, name, u8 dtype code, u32 rows, u32 cols, payload
//! ```
//!
//! Each parameter contributes `<name>.value`, `<name>.average` and
//! `<name>.velocity`. Nothing time-dependent is written, so equal states give
//! equal bytes.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{SymbolTable, Vocab, BIGRAM_CONVENTION};
use crate::model::{EmbeddingTable, LstmLayer, SegmenterModel};
use crate::numerics::{DType, OptimizerState, Param, Parameterized, Scalar, Tensor};

use super::{HyperParams, TrainConfig};

pub const MAGIC: &[u8; 8] = b"CWSCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint of a supported version ({found})")]
    Version { found: String },
    #[error("checkpoint truncated at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint has no tensor {0}")]
    Missing(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// Everything needed to segment with, or resume, a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub model: SegmenterModel<F>,
    pub vocab: Vocab,
    pub hyper: HyperParams,
    pub config: TrainConfig,
    pub optimizer: OptimizerState,
    pub dev_f1: f64,
}

fn put_block(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_tensor<F: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<F>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(F::DTYPE.code());
    out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    for &x in t.data() {
        x.write_le(out);
    }
}

fn metadata<F: Scalar>(c: &Checkpoint<F>) -> String {
    let mut lines = vec![
        format!("bigram_convention={}", c.model.bigram_convention),
        format!("dtype={}", dtype_name(F::DTYPE)),
        format!("step={}", c.optimizer.step),
        format!("dev_f1={}", c.dev_f1),
    ];
    for (k, v) in c.hyper.pairs() {
        lines.push(format!("{k}={v}"));
    }
    for (k, v) in c.config.pairs() {
        lines.push(format!("{k}={v}"));
    }
    for p in c.model.params() {
        lines.push(format!("trainable.{}={}", p.name, p.trainable));
    }
    lines.join("\n") + "\n"
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::F32 => "f32",
        DType::F64 => "f64",
    }
}

/// Serializes a checkpoint to bytes.
pub fn write_checkpoint<F: Scalar>(c: &Checkpoint<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_block(&mut out, metadata(c).as_bytes());
    put_block(&mut out, c.vocab.unigrams.to_text().as_bytes());
    put_block(&mut out, c.vocab.bigrams.to_text().as_bytes());
    let params = c.model.params();
    out.extend_from_slice(&(3 * params.len() as u32).to_le_bytes());
    for p in params {
        put_tensor(&mut out, &format!("{}.value", p.name), &p.value);
        put_tensor(&mut out, &format!("{}.average", p.name), &p.average);
        put_tensor(&mut out, &format!("{}.velocity", p.name), &p.velocity);
    }
    out
}

pub fn save_checkpoint<F: Scalar>(path: impl AsRef<Path>, c: &Checkpoint<F>) -> Result<()> {
    std::fs::write(path.as_ref(), write_checkpoint(c)).map_err(|source| CheckpointError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated {
                offset: self.bytes.len(),
                what,
            }),
        }
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &'static str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?).map_err(|_| CheckpointError::Metadata(format!("{what} is not UTF-8")))
    }
}

/// Reads one tensor, converting its elements to `F`.
fn read_tensor<F: Scalar>(r: &mut Reader<'_>) -> Result<(String, Tensor<F>)> {
    let n = r.u16("tensor name")? as usize;
    let name = std::str::from_utf8(r.take(n, "tensor name")?)
        .map_err(|_| CheckpointError::Metadata("tensor name is not UTF-8".into()))?
        .to_owned();
    let code = r.u8("tensor dtype")?;
    let dtype = DType::from_code(code)
        .ok_or_else(|| CheckpointError::Metadata(format!("tensor {name}: unknown dtype code {code}")))?;
    let rows = r.u32("tensor shape")? as usize;
    let cols = r.u32("tensor shape")? as usize;
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| CheckpointError::Metadata(format!("tensor {name}: shape {rows}x{cols} overflows")))?;
    let payload = r.take(len, "tensor payload")?;
    let data: Vec<F> = match dtype {
        DType::F32 => payload.chunks_exact(4).map(|b| F::of(f32::read_le(b) as f64)).collect(),
        DType::F64 => payload.chunks_exact(8).map(|b| F::of(f64::read_le(b))).collect(),
    };
    let t = Tensor::from_vec(rows, cols, data).expect("length matches shape");
    Ok((name, t))
}

struct Tensors<F> {
    map: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Tensors<F> {
    fn take(&mut self, name: &str) -> Result<Tensor<F>> {
        self.map.remove(name).ok_or_else(|| CheckpointError::Missing(name.to_owned()))
    }

    fn param(&mut self, name: &str, trainable: &BTreeMap<String, bool>) -> Result<Param<F>> {
        let value = self.take(&format!("{name}.value"))?;
        let mut p = Param::new(name, value);
        for (suffix, slot) in [("average", &mut p.average), ("velocity", &mut p.velocity)] {
            let t = self.take(&format!("{name}.{suffix}"))?;
            if t.shape() != slot.shape() {
                return Err(CheckpointError::Shape {
                    name: format!("{name}.{suffix}"),
                    expected: slot.shape(),
                    found: t.shape(),
                });
            }
            *slot = t;
        }
        p.trainable = trainable.get(name).copied().unwrap_or(true);
        Ok(p)
    }
}

fn expect_shape<F: Scalar>(p: &Param<F>, expected: (usize, usize)) -> Result<()> {
    if p.shape() != expected {
        return Err(CheckpointError::Shape {
            name: p.name.clone(),
            expected,
            found: p.shape(),
        });
    }
    Ok(())
}

/// Parses a checkpoint, converting tensors to `F` if they were stored in
/// the other precision.
pub fn read_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<Checkpoint<F>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic").map_err(|_| CheckpointError::Version {
        found: "file too short for a header".into(),
    })?;
    if magic != MAGIC {
        return Err(CheckpointError::Version {
            found: format!("magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: format!("version {version}, expected {VERSION}"),
        });
    }
    let meta = r.text("metadata")?;
    let unigrams = SymbolTable::from_text(r.text("unigram vocabulary")?, "checkpoint unigram vocabulary")
        .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let bigrams = SymbolTable::from_text(r.text("bigram vocabulary")?, "checkpoint bigram vocabulary")
        .map_err(|e| CheckpointError::Metadata(e.to_string()))?;

    let mut hyper = HyperParams::default();
    let mut config = TrainConfig::default();
    let mut step = None;
    let mut dev_f1 = None;
    let mut trainable = BTreeMap::new();
    for line in meta.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::Metadata(format!("bad line {line:?}")))?;
        let bad = |m: String| CheckpointError::Metadata(m);
        match k {
            "bigram_convention" if v != BIGRAM_CONVENTION => {
                return Err(bad(format!("bigram convention {v:?}, expected {BIGRAM_CONVENTION:?}")));
            }
            "bigram_convention" | "dtype" => {}
            "step" => step = Some(super::parse::<u64>(k, v).map_err(bad)?),
            "dev_f1" => dev_f1 = Some(super::parse::<f64>(k, v).map_err(bad)?),
            _ if k.starts_with("trainable.") => {
                trainable.insert(k["trainable.".len()..].to_owned(), super::parse::<bool>(k, v).map_err(bad)?);
            }
            _ => {
                if !hyper.set(k, v).map_err(bad)? && !config.set(k, v).map_err(bad)? {
                    return Err(bad(format!("unknown key {k:?}")));
                }
            }
        }
    }
    let step = step.ok_or_else(|| CheckpointError::Metadata("missing step".into()))?;
    let dev_f1 = dev_f1.ok_or_else(|| CheckpointError::Metadata("missing dev_f1".into()))?;

    let count = r.u32("tensor count")? as usize;
    let mut tensors = Tensors { map: BTreeMap::new() };
    for _ in 0..count {
        let (name, t) = read_tensor::<F>(&mut r)?;
        if tensors.map.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Metadata(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Metadata(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let char_emb = tensors.param("char_emb", &trainable)?;
    expect_shape(&char_emb, (unigrams.len(), hyper.char_dim))?;
    let bigram_emb = tensors.param("bigram_emb", &trainable)?;
    expect_shape(&bigram_emb, (bigrams.len(), hyper.bigram_dim))?;
    let first = config.stack_order.first();
    let mut layers = Vec::new();
    for (i, dir) in [first, first.opposite()].into_iter().enumerate() {
        let name = format!("lstm{i}");
        let w_x = tensors.param(&format!("{name}.w_x"), &trainable)?;
        let w_h = tensors.param(&format!("{name}.w_h"), &trainable)?;
        let b = tensors.param(&format!("{name}.b"), &trainable)?;
        expect_shape(&w_h, (4 * config.hidden, config.hidden))?;
        let layer = LstmLayer::from_params(w_x, w_h, b, dir).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        layers.push(layer);
    }
    let softmax_w = tensors.param("softmax.w", &trainable)?;
    let softmax_b = tensors.param("softmax.b", &trainable)?;
    if let Some(extra) = tensors.map.keys().next() {
        return Err(CheckpointError::Metadata(format!("unexpected tensor {extra}")));
    }
    let model = SegmenterModel {
        char_emb: EmbeddingTable { table: char_emb },
        bigram_emb: EmbeddingTable { table: bigram_emb },
        layers,
        softmax_w,
        softmax_b,
        variant: config.variant,
        stack_order: config.stack_order,
        bigram_convention: BIGRAM_CONVENTION.to_owned(),
    };
    model.validate().map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let optimizer = OptimizerState {
        step,
        mu: hyper.mu,
        lr0: hyper.lr0,
        decay_steps: hyper.decay_steps,
        decay_factor: config.decay_factor,
        averaging_start: config.averaging_start,
    };
    Ok(Checkpoint {
        model,
        vocab: Vocab { unigrams, bigrams },
        hyper,
        config,
        optimizer,
        dev_f1,
    })
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<F>> {
    let bytes = std::fs::read(path.as_ref()).map_err(|source| CheckpointError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    read_checkpoint(&bytes)
}
