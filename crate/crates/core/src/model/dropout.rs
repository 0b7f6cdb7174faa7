use rand::Rng as _;

use crate::numerics::{Rng, Scalar, Tensor};

use super::{ModelError, Result};

/// How recurrent dropout masks are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RecurrentMode {
    /// One mask per layer, reused at every time step.
    #[default]
    PerSequence,
    /// A fresh mask at every time step.
    PerStep,
}

impl RecurrentMode {
    pub fn name(self) -> &'static str {
        match self {
            RecurrentMode::PerSequence => "per-sequence",
            RecurrentMode::PerStep => "per-step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-sequence" => Some(RecurrentMode::PerSequence),
            "per-step" => Some(RecurrentMode::PerStep),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub input_rate: f64,
    pub recurrent_rate: f64,
    pub recurrent_mode: RecurrentMode,
    pub enabled: bool,
}

impl DropoutSpec {
    pub fn disabled() -> Self {
        DropoutSpec {
            input_rate: 0.0,
            recurrent_rate: 0.0,
            recurrent_mode: RecurrentMode::PerSequence,
            enabled: false,
        }
    }

    pub fn new(input_rate: f64, recurrent_rate: f64, recurrent_mode: RecurrentMode) -> Result<Self> {
        for r in [input_rate, recurrent_rate] {
            if !(0.0..1.0).contains(&r) {
                return Err(ModelError::Inconsistent(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        Ok(DropoutSpec {
            input_rate,
            recurrent_rate,
            recurrent_mode,
            enabled: true,
        })
    }
}

/// Concrete inverted-dropout masks for one sequence. Kept entries carry
/// `1 / (1 - p)`, dropped entries 0. `None` means no masking.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks<F> {
    /// T x d_emb, applied to the concatenated embeddings.
    pub input: Option<Tensor<F>>,
    /// One T x h mask per LSTM layer, applied to `h_prev`.
    pub recurrent: Vec<Option<Tensor<F>>>,
}

fn mask_row<F: Scalar>(row: &mut [F], rate: f64, rng: &mut Rng) {
    let keep = F::of(1.0 / (1.0 - rate));
    for x in row {
        *x = if rng.gen::<f64>() < rate { F::zero() } else { keep };
    }
}

impl<F: Scalar> DropoutMasks<F> {
    pub fn none(layers: usize) -> Self {
        DropoutMasks {
            input: None,
            recurrent: vec![None; layers],
        }
    }

    pub fn sample(
        spec: &DropoutSpec,
        len: usize,
        input_dim: usize,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Self {
        if !spec.enabled {
            return Self::none(hidden.len());
        }
        let input = (spec.input_rate > 0.0).then(|| {
            let mut m = Tensor::zeros(len, input_dim);
            mask_row(m.data_mut(), spec.input_rate, rng);
            m
        });
        let recurrent = hidden
            .iter()
            .map(|&h| {
                (spec.recurrent_rate > 0.0).then(|| {
                    let mut m = Tensor::zeros(len, h);
                    match spec.recurrent_mode {
                        RecurrentMode::PerStep => mask_row(m.data_mut(), spec.recurrent_rate, rng),
                        RecurrentMode::PerSequence => {
                            let mut row = vec![F::zero(); h];
                            mask_row(&mut row, spec.recurrent_rate, rng);
                            for t in 0..len {
                                m.row_mut(t).copy_from_slice(&row);
                            }
                        }
                    }
                    m
                })
            })
            .collect();
        DropoutMasks { input, recurrent }
    }
}
