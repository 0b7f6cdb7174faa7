//! The gradient-check fixture: hidden size 8, five characters, f64.
//!
//! The model runs in f64. The finite-difference side evaluates the same loss
//! with the double-double reference in `extended`; in plain f64 the rounding
//! noise of a loss near ln 4 is about 1e-11 after dividing by 2e-5, which
//! swamps entries whose gradient is below 1e-6.

use super::extended::{reference_loss, Dd};
use cws_core::corpus::{encode_bies, featurize, Sentence, Vocab};
use cws_core::model::{
    DropoutMasks, DropoutSpec, ModelConfig, RecurrentMode, SegmenterModel, StackOrder, Variant,
};
use cws_core::numerics::{grad_check, rng_from_seed, GradCheckConfig, GradCheckReport, LossValue, Parameterized};

pub struct GradCase {
    pub report: GradCheckReport,
    pub num_params: usize,
    /// |f64 forward - reference forward|
    pub forward_gap: f64,
}

pub fn check(variant: Variant, order: StackOrder, mode: Option<RecurrentMode>, seed: u64, init_scale: f64) -> GradCase {
    let sentence = Sentence::from_spaced("中国 人 民生");
    let vocab = Vocab::build(&[sentence.clone(), Sentence::from_spaced("人民 国")]).unwrap();
    let cfg = ModelConfig {
        char_dim: 4,
        bigram_dim: 3,
        hidden: 8,
        variant,
        stack_order: order,
        init_scale,
        ..ModelConfig::for_vocab(&vocab)
    };
    let mut rng = rng_from_seed(seed);
    let mut model = SegmenterModel::<f64>::new(&cfg, &mut rng).unwrap();
    let features = featurize(&sentence.chars(), &vocab).unwrap();
    assert_eq!(features.len(), 5);
    let gold = encode_bies(&sentence);
    let masks = match mode {
        Some(m) => {
            let spec = DropoutSpec::new(0.3, 0.4, m).unwrap();
            model.sample_masks(&spec, 5, &mut rng)
        }
        None => DropoutMasks::none(2),
    };

    let plain = model.loss(&features, &gold, &masks).unwrap();
    let reference = reference_loss(&model, &features, &gold, &masks).to_f64();

    let report = grad_check(
        &mut model,
        |m: &mut SegmenterModel<f64>, grads| -> Dd {
            if grads {
                m.loss_and_grads(&features, &gold, &masks, 1.0).unwrap();
            }
            reference_loss(m, &features, &gold, &masks)
        },
        &GradCheckConfig { epsilon: 1e-5, max_entries_per_param: None, seed },
    )
    .unwrap();
    GradCase {
        report,
        num_params: model.params().len(),
        forward_gap: (plain - reference).abs(),
    }
}
