use rand::seq::index::sample;

use super::{rng_from_seed, NumericsError, Param, Result, Scalar};

/// Anything exposing its trainable tensors in a stable order.
pub trait Parameterized<F> {
    fn params(&self) -> Vec<&Param<F>>;
    fn params_mut(&mut self) -> Vec<&mut Param<F>>;
}

/// A loss value the checker can difference. Plain `f64` works; an oracle
/// evaluating the loss in wider arithmetic can implement this to take the
/// difference before rounding.
pub trait LossValue: Copy + PartialEq {
    fn central_difference(plus: Self, minus: Self, eps: f64) -> f64;
    fn to_f64(self) -> f64;
}

impl LossValue for f64 {
    fn central_difference(plus: f64, minus: f64, eps: f64) -> f64 {
        (plus - minus) / (2.0 * eps)
    }

    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Check at most this many entries per tensor, chosen with `seed`.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            max_entries_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (tensor name, max relative error, entries checked)
    pub per_param: Vec<(String, f64, usize)>,
}

impl GradCheckReport {
    pub fn entries_checked(&self) -> usize {
        self.per_param.iter().map(|p| p.2).sum()
    }
}

/// Compares analytic gradients against central differences
/// `(f(x + eps) - f(x - eps)) / 2 eps` and returns the largest
/// `|a - n| / max(|a|, |n|, 1e-8)` over the checked entries.
///
/// `loss(model, true)` must populate gradients of all trainable tensors
/// (they are zeroed before the call); `loss(model, false)` only evaluates.
pub fn grad_check<F, M, V, L>(model: &mut M, mut loss: L, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Scalar,
    M: Parameterized<F>,
    V: LossValue,
    L: FnMut(&mut M, bool) -> V,
{
    for p in model.params_mut() {
        p.zero_grad();
    }
    let analytic_loss = loss(model, true);
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g.as_f64()).collect())
        .collect();
    let first = loss(model, false);
    let second = loss(model, false);
    if first != second || first != analytic_loss {
        return Err(NumericsError::NonDeterministic {
            first: first.to_f64(),
            second: if first != second { second } else { analytic_loss }.to_f64(),
        });
    }

    let eps = cfg.epsilon;
    let mut rng = rng_from_seed(cfg.seed);
    let mut report = GradCheckReport::default();
    let n_params = analytic.len();
    for pi in 0..n_params {
        let (trainable, len, name) = {
            let params = model.params();
            (params[pi].trainable, params[pi].value.len(), params[pi].name.clone())
        };
        if !trainable {
            continue;
        }
        let entries: Vec<usize> = match cfg.max_entries_per_param {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        let mut worst = 0.0f64;
        for &i in &entries {
            let orig = model.params()[pi].value.data()[i];
            let set = |m: &mut M, v: F| m.params_mut()[pi].value.data_mut()[i] = v;
            set(model, F::of(orig.as_f64() + eps));
            let plus = loss(model, false);
            set(model, F::of(orig.as_f64() - eps));
            let minus = loss(model, false);
            set(model, orig);
            let numeric = V::central_difference(plus, minus, eps);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push((name, worst, entries.len()));
    }
    Ok(report)
}
