use super::{axpy, NumericsError, Result, Scalar, Tensor};

/// A trainable tensor with its gradient, momentum buffer and running average.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub velocity: Tensor<F>,
    pub average: Tensor<F>,
    pub trainable: bool,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let (r, c) = value.shape();
        Param {
            name: name.into(),
            grad: Tensor::zeros(r, c),
            velocity: Tensor::zeros(r, c),
            average: value.clone(),
            value,
            trainable: true,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    /// Replaces the value and resets the average to it.
    pub fn reset_value(&mut self, value: Tensor<F>) -> Result<()> {
        if value.shape() != self.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "reset_value",
                lhs: self.shape(),
                rhs: value.shape(),
            });
        }
        self.average = value.clone();
        self.value = value;
        Ok(())
    }
}

/// Momentum SGD with step-decayed learning rate and uniform parameter averaging.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    /// Number of updates applied so far.
    pub step: u64,
    pub mu: f64,
    pub lr0: f64,
    pub decay_steps: u64,
    pub decay_factor: f64,
    /// First step (0-based) whose result enters the running average.
    pub averaging_start: u64,
}

impl Default for OptimizerState {
    fn default() -> Self {
        OptimizerState {
            step: 0,
            mu: 0.95,
            lr0: 0.04,
            decay_steps: 32_000,
            decay_factor: 0.5,
            averaging_start: 0,
        }
    }
}

/// `lr0 * decay_factor ^ floor(step / decay_steps)`
pub fn lr_at_step(st: &OptimizerState, step: u64) -> f64 {
    let k = (step / st.decay_steps.max(1)) as i32;
    st.lr0 * st.decay_factor.powi(k)
}

pub fn global_grad_norm<'a, F: Scalar>(params: impl IntoIterator<Item = &'a Param<F>>) -> f64 {
    params
        .into_iter()
        .filter(|p| p.trainable)
        .map(|p| p.grad.sum_squares())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global L2 norm is at most 1 and returns
/// the applied scale (1.0 when no rescaling was needed).
pub fn clip_to_unit_norm<F: Scalar>(params: &mut [&mut Param<F>]) -> Result<f64> {
    let norm = global_grad_norm(params.iter().map(|p| &**p));
    if !norm.is_finite() {
        return Err(NumericsError::NonFinite("gradient norm"));
    }
    if norm <= 1.0 {
        return Ok(1.0);
    }
    let scale = 1.0 / norm;
    for p in params.iter_mut().filter(|p| p.trainable) {
        p.grad.scale(F::of(scale));
    }
    Ok(scale)
}

/// Applies one momentum update to every trainable parameter, folds the new
/// value into the running average, zeroes the gradients and advances the
/// step counter. Non-trainable parameters are left untouched.
pub fn optimizer_step<F: Scalar>(params: &mut [&mut Param<F>], st: &mut OptimizerState) {
    let lr = F::of(lr_at_step(st, st.step));
    let mu = F::of(st.mu);
    let averaging = st.step >= st.averaging_start;
    let count = (st.step.saturating_sub(st.averaging_start) + 1) as f64;
    let keep = F::of(1.0 - 1.0 / count);
    let take = F::of(1.0 / count);
    for p in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let Param {
            value,
            grad,
            velocity,
            average,
            ..
        } = &mut **p;
        for v in velocity.data_mut().iter_mut() {
            *v *= mu;
        }
        axpy(-lr, grad.data(), velocity.data_mut());
        axpy(F::one(), velocity.data(), value.data_mut());
        if averaging {
            for (a, &x) in average.data_mut().iter_mut().zip(value.data()) {
                *a = keep * *a + take * x;
            }
        } else {
            average.data_mut().copy_from_slice(value.data());
        }
        grad.fill(F::zero());
    }
    st.step += 1;
}
