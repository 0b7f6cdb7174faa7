use crate::numerics::{axpy, dot, gemm_raw, Param, Rng, Scalar, Tensor};

use super::{ModelError, Result, WeightSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Left to right.
    Forward,
    /// Right to left.
    Backward,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// One unidirectional LSTM layer.
///
/// Gate blocks are stacked in the order `[input, forget, cell, output]`
/// along the first axis of `w_x` (4h x d_in), `w_h` (4h x h) and `b` (4h).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<F> {
    pub w_x: Param<F>,
    pub w_h: Param<F>,
    pub b: Param<F>,
    pub direction: Direction,
    hidden: usize,
}

/// Activations recorded by a forward pass, indexed by sequence position.
#[derive(Clone, Debug)]
pub(crate) struct LstmTrace<F> {
    pub input: Tensor<F>,
    /// Activated gates `[i, f, g, o]`, T x 4h.
    pub acts: Tensor<F>,
    pub c: Tensor<F>,
    pub tanh_c: Tensor<F>,
    pub h: Tensor<F>,
    /// Recurrent input after masking: `h_prev * mask`.
    pub h_in: Tensor<F>,
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    crate::numerics::sigmoid_scalar(x)
}

/// Applies the gate nonlinearities to preactivations `gates` (in place) and
/// writes the new cell and hidden state.
#[inline]
fn cell_update<F: Scalar>(gates: &mut [F], c_prev: Option<&[F]>, c: &mut [F], tanh_c: &mut [F], h: &mut [F]) {
    let n = c.len();
    for k in 0..n {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[n + k]);
        let g = gates[2 * n + k].tanh();
        let o = sigmoid(gates[3 * n + k]);
        gates[k] = i;
        gates[n + k] = f;
        gates[2 * n + k] = g;
        gates[3 * n + k] = o;
        let cp = c_prev.map_or(F::zero(), |cp| cp[k]);
        c[k] = f * cp + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
}

impl<F: Scalar> LstmLayer<F> {
    /// Uniform(-scale, scale) weights, zero biases except +`forget_bias` on the forget gate.
    pub fn new(
        name: &str,
        input_dim: usize,
        hidden: usize,
        direction: Direction,
        scale: f64,
        forget_bias: f64,
        rng: &mut Rng,
    ) -> Self {
        let w_x = Tensor::uniform(4 * hidden, input_dim, -scale, scale, rng);
        let w_h = Tensor::uniform(4 * hidden, hidden, -scale, scale, rng);
        let mut b = Tensor::vector(4 * hidden);
        for k in hidden..2 * hidden {
            b.data_mut()[k] = F::of(forget_bias);
        }
        LstmLayer {
            w_x: Param::new(format!("{name}.w_x"), w_x),
            w_h: Param::new(format!("{name}.w_h"), w_h),
            b: Param::new(format!("{name}.b"), b),
            direction,
            hidden,
        }
    }

    pub fn from_params(w_x: Param<F>, w_h: Param<F>, b: Param<F>, direction: Direction) -> Result<Self> {
        let (four_h, h) = w_h.shape();
        if four_h != 4 * h || w_x.shape().0 != four_h || b.shape() != (four_h, 1) {
            return Err(ModelError::Inconsistent(format!(
                "LSTM shapes w_x {:?}, w_h {:?}, b {:?}",
                w_x.shape(),
                w_h.shape(),
                b.shape()
            )));
        }
        Ok(LstmLayer {
            w_x,
            w_h,
            b,
            direction,
            hidden: h,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.shape().1
    }

    pub fn params(&self) -> [&Param<F>; 3] {
        [&self.w_x, &self.w_h, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param<F>; 3] {
        [&mut self.w_x, &mut self.w_h, &mut self.b]
    }

    /// Single recurrence step: gates = W_x x + W_h (h_prev * mask) + b,
    /// c = s(f) c_prev + s(i) tanh(g), h = s(o) tanh(c).
    pub fn lstm_step(
        &self,
        x: &[F],
        h_prev: &[F],
        c_prev: &[F],
        rec_mask: Option<&[F]>,
        src: WeightSource,
    ) -> Result<(Vec<F>, Vec<F>)> {
        let h = self.hidden;
        if x.len() != self.input_dim()
            || h_prev.len() != h
            || c_prev.len() != h
            || rec_mask.is_some_and(|m| m.len() != h)
        {
            return Err(ModelError::Shape(format!(
                "lstm_step expects x {}, h {h}; got x {}, h_prev {}, c_prev {}",
                self.input_dim(),
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let (w_x, w_h, b) = (src.of(&self.w_x), src.of(&self.w_h), src.of(&self.b));
        let h_in: Vec<F> = match rec_mask {
            Some(m) => h_prev.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => h_prev.to_vec(),
        };
        let mut gates: Vec<F> = (0..4 * h)
            .map(|j| b.data()[j] + dot(w_x.row(j), x) + dot(w_h.row(j), &h_in))
            .collect();
        let (mut c, mut tc, mut hh) = (vec![F::zero(); h], vec![F::zero(); h], vec![F::zero(); h]);
        cell_update(&mut gates, Some(c_prev), &mut c, &mut tc, &mut hh);
        Ok((hh, c))
    }

    fn order(&self, t: usize) -> Box<dyn Iterator<Item = usize>> {
        match self.direction {
            Direction::Forward => Box::new(0..t),
            Direction::Backward => Box::new((0..t).rev()),
        }
    }

    fn prev(&self, pos: usize, t: usize) -> Option<usize> {
        match self.direction {
            Direction::Forward => pos.checked_sub(1),
            Direction::Backward => (pos + 1 < t).then_some(pos + 1),
        }
    }

    /// Runs the layer over a T x d_in input sequence.
    pub(crate) fn forward(&self, input: &Tensor<F>, rec_mask: Option<&Tensor<F>>, src: WeightSource) -> LstmTrace<F> {
        let t_len = input.rows();
        let h = self.hidden;
        let (w_x, w_h, b) = (src.of(&self.w_x), src.of(&self.w_h), src.of(&self.b));
        debug_assert_eq!(input.cols(), self.input_dim());

        let mut acts = Tensor::zeros(t_len, 4 * h);
        gemm_raw(F::one(), input.mat(), w_x.mat().t(), F::zero(), acts.data_mut(), t_len, 4 * h);
        for r in 0..t_len {
            axpy(F::one(), b.data(), acts.row_mut(r));
        }
        let mut c = Tensor::zeros(t_len, h);
        let mut tanh_c = Tensor::zeros(t_len, h);
        let mut hs = Tensor::zeros(t_len, h);
        let mut h_in = Tensor::zeros(t_len, h);
        let mut c_prev = vec![F::zero(); h];

        for pos in self.order(t_len) {
            let prev = self.prev(pos, t_len);
            if let Some(p) = prev {
                let (src_row, dst) = (hs.row(p).to_vec(), h_in.row_mut(pos));
                match rec_mask {
                    Some(m) => {
                        for ((d, &s), &mk) in dst.iter_mut().zip(&src_row).zip(m.row(pos)) {
                            *d = s * mk;
                        }
                    }
                    None => dst.copy_from_slice(&src_row),
                }
                let hin = h_in.row(pos).to_vec();
                let gates = acts.row_mut(pos);
                for (j, g) in gates.iter_mut().enumerate() {
                    *g += dot(w_h.row(j), &hin);
                }
                c_prev.copy_from_slice(c.row(p));
            }
            let mut cr = vec![F::zero(); h];
            let mut tcr = vec![F::zero(); h];
            let mut hr = vec![F::zero(); h];
            cell_update(
                acts.row_mut(pos),
                prev.map(|_| c_prev.as_slice()),
                &mut cr,
                &mut tcr,
                &mut hr,
            );
            c.row_mut(pos).copy_from_slice(&cr);
            tanh_c.row_mut(pos).copy_from_slice(&tcr);
            hs.row_mut(pos).copy_from_slice(&hr);
        }
        LstmTrace {
            input: input.clone(),
            acts,
            c,
            tanh_c,
            h: hs,
            h_in,
        }
    }

    /// Backpropagates `d_h` (T x h, gradient w.r.t. the layer outputs) through
    /// time, accumulating into the parameter gradients. Returns the gradient
    /// w.r.t. the input sequence when `want_input_grad` is set.
    pub(crate) fn backward(
        &mut self,
        trace: &LstmTrace<F>,
        d_h: &Tensor<F>,
        rec_mask: Option<&Tensor<F>>,
        want_input_grad: bool,
    ) -> Option<Tensor<F>> {
        let t_len = d_h.rows();
        let h = self.hidden;
        let mut dgates = Tensor::zeros(t_len, 4 * h);
        let mut dh_rec = vec![F::zero(); h];
        let mut dc_next = vec![F::zero(); h];
        let one = F::one();

        let order: Vec<usize> = self.order(t_len).collect();
        for &pos in order.iter().rev() {
            let prev = self.prev(pos, t_len);
            let acts = trace.acts.row(pos);
            let tc = trace.tanh_c.row(pos);
            let dh_out = d_h.row(pos);
            let dg = dgates.row_mut(pos);
            for k in 0..h {
                let (i, f, g, o) = (acts[k], acts[h + k], acts[2 * h + k], acts[3 * h + k]);
                let dh = dh_out[k] + dh_rec[k];
                let d_o = dh * tc[k];
                let dc = dc_next[k] + dh * o * (one - tc[k] * tc[k]);
                let cp = prev.map_or(F::zero(), |p| trace.c.get(p, k));
                dg[k] = dc * g * i * (one - i);
                dg[h + k] = dc * cp * f * (one - f);
                dg[2 * h + k] = dc * i * (one - g * g);
                dg[3 * h + k] = d_o * o * (one - o);
                dc_next[k] = dc * f;
            }
            dh_rec.iter_mut().for_each(|x| *x = F::zero());
            if prev.is_some() {
                let w_h = &self.w_h.value;
                for (j, &d) in dg.iter().enumerate() {
                    if d != F::zero() {
                        axpy(d, w_h.row(j), &mut dh_rec);
                    }
                }
                if let Some(m) = rec_mask {
                    for (x, &mk) in dh_rec.iter_mut().zip(m.row(pos)) {
                        *x *= mk;
                    }
                }
            }
        }

        gemm_raw(one, dgates.mat().t(), trace.h_in.mat(), one, self.w_h.grad.data_mut(), 4 * h, h);
        let d_in = self.input_dim();
        gemm_raw(one, dgates.mat().t(), trace.input.mat(), one, self.w_x.grad.data_mut(), 4 * h, d_in);
        let db = self.b.grad.data_mut();
        for r in 0..t_len {
            axpy(one, dgates.row(r), db);
        }
        want_input_grad.then(|| {
            let mut dx = Tensor::zeros(t_len, d_in);
            gemm_raw(one, dgates.mat(), self.w_x.value.mat(), F::zero(), dx.data_mut(), t_len, d_in);
            dx
        })
    }
}
