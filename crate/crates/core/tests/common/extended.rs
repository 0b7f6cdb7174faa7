//! Double-double arithmetic (about 32 significant digits) and a reference
//! forward pass of the tagger loss written against it.
//!
//! The reference shares no code with the model: it reads parameter values
//! and re-derives embeddings, both LSTM layers, dropout and the softmax loss.
//! Its loss carries roughly 1e-30 absolute error, so central differences
//! taken on it are limited by truncation rather than cancellation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use cws_core::corpus::{FeatureSeq, Tag};
use cws_core::model::{Direction, DropoutMasks, LstmLayer, SegmenterModel, Variant};
use cws_core::numerics::{LossValue, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.3190468138462996e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let (p, e) = two_prod(q1, d);
        let (s, f) = two_sum(self.hi, -p);
        let q2 = (s + (f - e + self.lo)) / d;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    pub fn exp(self) -> Dd {
        if self.hi < -700.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Dd::from(k);
        // exp(r) = exp(r / 2^10)^(2^10); the Taylor series converges in a few terms.
        let s = r.ldexp(-10);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=9 {
            term = (term * s).div_f64(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0);
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn sigmoid(self) -> Dd {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }

    pub fn tanh(self) -> Dd {
        if self.hi > 40.0 {
            return Dd::ONE;
        }
        if self.hi < -40.0 {
            return -Dd::ONE;
        }
        let e = (self + self).exp();
        (e - Dd::ONE) / (e + Dd::ONE)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

impl LossValue for Dd {
    fn central_difference(plus: Dd, minus: Dd, eps: f64) -> f64 {
        ((plus - minus) / Dd::from(2.0 * eps)).hi
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

type Seq = Vec<Vec<Dd>>;

fn affine(w: &Tensor<f64>, b: Option<&Tensor<f64>>, x: &[Dd]) -> Vec<Dd> {
    (0..w.rows())
        .map(|r| {
            let mut acc = b.map_or(Dd::ZERO, |b| Dd::from(b.data()[r]));
            for (k, &xk) in x.iter().enumerate() {
                acc = acc + Dd::from(w.get(r, k)) * xk;
            }
            acc
        })
        .collect()
}

fn lstm(layer: &LstmLayer<f64>, xs: &Seq, mask: Option<&Tensor<f64>>) -> Seq {
    let t_len = xs.len();
    let h = layer.hidden();
    let order: Vec<usize> = match layer.direction {
        Direction::Forward => (0..t_len).collect(),
        Direction::Backward => (0..t_len).rev().collect(),
    };
    let mut hs = vec![vec![Dd::ZERO; h]; t_len];
    let mut h_prev = vec![Dd::ZERO; h];
    let mut c_prev = vec![Dd::ZERO; h];
    for pos in order {
        let h_in: Vec<Dd> = match mask {
            Some(m) => h_prev.iter().enumerate().map(|(k, &v)| v * Dd::from(m.get(pos, k))).collect(),
            None => h_prev.clone(),
        };
        let gx = affine(&layer.w_x.value, Some(&layer.b.value), &xs[pos]);
        let gh = affine(&layer.w_h.value, None, &h_in);
        let mut c = vec![Dd::ZERO; h];
        for k in 0..h {
            let i = (gx[k] + gh[k]).sigmoid();
            let f = (gx[h + k] + gh[h + k]).sigmoid();
            let g = (gx[2 * h + k] + gh[2 * h + k]).tanh();
            let o = (gx[3 * h + k] + gh[3 * h + k]).sigmoid();
            c[k] = f * c_prev[k] + i * g;
            hs[pos][k] = o * c[k].tanh();
        }
        h_prev = hs[pos].clone();
        c_prev = c;
    }
    hs
}

/// Mean negative log-likelihood of `gold` under the model's raw weights.
pub fn reference_loss(model: &SegmenterModel<f64>, f: &FeatureSeq, gold: &[Tag], masks: &DropoutMasks<f64>) -> Dd {
    let ct = &model.char_emb.table.value;
    let bt = &model.bigram_emb.table.value;
    let xs: Seq = f
        .unigrams
        .iter()
        .zip(&f.bigrams)
        .enumerate()
        .map(|(t, (&u, &b))| {
            let mut row: Vec<Dd> = ct.row(u as usize).iter().chain(bt.row(b as usize)).map(|&v| Dd::from(v)).collect();
            if let Some(m) = &masks.input {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = *v * Dd::from(m.get(t, k));
                }
            }
            row
        })
        .collect();
    let (l0, l1) = (&model.layers[0], &model.layers[1]);
    let (m0, m1) = (masks.recurrent[0].as_ref(), masks.recurrent[1].as_ref());
    let top: Seq = match model.variant {
        Variant::Stacked => lstm(l1, &lstm(l0, &xs, m0), m1),
        Variant::Parallel => {
            let a = lstm(l0, &xs, m0);
            let b = lstm(l1, &xs, m1);
            a.into_iter().zip(b).map(|(mut a, b)| {
                a.extend(b);
                a
            }).collect()
        }
    };
    let mut total = Dd::ZERO;
    for (t, tag) in gold.iter().enumerate() {
        let scores = affine(&model.softmax_w.value, Some(&model.softmax_b.value), &top[t]);
        let max = scores.iter().map(|s| s.hi).fold(f64::NEG_INFINITY, f64::max);
        let sum = scores.iter().fold(Dd::ZERO, |acc, &s| acc + (s - Dd::from(max)).exp());
        total = total + Dd::from(max) + sum.ln() - scores[tag.index()];
    }
    total / Dd::from(gold.len() as f64)
}
