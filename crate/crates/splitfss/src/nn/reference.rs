//! Independent reference implementations used as test oracles: brute-force
//! integer layer evaluations and a double-precision twin of the full
//! model. Kept deliberately naive and separate from the production path.

use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use rand::{Rng, RngExt};

/// Random tensor of small decoded magnitude (for oracle comparisons).
pub fn random_small_tensor<R: Rng>(
    shape: &[usize],
    bound: f64,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> RingTensor {
    let len: usize = shape.iter().product();
    let vals: Vec<f64> = (0..len)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
        .collect();
    RingTensor::from_f64s(shape, &vals, cfg).unwrap()
}

/// Quadruple-loop convolution on signed i128 integers.
pub fn conv2d_bruteforce(
    input: &RingTensor,
    kernels: &RingTensor,
    bias: &RingTensor,
    cfg: &FixedPointConfig,
) -> RingTensor {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, k) = (kernels.shape()[0], kernels.shape()[2]);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut out = vec![0u64; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc: i128 = 0;
                for i in 0..c_in {
                    for u in 0..k {
                        for v in 0..k {
                            let xv = cfg.to_signed(input.data()[(i * h + y + u) * w + x + v]);
                            let kv =
                                cfg.to_signed(kernels.data()[((o * c_in + i) * k + u) * k + v]);
                            acc += xv as i128 * kv as i128;
                        }
                    }
                }
                let truncated = ((acc + (1i128 << (cfg.frac_bits - 1))) >> cfg.frac_bits) as i64;
                out[(o * oh + y) * ow + x] = cfg.add(cfg.from_signed(truncated), bias.data()[o]);
            }
        }
    }
    RingTensor::from_vec(&[c_out, oh, ow], out).unwrap()
}

/// Exhaustive window-max oracle.
pub fn maxpool2_bruteforce(input: &RingTensor, cfg: &FixedPointConfig) -> RingTensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0u64; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = i64::MIN;
                let mut val = 0u64;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let e = input.data()[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                        if cfg.to_signed(e) > best {
                            best = cfg.to_signed(e);
                            val = e;
                        }
                    }
                }
                out[(ch * oh + y) * ow + x] = val;
            }
        }
    }
    RingTensor::from_vec(&[c, oh, ow], out).unwrap()
}

/// Plain double-loop FC oracle on signed integers.
pub fn fc_bruteforce(
    input: &RingTensor,
    weight: &RingTensor,
    bias: &RingTensor,
    cfg: &FixedPointConfig,
) -> RingTensor {
    let n_in = input.len();
    let n_out = weight.shape()[0];
    let mut out = vec![0u64; n_out];
    for o in 0..n_out {
        let mut acc: i128 = 0;
        for i in 0..n_in {
            acc += cfg.to_signed(input.data()[i]) as i128
                * cfg.to_signed(weight.data()[o * n_in + i]) as i128;
        }
        let truncated = ((acc + (1i128 << (cfg.frac_bits - 1))) >> cfg.frac_bits) as i64;
        out[o] = cfg.add(cfg.from_signed(truncated), bias.data()[o]);
    }
    RingTensor::from_vec(&[n_out], out).unwrap()
}

// ---------------------------------------------------------------------
// double-precision twin of the fixed stack

#[derive(Debug, Clone)]
pub struct FloatConv {
    pub weight: Vec<f64>, // [c_out, c_in, k, k]
    pub bias: Vec<f64>,
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct FloatFc {
    pub weight: Vec<f64>, // [n_out, n_in]
    pub bias: Vec<f64>,
    pub n_out: usize,
    pub n_in: usize,
}

impl FloatConv {
    pub fn from_fixed(weight: &RingTensor, bias: &RingTensor, cfg: &FixedPointConfig) -> Self {
        let s = weight.shape();
        Self {
            weight: weight.decode(cfg),
            bias: bias.decode(cfg),
            c_out: s[0],
            c_in: s[1],
            k: s[2],
        }
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = (h - self.k + 1, w - self.k + 1);
        let mut out = vec![0.0; self.c_out * oh * ow];
        for o in 0..self.c_out {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..self.c_in {
                        for u in 0..self.k {
                            for v in 0..self.k {
                                acc += x[(i * h + y + u) * w + xx + v]
                                    * self.weight[((o * self.c_in + i) * self.k + u) * self.k + v];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xx] = acc;
                }
            }
        }
        out
    }

    /// Gradients for one sample: (dK, db, dx).
    pub fn backward(
        &self,
        x: &[f64],
        h: usize,
        w: usize,
        grad: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (oh, ow) = (h - self.k + 1, w - self.k + 1);
        let mut dk = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.c_out];
        let mut dx = vec![0.0; self.c_in * h * w];
        for o in 0..self.c_out {
            for y in 0..oh {
                for xx in 0..ow {
                    let g = grad[(o * oh + y) * ow + xx];
                    db[o] += g;
                    for i in 0..self.c_in {
                        for u in 0..self.k {
                            for v in 0..self.k {
                                dk[((o * self.c_in + i) * self.k + u) * self.k + v] +=
                                    g * x[(i * h + y + u) * w + xx + v];
                                dx[(i * h + y + u) * w + xx + v] += g * self.weight
                                    [((o * self.c_in + i) * self.k + u) * self.k + v];
                            }
                        }
                    }
                }
            }
        }
        (dk, db, dx)
    }
}

impl FloatFc {
    pub fn from_fixed(weight: &RingTensor, bias: &RingTensor, cfg: &FixedPointConfig) -> Self {
        let s = weight.shape();
        Self {
            weight: weight.decode(cfg),
            bias: bias.decode(cfg),
            n_out: s[0],
            n_in: s[1],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                self.bias[o]
                    + x.iter()
                        .zip(&self.weight[o * self.n_in..(o + 1) * self.n_in])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, x: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut dw = vec![0.0; self.weight.len()];
        let mut dx = vec![0.0; self.n_in];
        for o in 0..self.n_out {
            for i in 0..self.n_in {
                dw[o * self.n_in + i] += grad[o] * x[i];
                dx[i] += grad[o] * self.weight[o * self.n_in + i];
            }
        }
        (dw, grad.to_vec(), dx)
    }
}

pub fn relu_f64(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let out: Vec<f64> = x.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
    let mask: Vec<f64> = x.iter().map(|&v| if v < 0.0 { 0.0 } else { 1.0 }).collect();
    (out, mask)
}

pub fn maxpool2_f64(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    let mut idx = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let base = (ch * h + 2 * y) * w + 2 * xx;
                let cand = [x[base], x[base + 1], x[base + w], x[base + w + 1]];
                let mut best = 0;
                for i in 1..4 {
                    if cand[i] > cand[best] {
                        best = i;
                    }
                }
                out[(ch * oh + y) * ow + xx] = cand[best];
                idx[(ch * oh + y) * ow + xx] = best;
            }
        }
    }
    (out, idx)
}

pub fn maxpool2_backward_f64(
    grad: &[f64],
    idx: &[usize],
    c: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let src = (ch * oh + y) * ow + xx;
                let which = idx[src];
                let (dy, dx) = (which / 2, which % 2);
                out[(ch * h + 2 * y + dy) * w + 2 * xx + dx] = grad[src];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------
// whole-model twins mirroring the fixed-point stack, sample at a time

#[derive(Debug, Clone)]
pub struct FloatClientModel {
    pub conv1: FloatConv,
    pub conv2: FloatConv,
    pub input_hw: usize,
    pub chain: [usize; 4],
}

pub struct FloatClientCache {
    x: Vec<f64>,
    idx1: Vec<usize>,
    a1: Vec<f64>,
    mask1: Vec<f64>,
    idx2: Vec<usize>,
    mask2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FloatClientGrads {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
}

impl FloatClientModel {
    pub fn from_fixed(model: &crate::nn::ClientModel, cfg: &FixedPointConfig) -> Self {
        Self {
            conv1: FloatConv::from_fixed(&model.conv1_w, &model.conv1_b, cfg),
            conv2: FloatConv::from_fixed(&model.conv2_w, &model.conv2_b, cfg),
            input_hw: model.arch.input_hw,
            chain: model.arch.spatial_chain().expect("valid architecture"),
        }
    }

    /// One sample through conv→pool→relu twice; returns the flattened
    /// split activation.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, FloatClientCache) {
        let hw = self.input_hw;
        let [s1, p1hw, s2, _p2hw] = self.chain;
        let z1 = self.conv1.forward(x, hw, hw);
        let (pool1, idx1) = maxpool2_f64(&z1, self.conv1.c_out, s1, s1);
        let (a1, mask1) = relu_f64(&pool1);
        let z2 = self.conv2.forward(&a1, p1hw, p1hw);
        let (pool2, idx2) = maxpool2_f64(&z2, self.conv2.c_out, s2, s2);
        let (a2, mask2) = relu_f64(&pool2);
        (
            a2,
            FloatClientCache {
                x: x.to_vec(),
                idx1,
                a1,
                mask1,
                idx2,
                mask2,
            },
        )
    }

    pub fn backward(&self, cache: &FloatClientCache, upstream: &[f64]) -> FloatClientGrads {
        let hw = self.input_hw;
        let [s1, p1hw, s2, _p2hw] = self.chain;
        let g: Vec<f64> = upstream
            .iter()
            .zip(&cache.mask2)
            .map(|(a, m)| a * m)
            .collect();
        let g = maxpool2_backward_f64(&g, &cache.idx2, self.conv2.c_out, s2, s2);
        let (dk2, db2, da1) = self.conv2.backward(&cache.a1, p1hw, p1hw, &g);
        let g: Vec<f64> = da1.iter().zip(&cache.mask1).map(|(a, m)| a * m).collect();
        let g = maxpool2_backward_f64(&g, &cache.idx1, self.conv1.c_out, s1, s1);
        let (dk1, db1, _) = self.conv1.backward(&cache.x, hw, hw, &g);
        FloatClientGrads {
            conv1_w: dk1,
            conv1_b: db1,
            conv2_w: dk2,
            conv2_b: db2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FloatServerModel {
    pub fc1: FloatFc,
    pub fc2: FloatFc,
}

pub struct FloatServerCache {
    x: Vec<f64>,
    mask1: Vec<f64>,
    a1: Vec<f64>,
    mask2: Vec<f64>,
    pub yhat: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FloatServerGrads {
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
}

impl FloatServerModel {
    pub fn from_fixed(model: &crate::nn::ServerModel, cfg: &FixedPointConfig) -> Self {
        Self {
            fc1: FloatFc::from_fixed(&model.fc1_w, &model.fc1_b, cfg),
            fc2: FloatFc::from_fixed(&model.fc2_w, &model.fc2_b, cfg),
        }
    }

    pub fn forward(&self, x: &[f64]) -> FloatServerCache {
        let z1 = self.fc1.forward(x);
        let (a1, mask1) = relu_f64(&z1);
        let z2 = self.fc2.forward(&a1);
        let (yhat, mask2) = relu_f64(&z2);
        FloatServerCache {
            x: x.to_vec(),
            mask1,
            a1,
            mask2,
            yhat,
        }
    }

    /// Returns (grads, dx).
    pub fn backward(
        &self,
        cache: &FloatServerCache,
        loss_grad: &[f64],
    ) -> (FloatServerGrads, Vec<f64>) {
        let g2: Vec<f64> = loss_grad
            .iter()
            .zip(&cache.mask2)
            .map(|(a, m)| a * m)
            .collect();
        let (dw2, db2, da1) = self.fc2.backward(&cache.a1, &g2);
        let g1: Vec<f64> = da1.iter().zip(&cache.mask1).map(|(a, m)| a * m).collect();
        let (dw1, db1, dx) = self.fc1.backward(&cache.x, &g1);
        (
            FloatServerGrads {
                fc1_w: dw1,
                fc1_b: db1,
                fc2_w: dw2,
                fc2_b: db2,
            },
            dx,
        )
    }
}

/// Relative error between matched gradient vectors, with an absolute
/// floor so near-zero entries don't blow up the ratio.
pub fn max_relative_error(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r).abs() / r.abs().max(floor))
        .fold(0.0, f64::max)
}
