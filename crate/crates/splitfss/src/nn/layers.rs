//! Plaintext CNN layers over ring tensors: valid stride-1 convolution,
//! 2×2 max-pooling with argmax maps, ReLU, and fully-connected layers.
//! Multiply-accumulates run at raw scale and are truncated once per
//! output element; biases are added after truncation at data scale.

use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use rayon::prelude::*;

/// Valid cross-correlation of one sample: \[C_in,H,W\] with kernels
/// \[C_out,C_in,k,k\] and bias \[C_out\] → \[C_out,H−k+1,W−k+1\].
pub fn conv2d(
    input: &RingTensor,
    kernels: &RingTensor,
    bias: &RingTensor,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let is = input.shape();
    let ks = kernels.shape();
    if is.len() != 3 || ks.len() != 4 || is[0] != ks[1] {
        return Err(Error::Shape(format!("conv2d: input {is:?} kernels {ks:?}")));
    }
    let (c_in, h, w) = (is[0], is[1], is[2]);
    let (c_out, k) = (ks[0], ks[2]);
    if ks[3] != k || h < k || w < k {
        return Err(Error::Shape(format!("conv2d: input {is:?} kernels {ks:?}")));
    }
    if bias.shape() != [c_out] {
        return Err(Error::Shape(format!("conv2d bias {:?}", bias.shape())));
    }
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut out = vec![0u64; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0u64;
                for i in 0..c_in {
                    for u in 0..k {
                        let in_row = &input.data()[(i * h + y + u) * w + x..];
                        let k_row = &kernels.data()[((o * c_in + i) * k + u) * k..];
                        for v in 0..k {
                            acc = acc.wrapping_add(in_row[v].wrapping_mul(k_row[v]));
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = cfg.add(cfg.trunc(cfg.wrap(acc)), bias.data()[o]);
            }
        }
    }
    RingTensor::from_vec(&[c_out, oh, ow], out)
}

/// 2×2 stride-2 max pooling under the signed interpretation; the index
/// map (0..4 per output element) is kept for backprop routing.
pub fn maxpool2(input: &RingTensor, cfg: &FixedPointConfig) -> Result<(RingTensor, Vec<u8>)> {
    let s = input.shape();
    if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool2 needs even spatial dims, got {s:?}"
        )));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0u64; c * oh * ow];
    let mut idx = vec![0u8; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let base = (ch * h + 2 * y) * w + 2 * x;
                let window = [
                    input.data()[base],
                    input.data()[base + 1],
                    input.data()[base + w],
                    input.data()[base + w + 1],
                ];
                let mut best = 0usize;
                for cand in 1..4 {
                    if cfg.to_signed(window[cand]) > cfg.to_signed(window[best]) {
                        best = cand;
                    }
                }
                out[(ch * oh + y) * ow + x] = window[best];
                idx[(ch * oh + y) * ow + x] = best as u8;
            }
        }
    }
    Ok((RingTensor::from_vec(&[c, oh, ow], out)?, idx))
}

/// Elementwise max(0, x): signed-negative elements become zero. The
/// companion bit tensor \[x ≥ 0\] drives the backward mask.
pub fn relu(input: &RingTensor, cfg: &FixedPointConfig) -> (RingTensor, RingTensor) {
    let mut out = Vec::with_capacity(input.len());
    let mut bits = Vec::with_capacity(input.len());
    for &e in input.data() {
        if cfg.is_negative(e) {
            out.push(0);
            bits.push(0);
        } else {
            out.push(e);
            bits.push(1);
        }
    }
    (
        RingTensor::from_vec(input.shape(), out).unwrap(),
        RingTensor::from_vec(input.shape(), bits).unwrap(),
    )
}

/// One fully-connected sample: weight \[n_out,n_in\] · input \[n_in\] + bias.
pub fn fc(
    input: &RingTensor,
    weight: &RingTensor,
    bias: &RingTensor,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let n_in = input.len();
    let ws = weight.shape();
    if ws.len() != 2 || ws[1] != n_in || bias.len() != ws[0] {
        return Err(Error::Shape(format!(
            "fc: input {n_in}, weight {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    let n_out = ws[0];
    let mut out = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let mut acc = 0u64;
        let row = &weight.data()[o * n_in..(o + 1) * n_in];
        for (x, wv) in input.data().iter().zip(row) {
            acc = acc.wrapping_add(x.wrapping_mul(*wv));
        }
        out.push(cfg.add(cfg.trunc(cfg.wrap(acc)), bias.data()[o]));
    }
    RingTensor::from_vec(&[n_out], out)
}

// ------------------------------------------------------------------
// batched forms used by training

/// conv2d over a \[N,...\] batch, parallel across samples.
pub fn conv2d_batch(
    input: &RingTensor,
    kernels: &RingTensor,
    bias: &RingTensor,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("conv2d_batch input {s:?}")));
    }
    let n = s[0];
    let sample_shape = [s[1], s[2], s[3]];
    let sample_len = sample_shape.iter().product::<usize>();
    let results: Result<Vec<RingTensor>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sample = RingTensor::from_vec(
                &sample_shape,
                input.data()[i * sample_len..(i + 1) * sample_len].to_vec(),
            )?;
            conv2d(&sample, kernels, bias, cfg)
        })
        .collect();
    let results = results?;
    let out_shape = results[0].shape().to_vec();
    let mut full = Vec::with_capacity(n * results[0].len());
    for r in &results {
        full.extend_from_slice(r.data());
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&out_shape);
    RingTensor::from_vec(&shape, full)
}

pub fn maxpool2_batch(input: &RingTensor, cfg: &FixedPointConfig) -> Result<(RingTensor, Vec<u8>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("maxpool2_batch input {s:?}")));
    }
    let n = s[0];
    let sample_shape = [s[1], s[2], s[3]];
    let sample_len = sample_shape.iter().product::<usize>();
    let mut out = Vec::new();
    let mut idx = Vec::new();
    let mut out_shape = Vec::new();
    for i in 0..n {
        let sample = RingTensor::from_vec(
            &sample_shape,
            input.data()[i * sample_len..(i + 1) * sample_len].to_vec(),
        )?;
        let (o, m) = maxpool2(&sample, cfg)?;
        out_shape = o.shape().to_vec();
        out.extend_from_slice(o.data());
        idx.extend_from_slice(&m);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&out_shape);
    Ok((RingTensor::from_vec(&shape, out)?, idx))
}

/// Route pooled gradients back through the argmax map.
pub fn maxpool2_backward(grad: &RingTensor, idx: &[u8], in_shape: &[usize]) -> Result<RingTensor> {
    let gs = grad.shape();
    if gs.len() != 4 || grad.len() != idx.len() {
        return Err(Error::Shape(format!("maxpool2_backward grad {gs:?}")));
    }
    let (n, c, oh, ow) = (gs[0], gs[1], gs[2], gs[3]);
    let (h, w) = (in_shape[2], in_shape[3]);
    let mut out = vec![0u64; in_shape.iter().product()];
    for img in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let src = ((img * c + ch) * oh + y) * ow + x;
                    let which = idx[src] as usize;
                    let (dy, dx) = (which / 2, which % 2);
                    let dst = ((img * c + ch) * h + 2 * y + dy) * w + 2 * x + dx;
                    out[dst] = grad.data()[src];
                }
            }
        }
    }
    RingTensor::from_vec(in_shape, out)
}

/// Batch FC forward: x \[N,in\] → trunc(x·Wᵀ) + b, one bias row per sample.
pub fn fc_batch(
    x: &RingTensor,
    weight: &RingTensor,
    bias: &RingTensor,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let wt = weight.transpose()?;
    let mut z = x.matmul(&wt, cfg)?.trunc(cfg);
    let n_out = bias.len();
    for row in z.data_mut().chunks_exact_mut(n_out) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v = cfg.add(*v, *b);
        }
    }
    Ok(z)
}

/// Per-sample conv2d gradients, summed over the batch.
///
/// Returns (dK, db, dx); `dx` is `None` when `need_dx` is false (first
/// layer). All products truncated post-accumulation.
pub fn conv2d_backward_batch(
    input: &RingTensor,
    kernels: &RingTensor,
    grad_out: &RingTensor,
    need_dx: bool,
    cfg: &FixedPointConfig,
) -> Result<(RingTensor, RingTensor, Option<RingTensor>)> {
    let is = input.shape();
    let ks = kernels.shape();
    let gs = grad_out.shape();
    let (n, c_in, h, w) = (is[0], is[1], is[2], is[3]);
    let (c_out, k) = (ks[0], ks[2]);
    let (oh, ow) = (gs[2], gs[3]);
    if gs[0] != n || gs[1] != c_out || oh != h - k + 1 || ow != w - k + 1 {
        return Err(Error::Shape(format!(
            "conv backward: input {is:?} kernels {ks:?} grad {gs:?}"
        )));
    }
    let in_len = c_in * h * w;
    let g_len = c_out * oh * ow;

    struct PerSample {
        dk: Vec<u64>,
        db: Vec<u64>,
        dx: Option<Vec<u64>>,
    }
    let per: Vec<PerSample> = (0..n)
        .into_par_iter()
        .map(|img| {
            let x = &input.data()[img * in_len..(img + 1) * in_len];
            let g = &grad_out.data()[img * g_len..(img + 1) * g_len];
            let mut dk = vec![0u64; c_out * c_in * k * k];
            let mut db = vec![0u64; c_out];
            for o in 0..c_out {
                let gch = &g[o * oh * ow..(o + 1) * oh * ow];
                db[o] = gch.iter().fold(0u64, |a, &v| a.wrapping_add(v));
                for i in 0..c_in {
                    for u in 0..k {
                        for v in 0..k {
                            let mut acc = 0u64;
                            for y in 0..oh {
                                let grow = &gch[y * ow..(y + 1) * ow];
                                let xrow = &x[(i * h + y + u) * w + v..];
                                for (gg, xx) in grow.iter().zip(xrow) {
                                    acc = acc.wrapping_add(gg.wrapping_mul(*xx));
                                }
                            }
                            dk[((o * c_in + i) * k + u) * k + v] = acc;
                        }
                    }
                }
            }
            let dx = if need_dx {
                let mut dx = vec![0u64; in_len];
                for i in 0..c_in {
                    for y in 0..h {
                        for xx in 0..w {
                            let mut acc = 0u64;
                            for o in 0..c_out {
                                for u in 0..k {
                                    if y < u || y - u >= oh {
                                        continue;
                                    }
                                    for v in 0..k {
                                        if xx < v || xx - v >= ow {
                                            continue;
                                        }
                                        let gv = g[(o * oh + y - u) * ow + xx - v];
                                        let kv = kernels.data()[((o * c_in + i) * k + u) * k + v];
                                        acc = acc.wrapping_add(gv.wrapping_mul(kv));
                                    }
                                }
                            }
                            dx[(i * h + y) * w + xx] = acc;
                        }
                    }
                }
                Some(dx)
            } else {
                None
            };
            PerSample { dk, db, dx }
        })
        .collect();

    // reduce over samples, then truncate the summed products once
    let mut dk = vec![0u64; c_out * c_in * k * k];
    let mut db = vec![0u64; c_out];
    let mut dx = if need_dx {
        Some(vec![0u64; n * in_len])
    } else {
        None
    };
    for (img, s) in per.into_iter().enumerate() {
        for (a, b) in dk.iter_mut().zip(&s.dk) {
            *a = a.wrapping_add(*b);
        }
        for (a, b) in db.iter_mut().zip(&s.db) {
            *a = a.wrapping_add(*b);
        }
        if let (Some(dst), Some(src)) = (dx.as_mut(), s.dx) {
            dst[img * in_len..(img + 1) * in_len].copy_from_slice(&src);
        }
    }
    let dk = RingTensor::from_vec(&[c_out, c_in, k, k], dk)?.trunc(cfg);
    let db = RingTensor::from_vec(&[c_out], db.into_iter().map(|v| cfg.wrap(v)).collect())?;
    let dx = match dx {
        Some(v) => Some(RingTensor::from_vec(is, v)?.trunc(cfg)),
        None => None,
    };
    Ok((dk, db, dx))
}

/// im2col: \[N,C,H,W\] → \[N·oh·ow, C·k·k\] patch matrix (pure data
/// movement, so it applies to shares too).
pub fn unfold(x: &RingTensor, k: usize) -> Result<RingTensor> {
    let s = x.shape();
    if s.len() != 4 || s[2] < k || s[3] < k {
        return Err(Error::Shape(format!("unfold: {s:?} with k={k}")));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let cols = c * k * k;
    let mut out = vec![0u64; n * oh * ow * cols];
    for img in 0..n {
        for y in 0..oh {
            for x_ in 0..ow {
                let row = ((img * oh + y) * ow + x_) * cols;
                for ch in 0..c {
                    for u in 0..k {
                        let src = ((img * c + ch) * h + y + u) * w + x_;
                        let dst = row + (ch * k + u) * k;
                        out[dst..dst + k].copy_from_slice(&x.data()[src..src + k]);
                    }
                }
            }
        }
    }
    RingTensor::from_vec(&[n * oh * ow, cols], out)
}

/// Reshape conv kernels \[C_out,C_in,k,k\] → \[C_in·k·k, C_out\] for the
/// matmul form.
pub fn kernels_to_cols(kernels: &RingTensor) -> Result<RingTensor> {
    let s = kernels.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("kernels_to_cols: {s:?}")));
    }
    kernels
        .clone()
        .reshape(&[s[0], s[1] * s[2] * s[3]])?
        .transpose()
}

/// Patch-matrix product \[N·oh·ow, C_out\] back to feature maps
/// \[N, C_out, oh, ow\].
pub fn cols_to_maps(z: &RingTensor, n: usize, oh: usize, ow: usize) -> Result<RingTensor> {
    let s = z.shape();
    if s.len() != 2 || s[0] != n * oh * ow {
        return Err(Error::Shape(format!(
            "cols_to_maps: {s:?} for n={n} {oh}×{ow}"
        )));
    }
    let c = s[1];
    let mut out = vec![0u64; n * c * oh * ow];
    for img in 0..n {
        for y in 0..oh {
            for x_ in 0..ow {
                let row = ((img * oh + y) * ow + x_) * c;
                for ch in 0..c {
                    out[((img * c + ch) * oh + y) * ow + x_] = z.data()[row + ch];
                }
            }
        }
    }
    RingTensor::from_vec(&[n, c, oh, ow], out)
}

/// Feature maps \[N,C,oh,ow\] → patch-matrix layout \[N·oh·ow, C\].
pub fn maps_to_cols(g: &RingTensor) -> Result<RingTensor> {
    let s = g.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("maps_to_cols: {s:?}")));
    }
    let (n, c, oh, ow) = (s[0], s[1], s[2], s[3]);
    let mut out = vec![0u64; n * c * oh * ow];
    for img in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for x_ in 0..ow {
                    out[(((img * oh + y) * ow + x_) * c) + ch] =
                        g.data()[((img * c + ch) * oh + y) * ow + x_];
                }
            }
        }
    }
    RingTensor::from_vec(&[n * oh * ow, c], out)
}

/// col2im overlap-add: patch gradients \[N·oh·ow, C·k·k\] accumulated back
/// onto \[N,C,H,W\] (wrapping adds, share-local).
pub fn fold(
    cols: &RingTensor,
    out_shape: &[usize],
    k: usize,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let (n, c, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let ncols = c * k * k;
    if cols.shape() != [n * oh * ow, ncols] {
        return Err(Error::Shape(format!(
            "fold: {:?} for output {out_shape:?}",
            cols.shape()
        )));
    }
    let mut out = vec![0u64; n * c * h * w];
    for img in 0..n {
        for y in 0..oh {
            for x_ in 0..ow {
                let row = ((img * oh + y) * ow + x_) * ncols;
                for ch in 0..c {
                    for u in 0..k {
                        for v in 0..k {
                            let dst = ((img * c + ch) * h + y + u) * w + x_ + v;
                            out[dst] =
                                out[dst].wrapping_add(cols.data()[row + (ch * k + u) * k + v]);
                        }
                    }
                }
            }
        }
    }
    RingTensor::from_vec(out_shape, out.into_iter().map(|v| cfg.wrap(v)).collect())
}

/// Add a bias row to every sample row of a \[N, d\] tensor.
pub fn add_bias_rows(z: &mut RingTensor, bias: &RingTensor, cfg: &FixedPointConfig) {
    let d = bias.len();
    for row in z.data_mut().chunks_exact_mut(d) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v = cfg.add(*v, *b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::reference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg() -> FixedPointConfig {
        FixedPointConfig::default()
    }

    #[test]
    fn conv_output_sizes_match_the_stack() {
        let c = cfg();
        let x = RingTensor::zeros(&[1, 28, 28]);
        let k = RingTensor::zeros(&[16, 1, 5, 5]);
        let b = RingTensor::zeros(&[16]);
        let y = conv2d(&x, &k, &b, &c).unwrap();
        assert_eq!(y.shape(), &[16, 24, 24]);
    }

    #[test]
    fn identity_kernel_crops_input() {
        let c = cfg();
        let vals: Vec<f64> = (0..36).map(|i| i as f64 / 7.0 - 2.0).collect();
        let x = RingTensor::from_f64s(&[1, 6, 6], &vals, &c).unwrap();
        // delta kernel at the top-left corner selects input[y, x]
        let mut kvals = vec![0.0; 9];
        kvals[0] = 1.0;
        let k = RingTensor::from_f64s(&[1, 1, 3, 3], &kvals, &c).unwrap();
        let b = RingTensor::zeros(&[1]);
        let y = conv2d(&x, &k, &b, &c).unwrap();
        for yy in 0..4 {
            for xx in 0..4 {
                assert_eq!(y.data()[yy * 4 + xx], x.data()[yy * 6 + xx]);
            }
        }
    }

    #[test]
    fn conv_matches_bruteforce_oracle() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = reference::random_small_tensor(&[2, 6, 6], 2.0, &c, &mut rng);
            let k = reference::random_small_tensor(&[3, 2, 3, 3], 1.0, &c, &mut rng);
            let b = reference::random_small_tensor(&[3], 0.5, &c, &mut rng);
            let fast = conv2d(&x, &k, &b, &c).unwrap();
            let slow = reference::conv2d_bruteforce(&x, &k, &b, &c);
            assert!(fast.max_ulp_diff(&slow, &c).unwrap() <= 1);
        }
    }

    #[test]
    fn pool_shapes_and_bruteforce() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = reference::random_small_tensor(&[1, 24, 24], 3.0, &c, &mut rng);
        let (y, _) = maxpool2(&x, &c).unwrap();
        assert_eq!(y.shape(), &[1, 12, 12]);
        for _ in 0..50 {
            let x = reference::random_small_tensor(&[1, 4, 4], 5.0, &c, &mut rng);
            let (fast, idx) = maxpool2(&x, &c).unwrap();
            let slow = reference::maxpool2_bruteforce(&x, &c);
            assert_eq!(fast, slow);
            // index map picks the element it claims
            for (i, &which) in idx.iter().enumerate() {
                let (y, x_) = (i / 2, i % 2);
                let base = 2 * y * 4 + 2 * x_;
                let offs = [0, 1, 4, 5];
                assert_eq!(fast.data()[i], x.data()[base + offs[which as usize]]);
            }
        }
    }

    #[test]
    fn constant_tensor_pools_to_itself_with_zero_indices() {
        let c = cfg();
        let x = RingTensor::from_f64s(&[1, 4, 4], &[1.5; 16], &c).unwrap();
        let (y, idx) = maxpool2(&x, &c).unwrap();
        assert!(y.data().iter().all(|&v| v == c.encode(1.5).unwrap()));
        assert!(idx.iter().all(|&i| i == 0));
    }

    #[test]
    fn relu_cases() {
        let c = cfg();
        let x = RingTensor::from_f64s(&[3], &[-2.5, 3.25, 0.0], &c).unwrap();
        let (y, bits) = relu(&x, &c);
        assert_eq!(y.decode(&c), vec![0.0, 3.25, 0.0]);
        assert_eq!(bits.data(), &[0, 1, 1]);
    }

    #[test]
    fn fc_identity_and_zero_weight() {
        let c = cfg();
        let x = RingTensor::from_f64s(&[3], &[1.0, -2.0, 0.5], &c).unwrap();
        let eye =
            RingTensor::from_f64s(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &c)
                .unwrap();
        let zero_b = RingTensor::zeros(&[3]);
        assert_eq!(fc(&x, &eye, &zero_b, &c).unwrap(), x);
        let zero_w = RingTensor::zeros(&[2, 3]);
        let b = RingTensor::from_f64s(&[2], &[0.25, -0.75], &c).unwrap();
        assert_eq!(fc(&x, &zero_w, &b, &c).unwrap(), b);
    }

    #[test]
    fn fc_matches_double_loop_oracle() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = reference::random_small_tensor(&[4], 2.0, &c, &mut rng);
            let w = reference::random_small_tensor(&[3, 4], 1.0, &c, &mut rng);
            let b = reference::random_small_tensor(&[3], 0.5, &c, &mut rng);
            let fast = fc(&x, &w, &b, &c).unwrap();
            let slow = reference::fc_bruteforce(&x, &w, &b, &c);
            assert!(fast.max_ulp_diff(&slow, &c).unwrap() <= 1);
        }
    }

    #[test]
    fn im2col_route_equals_direct_convolution() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = reference::random_small_tensor(&[2, 3, 7, 7], 1.5, &c, &mut rng);
        let k = reference::random_small_tensor(&[4, 3, 3, 3], 1.0, &c, &mut rng);
        let b = reference::random_small_tensor(&[4], 0.5, &c, &mut rng);
        let direct = conv2d_batch(&x, &k, &b, &c).unwrap();
        let cols = unfold(&x, 3).unwrap();
        let wcol = kernels_to_cols(&k).unwrap();
        let mut z = cols.matmul(&wcol, &c).unwrap().trunc(&c);
        add_bias_rows(&mut z, &b, &c);
        let via_cols = cols_to_maps(&z, 2, 5, 5).unwrap();
        assert_eq!(direct, via_cols);
    }

    #[test]
    fn fold_is_adjoint_of_unfold() {
        // fold(unfold(x)) multiplies each pixel by its patch multiplicity
        let c = cfg();
        let x = RingTensor::from_f64s(&[1, 1, 3, 3], &[1.0; 9], &c).unwrap();
        let cols = unfold(&x, 2).unwrap();
        let back = fold(&cols, &[1, 1, 3, 3], 2, &c).unwrap();
        let mult: Vec<f64> = back.decode(&c);
        assert_eq!(mult, vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn maps_round_trip_through_col_layout() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let x = RingTensor::random(&[2, 5, 3, 4], &c, &mut rng);
        let cols = maps_to_cols(&x).unwrap();
        assert_eq!(cols.shape(), &[2 * 3 * 4, 5]);
        assert_eq!(cols_to_maps(&cols, 2, 3, 4).unwrap(), x);
    }

    #[test]
    fn oracle_agreement_many_random_tensors() {
        // 1000 random small tensors across the three layer kinds
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..334 {
            let x = reference::random_small_tensor(&[1, 6, 6], 2.0, &c, &mut rng);
            let k = reference::random_small_tensor(&[1, 1, 3, 3], 1.0, &c, &mut rng);
            let b = reference::random_small_tensor(&[1], 0.5, &c, &mut rng);
            assert!(
                conv2d(&x, &k, &b, &c)
                    .unwrap()
                    .max_ulp_diff(&reference::conv2d_bruteforce(&x, &k, &b, &c), &c)
                    .unwrap()
                    <= 1
            );
            let v = reference::random_small_tensor(&[8], 2.0, &c, &mut rng);
            let w = reference::random_small_tensor(&[5, 8], 1.0, &c, &mut rng);
            let vb = reference::random_small_tensor(&[5], 0.5, &c, &mut rng);
            assert!(
                fc(&v, &w, &vb, &c)
                    .unwrap()
                    .max_ulp_diff(&reference::fc_bruteforce(&v, &w, &vb, &c), &c)
                    .unwrap()
                    <= 1
            );
            let p = reference::random_small_tensor(&[2, 4, 4], 3.0, &c, &mut rng);
            assert_eq!(
                maxpool2(&p, &c).unwrap().0,
                reference::maxpool2_bruteforce(&p, &c)
            );
        }
    }
}
