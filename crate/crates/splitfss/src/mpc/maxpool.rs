//! Secure 2×2 max-pooling for the fully-private baseline: the window max
//! as a tournament of three ReLU gadgets (max(a,b) = b + relu(a−b)), with
//! the saved comparison bits routing the gradient back to the argmax in
//! the backward pass.

use super::relu::{open_masked, secure_relu, ReluMaterial};
use super::triple::{beaver_mul, TripleHalf};
use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use crate::transport::Channel;
use rand::Rng;

/// Dealer material for one pooled tensor: three ReLU gadgets for the
/// tournament and six elementwise triples for gradient routing.
#[derive(Debug, Clone)]
pub struct MaxpoolMaterial {
    pub m1: ReluMaterial,
    pub m2: ReluMaterial,
    pub m3: ReluMaterial,
    pub backward: Vec<TripleHalf>,
}

/// Comparison bits saved by the forward pass, consumed by backward.
pub struct MaxpoolSigns {
    pub s1: RingTensor,
    pub s2: RingTensor,
    pub s3: RingTensor,
    in_shape: Vec<usize>,
}

pub fn make_maxpool_material<R: Rng>(
    window_shape: &[usize],
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<(
    (RingTensor, RingTensor, RingTensor),
    MaxpoolMaterial,
    MaxpoolMaterial,
)> {
    let (a1, r1_0, r1_1) = super::relu::make_relu_material(window_shape, cfg, rng)?;
    let (a2, r2_0, r2_1) = super::relu::make_relu_material(window_shape, cfg, rng)?;
    let (a3, r3_0, r3_1) = super::relu::make_relu_material(window_shape, cfg, rng)?;
    let mut bw0 = Vec::with_capacity(6);
    let mut bw1 = Vec::with_capacity(6);
    for _ in 0..6 {
        let (t0, t1) = super::triple::make_elem_triple(window_shape, cfg, rng)?;
        bw0.push(t0);
        bw1.push(t1);
    }
    Ok((
        (a1, a2, a3),
        MaxpoolMaterial {
            m1: r1_0,
            m2: r2_0,
            m3: r3_0,
            backward: bw0,
        },
        MaxpoolMaterial {
            m1: r1_1,
            m2: r2_1,
            m3: r3_1,
            backward: bw1,
        },
    ))
}

/// Split a \[N,C,H,W\] share into its four window corners, each \[N,C,H/2,W/2\].
fn window_corners(x: &RingTensor) -> Result<[RingTensor; 4]> {
    let s = x.shape();
    if s.len() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool expects even [N,C,H,W], got {s:?}"
        )));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = [(); 4].map(|_| vec![0u64; n * c * oh * ow]);
    let data = x.data();
    for img in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let dst = ((img * c + ch) * oh + y) * ow + xx;
                    let base = ((img * c + ch) * h + 2 * y) * w + 2 * xx;
                    out[0][dst] = data[base];
                    out[1][dst] = data[base + 1];
                    out[2][dst] = data[base + w];
                    out[3][dst] = data[base + w + 1];
                }
            }
        }
    }
    let shape = [n, c, oh, ow];
    let [o0, o1, o2, o3] = out;
    Ok([
        RingTensor::from_vec(&shape, o0)?,
        RingTensor::from_vec(&shape, o1)?,
        RingTensor::from_vec(&shape, o2)?,
        RingTensor::from_vec(&shape, o3)?,
    ])
}

/// Scatter four corner tensors back to \[N,C,H,W\].
fn scatter_corners(corners: &[RingTensor; 4], out_shape: &[usize]) -> Result<RingTensor> {
    let (n, c, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut data = vec![0u64; n * c * h * w];
    for img in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let src = ((img * c + ch) * oh + y) * ow + xx;
                    let base = ((img * c + ch) * h + 2 * y) * w + 2 * xx;
                    data[base] = corners[0].data()[src];
                    data[base + 1] = corners[1].data()[src];
                    data[base + w] = corners[2].data()[src];
                    data[base + w + 1] = corners[3].data()[src];
                }
            }
        }
    }
    RingTensor::from_vec(out_shape, data)
}

/// max(u, v) = v + relu(u − v), keeping the comparison bit share.
fn secure_pairwise_max(
    party: u8,
    u: &RingTensor,
    v: &RingTensor,
    material: &mut ReluMaterial,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<(RingTensor, RingTensor)> {
    let diff = u.sub(v, cfg)?;
    let opened = open_masked(party, &diff, &material.mask_share.clone(), chan, cfg)?;
    let (relu_sh, sign_sh) = secure_relu(&opened, material, chan, cfg)?;
    Ok((v.add(&relu_sh, cfg)?, sign_sh))
}

/// Forward secure max-pool on a \[N,C,H,W\] share.
pub fn secure_maxpool2(
    x_sh: &RingTensor,
    material: &mut MaxpoolMaterial,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<(RingTensor, MaxpoolSigns)> {
    let party = material.m1.party;
    let [a, b, c, d] = window_corners(x_sh)?;
    let (max_ab, s1) = secure_pairwise_max(party, &a, &b, &mut material.m1, chan, cfg)?;
    let (max_cd, s2) = secure_pairwise_max(party, &c, &d, &mut material.m2, chan, cfg)?;
    let (max_all, s3) = secure_pairwise_max(party, &max_ab, &max_cd, &mut material.m3, chan, cfg)?;
    Ok((
        max_all,
        MaxpoolSigns {
            s1,
            s2,
            s3,
            in_shape: x_sh.shape().to_vec(),
        },
    ))
}

/// Backward: route grad to the window argmax using the saved bits.
/// Indicators: a gets σ3·σ1, b gets σ3·(1−σ1), c gets (1−σ3)·σ2,
/// d the remainder.
pub fn secure_maxpool2_backward(
    grad_sh: &RingTensor,
    signs: &MaxpoolSigns,
    material: &mut MaxpoolMaterial,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    if material.backward.len() != 6 {
        return Err(Error::Material(
            "maxpool backward material already consumed".into(),
        ));
    }
    let mut triples: Vec<TripleHalf> = material.backward.drain(..).collect();
    let s31 = beaver_mul(&signs.s3, &signs.s1, &mut triples[0], chan, cfg)?;
    let s23 = beaver_mul(&signs.s2, &signs.s3, &mut triples[1], chan, cfg)?;
    let g_a = beaver_mul(grad_sh, &s31, &mut triples[2], chan, cfg)?;
    let g_s3 = beaver_mul(grad_sh, &signs.s3, &mut triples[3], chan, cfg)?;
    let g_s2 = beaver_mul(grad_sh, &signs.s2, &mut triples[4], chan, cfg)?;
    let g_s23 = beaver_mul(grad_sh, &s23, &mut triples[5], chan, cfg)?;
    let g_b = g_s3.sub(&g_a, cfg)?;
    let g_c = g_s2.sub(&g_s23, cfg)?;
    let g_d = grad_sh.sub(&g_s3, cfg)?.sub(&g_c, cfg)?;
    scatter_corners(&[g_a, g_b, g_c, g_d], &signs.in_shape)
}
