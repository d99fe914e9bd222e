//! The secure ReLU gadget: masking, one comparison key per element, one
//! Beaver selection.
//!
//! The sign of the hidden value x is recovered from the public masked
//! value m = x + α by the subtraction identity msb(x) = msb(m) ⊕ msb(α) ⊕
//! \[low(m) < low(α)\]: msb(m) is public, msb(α) is folded into the key
//! payload and an additive constant at keygen time, and the borrow is one
//! comparison-key evaluation over the low ℓ−1 bits. The sign test is
//! therefore exact on the whole ring. The servers then select y = b·x
//! with one elementwise Beaver product, deriving x's shares from the
//! public m and their mask shares.

use super::triple::{beaver_mul, TripleHalf};
use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::fss::{dcf, DcfKey};
use crate::tensor::RingTensor;
use crate::transport::{exchange, tensor_from_bytes, tensor_to_bytes, Channel, MsgType};
use rand::Rng;
use rayon::prelude::*;

/// One party's per-tensor ReLU material: mask share, per-element
/// comparison keys (plus the msb constant share), and the selection
/// triple. One-time use.
#[derive(Debug, Clone)]
pub struct ReluMaterial {
    pub party: u8,
    pub mask_share: RingTensor,
    pub keys: Vec<DcfKey>,
    pub const_share: RingTensor,
    pub select: TripleHalf,
    used: bool,
}

impl ReluMaterial {
    pub fn new(
        party: u8,
        mask_share: RingTensor,
        keys: Vec<DcfKey>,
        const_share: RingTensor,
        select: TripleHalf,
    ) -> Self {
        Self {
            party,
            mask_share,
            keys,
            const_share,
            select,
            used: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.mask_share.shape()
    }

    fn mark_used(&mut self) -> Result<()> {
        if self.used {
            return Err(Error::Material("ReLU material consumed twice".into()));
        }
        self.used = true;
        Ok(())
    }
}

/// Dealer side: draw the elementwise mask α, split it, and build the
/// per-element comparison keys at the mask's low bits.
pub fn make_relu_material<R: Rng>(
    shape: &[usize],
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<(RingTensor, ReluMaterial, ReluMaterial)> {
    let alpha = RingTensor::random(shape, cfg, rng);
    let (mask0, mask1) = super::share::share(&alpha, cfg, rng);
    let half = cfg.half();
    let low_mask = half - 1;
    let low_bits = (cfg.ring_bits - 1) as u8;

    // per-element keygen is the dominant dealer cost; derive one seed per
    // element first so generation can fan out deterministically
    let n = alpha.len();
    let mut elem_seeds = vec![[0u8; 32]; n];
    for s in elem_seeds.iter_mut() {
        rng.fill_bytes(s);
    }
    let keys: Vec<(DcfKey, DcfKey)> = alpha
        .data()
        .par_iter()
        .zip(elem_seeds.par_iter())
        .map(|(&a, seed)| {
            use rand::SeedableRng;
            let mut krng = rand_chacha::ChaCha12Rng::from_seed(*seed);
            let low = a & low_mask;
            let msb = a & half != 0;
            if low == 0 {
                // borrow is identically zero; issue a zero-payload key
                dcf::keygen(0, 0, low_bits, &mut krng)
            } else {
                // payload 1 − 2·msb(α) realizes msb(α) ⊕ borrow together
                // with the constant share below
                let beta = if msb { u64::MAX } else { 1 };
                dcf::keygen(low - 1, beta, low_bits, &mut krng)
            }
        })
        .collect();
    let (keys0, keys1): (Vec<_>, Vec<_>) = keys.into_iter().unzip();

    let msb_consts: Vec<u64> = alpha
        .data()
        .iter()
        .map(|&a| u64::from(a & half != 0))
        .collect();
    let consts = RingTensor::from_vec(shape, msb_consts)?;
    let (c0, c1) = super::share::share(&consts, cfg, rng);

    let (sel0, sel1) = super::triple::make_elem_triple(shape, cfg, rng)?;
    Ok((
        alpha,
        ReluMaterial::new(0, mask0, keys0, c0, sel0),
        ReluMaterial::new(1, mask1, keys1, c1, sel1),
    ))
}

/// Open x + α between the two servers: each sends its share of the masked
/// value, both reconstruct the same public tensor.
pub fn open_masked(
    party: u8,
    x_sh: &RingTensor,
    mask_share: &RingTensor,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let own = x_sh.add(mask_share, cfg)?;
    let peer = exchange(chan, party, MsgType::XPub, &tensor_to_bytes(&own))?;
    own.add(&tensor_from_bytes(&peer)?, cfg)
}

/// Shares of b = \[x ≥ 0\] from the public masked value, no communication.
pub fn sign_shares(
    x_pub: &RingTensor,
    material: &ReluMaterial,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    if x_pub.shape() != material.shape() {
        return Err(Error::Shape(format!(
            "secure relu input {:?} vs material {:?}",
            x_pub.shape(),
            material.shape()
        )));
    }
    let party = material.party;
    let half = cfg.half();
    let low_mask = half - 1;
    let mask = cfg.mask();
    let bits: Vec<u64> = x_pub
        .data()
        .par_iter()
        .zip(material.keys.par_iter())
        .zip(material.const_share.data().par_iter())
        .map(|((&m, key), &c)| {
            let m = m & mask;
            let low = m & low_mask;
            let msb_m = m & half != 0;
            // w reconstructs to msb(α) ⊕ borrow
            let w = dcf::eval(key, low).wrapping_add(c);
            // b = (1 − msb_m) + (2·msb_m − 1)·w, public term added by party 1
            let mut b = if msb_m { w } else { w.wrapping_neg() };
            if party == 1 && !msb_m {
                b = b.wrapping_add(1);
            }
            b & mask
        })
        .collect();
    RingTensor::from_vec(x_pub.shape(), bits)
}

/// Full gadget: sign shares, share derivation x_j = j·x_pub − α_j, and
/// the Beaver selection y = b·x. Returns (y share, sign share); the sign
/// share is reused by the backward pass.
pub fn secure_relu(
    x_pub: &RingTensor,
    material: &mut ReluMaterial,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<(RingTensor, RingTensor)> {
    material.mark_used()?;
    let b_sh = sign_shares(x_pub, material, cfg)?;
    let x_sh = if material.party == 1 {
        x_pub.sub(&material.mask_share, cfg)?
    } else {
        material.mask_share.neg(cfg)
    };
    // b is a raw 0/1 integer, so the product keeps x's scale: no truncation
    let y_sh = beaver_mul(&b_sh, &x_sh, &mut material.select, chan, cfg)?;
    Ok((y_sh, b_sh))
}

/// Backward: grad ⊙ b with the sign shares saved by the forward call.
pub fn secure_relu_backward(
    grad_sh: &RingTensor,
    sign_sh: &RingTensor,
    triple: &mut TripleHalf,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    beaver_mul(grad_sh, sign_sh, triple, chan, cfg)
}
