//! Additive secret sharing over the ring: x = x₀ + x₁ with each part
//! uniform alone.

use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use rand::Rng;

/// One party's additive share of a tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdditiveShare {
    pub party: u8,
    pub tensor: RingTensor,
}

/// Split a secret tensor: share 0 is fresh uniform randomness, share 1 is
/// the difference.
pub fn share<R: Rng>(
    secret: &RingTensor,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> (RingTensor, RingTensor) {
    let share0 = RingTensor::random(secret.shape(), cfg, rng);
    let share1 = secret.sub(&share0, cfg).expect("same shape");
    (share0, share1)
}

pub fn reconstruct(a: &RingTensor, b: &RingTensor, cfg: &FixedPointConfig) -> RingTensor {
    a.add(b, cfg).expect("share shapes agree")
}
