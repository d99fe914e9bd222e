//! Fixed-point encoding over the ring of integers mod 2^ℓ.
//!
//! Reals are scaled by 2^f and stored two's-complement in the low ℓ bits
//! of a `u64`. All arithmetic wraps mod 2^ℓ; truncation (arithmetic shift
//! by f) restores the scale after a multiplication.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub ring_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        // f = 20 makes fixed-point training track the double-precision
        // reference epoch for epoch; at f = 16 the quantization noise in
        // the deep convolution gradients measurably slows convergence
        Self {
            ring_bits: 64,
            frac_bits: 20,
        }
    }
}

impl FixedPointConfig {
    /// Protocol configs use ℓ ∈ {32, 64}; ℓ = 16 is additionally accepted
    /// so the exhaustive small-ring equivalence checks can run.
    pub fn new(ring_bits: u32, frac_bits: u32) -> Result<Self> {
        if !matches!(ring_bits, 16 | 32 | 64) {
            return Err(Error::Config(format!(
                "ring_bits must be 16, 32 or 64, got {ring_bits}"
            )));
        }
        if frac_bits == 0 || frac_bits >= ring_bits / 2 {
            return Err(Error::Config(format!(
                "frac_bits must satisfy 0 < f < ring_bits/2, got f={frac_bits} for ring_bits={ring_bits}"
            )));
        }
        Ok(Self {
            ring_bits,
            frac_bits,
        })
    }

    /// 16-bit / 4-fraction ring used by exhaustive gadget scans.
    pub fn small_test_ring() -> Self {
        Self {
            ring_bits: 16,
            frac_bits: 4,
        }
    }

    /// Mask selecting the low ℓ bits.
    #[inline]
    pub fn mask(&self) -> u64 {
        if self.ring_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.ring_bits) - 1
        }
    }

    /// 2^(ℓ−1), the sign bit of the ring.
    #[inline]
    pub fn half(&self) -> u64 {
        1u64 << (self.ring_bits - 1)
    }

    /// The encoding of 1.0, i.e. 2^f.
    #[inline]
    pub fn one(&self) -> u64 {
        1u64 << self.frac_bits
    }

    #[inline]
    pub fn wrap(&self, v: u64) -> u64 {
        v & self.mask()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        a.wrapping_neg() & self.mask()
    }

    /// Raw wrapping product; does not restore the fixed-point scale.
    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.mask()
    }

    /// Two's-complement interpretation of a ring element.
    #[inline]
    pub fn to_signed(&self, e: u64) -> i64 {
        let e = e & self.mask();
        if e >= self.half() {
            (e | !self.mask()) as i64
        } else {
            e as i64
        }
    }

    #[inline]
    pub fn from_signed(&self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    /// Rescale by 2^−f with round-to-nearest. Plain flooring carries a
    /// −½ ULP bias per element, which the deep backward accumulations
    /// amplify into systematic gradient inflation; rounding keeps the
    /// per-element error zero-mean.
    #[inline]
    pub fn trunc(&self, e: u64) -> u64 {
        let rounded = self.to_signed(e).wrapping_add(1i64 << (self.frac_bits - 1));
        ((rounded >> self.frac_bits) as u64) & self.mask()
    }

    /// Arithmetic shift right by f (floor); the share-truncation halves
    /// build the rounding offset out of this.
    #[inline]
    pub fn trunc_floor(&self, e: u64) -> u64 {
        ((self.to_signed(e) >> self.frac_bits) as u64) & self.mask()
    }

    /// Signed e < 0?
    #[inline]
    pub fn is_negative(&self, e: u64) -> bool {
        e & self.half() != 0
    }

    /// round(v · 2^f) mod 2^ℓ. Errors when |v| reaches 2^(ℓ−f−1).
    pub fn encode(&self, v: f64) -> Result<u64> {
        let bound = (1u64 << (self.ring_bits - self.frac_bits - 1)) as f64;
        if !v.is_finite() || v.abs() >= bound {
            return Err(Error::Overflow {
                value: v,
                bits: self.ring_bits,
                frac: self.frac_bits,
            });
        }
        let scaled = (v * self.one() as f64).round() as i64;
        Ok(self.from_signed(scaled))
    }

    /// Signed interpretation divided by 2^f.
    #[inline]
    pub fn decode(&self, e: u64) -> f64 {
        self.to_signed(e) as f64 / self.one() as f64
    }

    /// Largest representable magnitude, 2^(ℓ−f−1) − 2^(−f).
    pub fn max_value(&self) -> f64 {
        (1u64 << (self.ring_bits - self.frac_bits - 1)) as f64 - 1.0 / self.one() as f64
    }
}
