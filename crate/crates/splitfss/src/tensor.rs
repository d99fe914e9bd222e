//! N-dimensional tensors of ring elements, row-major, all arithmetic
//! wrapping mod 2^ℓ.

use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingTensor {
    shape: Vec<usize>,
    data: Vec<u64>,
}

impl RingTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<u64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (= {} elements)",
                data.len(),
                shape,
                len
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64s(shape: &[usize], values: &[f64], cfg: &FixedPointConfig) -> Result<Self> {
        let data = values
            .iter()
            .map(|&v| cfg.encode(v))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(shape, data)
    }

    pub fn scalar(v: u64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// Elementwise-uniform tensor over the full ring.
    pub fn random<R: Rng>(shape: &[usize], cfg: &FixedPointConfig, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let mask = cfg.mask();
        let data = (0..len).map(|_| rng.next_u64() & mask).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                len
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self, cfg: &FixedPointConfig) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        let mask = cfg.mask();
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.wrapping_add(b) & mask)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Self, cfg: &FixedPointConfig) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        let mask = cfg.mask();
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.wrapping_sub(b) & mask)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn neg(&self, cfg: &FixedPointConfig) -> Self {
        let mask = cfg.mask();
        let data = self.data.iter().map(|&a| a.wrapping_neg() & mask).collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Elementwise product, raw scale (no truncation).
    pub fn hadamard(&self, other: &Self, cfg: &FixedPointConfig) -> Result<Self> {
        self.check_same_shape(other, "hadamard")?;
        let mask = cfg.mask();
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.wrapping_mul(b) & mask)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Multiply every element by a public ring constant, raw scale.
    pub fn scale(&self, c: u64, cfg: &FixedPointConfig) -> Self {
        let mask = cfg.mask();
        let data = self
            .data
            .iter()
            .map(|&a| a.wrapping_mul(c) & mask)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Arithmetic-shift every element right by f (exact plaintext truncation).
    pub fn trunc(&self, cfg: &FixedPointConfig) -> Self {
        let data = self.data.iter().map(|&a| cfg.trunc(a)).collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Matrix product \[m,k\]·\[k,n\] → \[m,n\], raw scale; wrapping accumulation.
    pub fn matmul(&self, other: &Self, cfg: &FixedPointConfig) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Shape(format!(
                "matmul: {:?} · {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = other.shape[1];
        let mask = cfg.mask();
        let mut out = vec![0u64; m * n];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &a) in row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for (d, &b) in dst.iter_mut().zip(brow) {
                    *d = d.wrapping_add(a.wrapping_mul(b));
                }
            }
            for d in dst.iter_mut() {
                *d &= mask;
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// \[m,n\] → \[n,m\].
    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!("transpose: {:?}", self.shape)));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![0u64; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data,
        })
    }

    pub fn decode(&self, cfg: &FixedPointConfig) -> Vec<f64> {
        self.data.iter().map(|&e| cfg.decode(e)).collect()
    }

    /// Max |decoded difference| against another tensor, in ULPs of 2^−f.
    pub fn max_ulp_diff(&self, other: &Self, cfg: &FixedPointConfig) -> Result<u64> {
        self.check_same_shape(other, "max_ulp_diff")?;
        let mut worst = 0u64;
        for (&a, &b) in self.data.iter().zip(&other.data) {
            let d = cfg.to_signed(cfg.sub(a, b)).unsigned_abs();
            worst = worst.max(d);
        }
        Ok(worst)
    }
}
