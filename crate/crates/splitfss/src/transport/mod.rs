//! Length-prefixed, type-tagged binary wire protocol with per-party,
//! per-direction, per-phase byte metering.

pub mod channel;
pub mod frame;
pub mod meter;

pub use channel::{exchange, loopback_pair, Channel, LoopbackChannel, TcpChannel};
pub use frame::{decode_frame, encode_frame, Frame, MsgType, HEADER_BYTES, MAX_PAYLOAD};
pub use meter::{bytes_to_mb, ByteMeter, Phase, PHASES};

use crate::tensor::RingTensor;

/// Serialize a tensor for the wire: `\[1B rank\][rank × 8B dims LE][8B·len
/// elements LE]`. Ring elements always travel as 8 bytes, row-major.
pub fn tensor_to_bytes(t: &RingTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + t.shape().len() * 8 + t.len() * 8);
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &e in t.data() {
        out.extend_from_slice(&e.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> crate::Result<RingTensor> {
    use crate::error::FrameError;
    if bytes.is_empty() {
        return Err(FrameError::Payload("empty tensor payload".into()).into());
    }
    let rank = bytes[0] as usize;
    if rank > 8 {
        return Err(FrameError::Payload(format!("tensor rank {rank} too large")).into());
    }
    let dims_end = 1 + rank * 8;
    if bytes.len() < dims_end {
        return Err(FrameError::Payload("tensor header truncated".into()).into());
    }
    let mut shape = Vec::with_capacity(rank);
    let mut expected: u128 = 1;
    for i in 0..rank {
        let d = u64::from_le_bytes(bytes[1 + i * 8..9 + i * 8].try_into().unwrap());
        expected = expected.saturating_mul(d as u128);
        shape.push(d as usize);
    }
    let body = &bytes[dims_end..];
    if expected > (MAX_PAYLOAD as u128) / 8 || body.len() as u128 != expected * 8 {
        return Err(FrameError::Payload(format!(
            "tensor body {} bytes does not match shape {:?}",
            body.len(),
            shape
        ))
        .into());
    }
    let data = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RingTensor::from_vec(&shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::FixedPointConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn tensor_wire_round_trip() {
        let cfg = FixedPointConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let t = RingTensor::random(&[3, 5, 2], &cfg, &mut rng);
        let bytes = tensor_to_bytes(&t);
        assert_eq!(tensor_from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn known_payload_size() {
        // a 128×256 tensor of 64-bit ring elements carries 262,144 payload
        // bytes plus the 1 + 2·8 byte shape header
        let t = RingTensor::zeros(&[128, 256]);
        assert_eq!(tensor_to_bytes(&t).len(), 262_144 + 17);
    }

    #[test]
    fn malformed_tensor_payloads_rejected() {
        assert!(tensor_from_bytes(&[]).is_err());
        assert!(tensor_from_bytes(&[3, 0, 0]).is_err());
        let mut good = tensor_to_bytes(&RingTensor::zeros(&[2, 2]));
        good.pop();
        assert!(tensor_from_bytes(&good).is_err());
    }
}
