//! Canonical key byte layout, versioned by construction:
//!
//! ```text
//! \[1B party\]\[1B domain_bits\]\[16B root seed\]
//! \[per level: 16B seed-correction, 1B left bit, 1B right bit, 8B value-correction LE\]
//! \[8B final correction LE\]
//! ```
//!
//! Equality keys carry zero value-corrections; the layout is shared so a
//! buffer's length is fully determined by its `domain_bits` byte.

use super::prg::{PrgSeed, SEED_BYTES};
use crate::error::KeyError;

pub const LEVEL_BYTES: usize = SEED_BYTES + 1 + 1 + 8;
pub const HEADER_BYTES: usize = 2 + SEED_BYTES;

/// One tree level of public correction material; identical in both keys
/// of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionWord {
    pub seed: PrgSeed,
    pub left_bit: bool,
    pub right_bit: bool,
    pub value: u64,
}

/// One party's half of a DPF/DCF key pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FssKey {
    pub party: u8,
    pub domain_bits: u8,
    pub root_seed: PrgSeed,
    pub levels: Vec<CorrectionWord>,
    pub final_correction: u64,
}

/// Equality-test (point function) key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpfKey(pub FssKey);

/// Comparison-test key; outputs shares of β·\[x ≤ α\].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DcfKey(pub FssKey);

pub fn serialized_len(domain_bits: u8) -> usize {
    HEADER_BYTES + domain_bits as usize * LEVEL_BYTES + 8
}

pub fn serialize_key(key: &FssKey) -> Vec<u8> {
    let mut out = Vec::with_capacity(serialized_len(key.domain_bits));
    out.push(key.party);
    out.push(key.domain_bits);
    out.extend_from_slice(&key.root_seed.0);
    for cw in &key.levels {
        out.extend_from_slice(&cw.seed.0);
        out.push(cw.left_bit as u8);
        out.push(cw.right_bit as u8);
        out.extend_from_slice(&cw.value.to_le_bytes());
    }
    out.extend_from_slice(&key.final_correction.to_le_bytes());
    out
}

pub fn deserialize_key(bytes: &[u8]) -> Result<FssKey, KeyError> {
    if bytes.len() < HEADER_BYTES {
        return Err(KeyError::Truncated {
            got: bytes.len(),
            need: HEADER_BYTES,
        });
    }
    let party = bytes[0];
    if party > 1 {
        return Err(KeyError::BadParty(party));
    }
    let domain_bits = bytes[1];
    if domain_bits == 0 || domain_bits > 64 {
        return Err(KeyError::BadDomain(domain_bits));
    }
    let expected = serialized_len(domain_bits);
    if bytes.len() != expected {
        return Err(KeyError::BadLength {
            got: bytes.len(),
            expected,
            domain_bits,
        });
    }
    let mut root = [0u8; SEED_BYTES];
    root.copy_from_slice(&bytes[2..2 + SEED_BYTES]);
    let mut off = HEADER_BYTES;
    let mut levels = Vec::with_capacity(domain_bits as usize);
    for _ in 0..domain_bits {
        let mut seed = [0u8; SEED_BYTES];
        seed.copy_from_slice(&bytes[off..off + SEED_BYTES]);
        off += SEED_BYTES;
        let lb = bytes[off];
        let rb = bytes[off + 1];
        if lb > 1 {
            return Err(KeyError::BadBit(lb));
        }
        if rb > 1 {
            return Err(KeyError::BadBit(rb));
        }
        off += 2;
        let value = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        levels.push(CorrectionWord {
            seed: PrgSeed(seed),
            left_bit: lb == 1,
            right_bit: rb == 1,
            value,
        });
    }
    let final_correction = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    Ok(FssKey {
        party,
        domain_bits,
        root_seed: PrgSeed(root),
        levels,
        final_correction,
    })
}
