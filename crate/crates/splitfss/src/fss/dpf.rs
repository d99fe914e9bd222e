//! Distributed point function: the equality test.
//!
//! A key pair jointly encodes the point function that is β at α and zero
//! elsewhere; each key alone is computationally independent of α. Output
//! shares are arithmetic over ℤ_{2^64}: `eval(0, k0, x) + eval(1, k1, x)`
//! (wrapping) reconstructs β·\[x = α\]. Evaluation walks one root-to-leaf
//! path of a depth-n binary tree, re-synchronizing the two parties'
//! pseudo-random states with one public correction word per level
//! everywhere off the root-to-α path.

use super::keys::{CorrectionWord, DpfKey, FssKey};
use super::prg::{self, PrgSeed};
use rand::Rng;

#[inline]
fn bit_msb_first(x: u64, domain_bits: u8, level: usize) -> bool {
    (x >> (domain_bits as usize - 1 - level)) & 1 == 1
}

fn random_seed<R: Rng>(rng: &mut R) -> PrgSeed {
    let mut s = [0u8; prg::SEED_BYTES];
    rng.fill_bytes(&mut s);
    PrgSeed(s)
}

/// Generate a key pair for the point function β·\[x = α\].
///
/// `alpha` must fit in `domain_bits`; `beta` lives in ℤ_{2^64} (callers
/// working mod 2^ℓ reduce reconstructed outputs).
pub fn keygen<R: Rng>(alpha: u64, beta: u64, domain_bits: u8, rng: &mut R) -> (DpfKey, DpfKey) {
    assert!(domain_bits >= 1 && domain_bits <= 64, "domain_bits 1..=64");
    if domain_bits < 64 {
        assert!(alpha < (1u64 << domain_bits), "alpha outside domain");
    }
    let root0 = random_seed(rng);
    let root1 = random_seed(rng);
    let (mut s0, mut s1) = (root0, root1);
    let (mut t0, mut t1) = (false, true);
    let mut levels = Vec::with_capacity(domain_bits as usize);

    for level in 0..domain_bits as usize {
        let e0 = prg::expand(&s0);
        let e1 = prg::expand(&s1);
        let a = bit_msb_first(alpha, domain_bits, level);
        // keep the child on the α path, correct the other side to collapse
        let (keep0_seed, keep0_bit, lose0_seed) = if a {
            (e0.right_seed, e0.right_bit, e0.left_seed)
        } else {
            (e0.left_seed, e0.left_bit, e0.right_seed)
        };
        let (keep1_seed, keep1_bit, lose1_seed) = if a {
            (e1.right_seed, e1.right_bit, e1.left_seed)
        } else {
            (e1.left_seed, e1.left_bit, e1.right_seed)
        };
        let seed_cw = lose0_seed.xor(&lose1_seed);
        let left_cw = e0.left_bit ^ e1.left_bit ^ a ^ true;
        let right_cw = e0.right_bit ^ e1.right_bit ^ a;
        levels.push(CorrectionWord {
            seed: seed_cw,
            left_bit: left_cw,
            right_bit: right_cw,
            value: 0,
        });
        let keep_cw = if a { right_cw } else { left_cw };
        s0 = if t0 {
            keep0_seed.xor(&seed_cw)
        } else {
            keep0_seed
        };
        s1 = if t1 {
            keep1_seed.xor(&seed_cw)
        } else {
            keep1_seed
        };
        t0 = keep0_bit ^ (t0 & keep_cw);
        t1 = keep1_bit ^ (t1 & keep_cw);
    }

    let mut final_cw = beta
        .wrapping_sub(prg::convert(&s0))
        .wrapping_add(prg::convert(&s1));
    if t1 {
        final_cw = final_cw.wrapping_neg();
    }

    let mk = |party: u8, root: PrgSeed| {
        DpfKey(FssKey {
            party,
            domain_bits,
            root_seed: root,
            levels: levels.clone(),
            final_correction: final_cw,
        })
    };
    (mk(0, root0), mk(1, root1))
}

/// Evaluate one party's key at a public point; returns an arithmetic
/// share over ℤ_{2^64}.
pub fn eval(key: &DpfKey, x: u64) -> u64 {
    let k = &key.0;
    debug_assert!(k.domain_bits == 64 || x < (1u64 << k.domain_bits));
    let mut s = k.root_seed;
    let mut t = k.party == 1;
    for (level, cw) in k.levels.iter().enumerate() {
        let e = prg::expand(&s);
        let (child_seed, child_bit, cw_bit) = if bit_msb_first(x, k.domain_bits, level) {
            (e.right_seed, e.right_bit, cw.right_bit)
        } else {
            (e.left_seed, e.left_bit, cw.left_bit)
        };
        s = if t {
            child_seed.xor(&cw.seed)
        } else {
            child_seed
        };
        t = child_bit ^ (t & cw_bit);
    }
    let mut out = prg::convert(&s);
    if t {
        out = out.wrapping_add(k.final_correction);
    }
    if k.party == 1 {
        out = out.wrapping_neg();
    }
    out
}
