//! Distributed comparison function: the comparison test.
//!
//! A key pair encodes β·\[x ≤ α\] — the convention here includes the
//! equality terminal, so both the below-threshold leaves and the x = α
//! leaf emit the payload. Callers needing the strict test subtract an
//! equality key's output.
//!
//! The tree walk matches the point function, but every level additionally
//! emits a label share: off the special path the two parties' labels
//! cancel; on the path the single public value-correction per level makes
//! the pair of labels sum to β exactly when the walk exits on the
//! less-than side, and to a telescoping remainder otherwise. The final
//! correction settles the remainder for x = α. Each party returns the
//! wrapping sum of all its labels.

use super::keys::{CorrectionWord, DcfKey, FssKey};
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

/// Generate a key pair for β·\[x ≤ α\] over a `domain_bits`-bit domain.
pub fn keygen<R: Rng>(alpha: u64, beta: u64, domain_bits: u8, rng: &mut R) -> (DcfKey, DcfKey) {
    assert!(domain_bits >= 1 && domain_bits <= 64, "domain_bits 1..=64");
    if domain_bits < 64 {
        assert!(alpha < (1u64 << domain_bits), "alpha outside domain");
    }
    let root0 = random_seed(rng);
    let root1 = random_seed(rng);
    let (mut s0, mut s1) = (root0, root1);
    let (mut t0, mut t1) = (false, true);
    let mut v_alpha: u64 = 0;
    let mut levels = Vec::with_capacity(domain_bits as usize);

    for level in 0..domain_bits as usize {
        let e0 = prg::expand(&s0);
        let e1 = prg::expand(&s1);
        let a = bit_msb_first(alpha, domain_bits, level);
        let (keep0_seed, keep0_bit, keep0_val, lose0_seed, lose0_val) = if a {
            (
                e0.right_seed,
                e0.right_bit,
                e0.right_value,
                e0.left_seed,
                e0.left_value,
            )
        } else {
            (
                e0.left_seed,
                e0.left_bit,
                e0.left_value,
                e0.right_seed,
                e0.right_value,
            )
        };
        let (keep1_seed, keep1_bit, keep1_val, lose1_seed, lose1_val) = if a {
            (
                e1.right_seed,
                e1.right_bit,
                e1.right_value,
                e1.left_seed,
                e1.left_value,
            )
        } else {
            (
                e1.left_seed,
                e1.left_bit,
                e1.left_value,
                e1.right_seed,
                e1.right_value,
            )
        };

        let seed_cw = lose0_seed.xor(&lose1_seed);
        // value correction: exiting on the lose side must reconstruct to
        // β when that side is below α (α-bit 1 ⇒ lose = left), 0 when
        // above, with the path remainder v_alpha settled either way
        let mut v_cw = lose1_val.wrapping_sub(lose0_val).wrapping_sub(v_alpha);
        if a {
            // lose side is the left (less-than) branch
            v_cw = v_cw.wrapping_add(beta);
        }
        if t1 {
            v_cw = v_cw.wrapping_neg();
        }
        let signed_cw = if t1 { v_cw.wrapping_neg() } else { v_cw };
        v_alpha = v_alpha
            .wrapping_sub(keep1_val)
            .wrapping_add(keep0_val)
            .wrapping_add(signed_cw);

        let left_cw = e0.left_bit ^ e1.left_bit ^ a ^ true;
        let right_cw = e0.right_bit ^ e1.right_bit ^ a;
        levels.push(CorrectionWord {
            seed: seed_cw,
            left_bit: left_cw,
            right_bit: right_cw,
            value: v_cw,
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

    // terminal also pays β: the x = α path is part of the ≤ set
    let mut final_cw = prg::convert(&s1)
        .wrapping_sub(prg::convert(&s0))
        .wrapping_sub(v_alpha)
        .wrapping_add(beta);
    if t1 {
        final_cw = final_cw.wrapping_neg();
    }

    let mk = |party: u8, root: PrgSeed| {
        DcfKey(FssKey {
            party,
            domain_bits,
            root_seed: root,
            levels: levels.clone(),
            final_correction: final_cw,
        })
    };
    (mk(0, root0), mk(1, root1))
}

/// Evaluate one party's comparison key at a public point; arithmetic
/// share over ℤ_{2^64}.
pub fn eval(key: &DcfKey, x: u64) -> u64 {
    let k = &key.0;
    debug_assert!(k.domain_bits == 64 || x < (1u64 << k.domain_bits));
    let negate = k.party == 1;
    let mut s = k.root_seed;
    let mut t = k.party == 1;
    let mut out: u64 = 0;
    for (level, cw) in k.levels.iter().enumerate() {
        let e = prg::expand(&s);
        let (child_seed, child_bit, cw_bit, label) = if bit_msb_first(x, k.domain_bits, level) {
            (e.right_seed, e.right_bit, cw.right_bit, e.right_value)
        } else {
            (e.left_seed, e.left_bit, cw.left_bit, e.left_value)
        };
        let mut contrib = label;
        if t {
            contrib = contrib.wrapping_add(cw.value);
        }
        if negate {
            contrib = contrib.wrapping_neg();
        }
        out = out.wrapping_add(contrib);
        s = if t {
            child_seed.xor(&cw.seed)
        } else {
            child_seed
        };
        t = child_bit ^ (t & cw_bit);
    }
    let mut terminal = prg::convert(&s);
    if t {
        terminal = terminal.wrapping_add(k.final_correction);
    }
    if negate {
        terminal = terminal.wrapping_neg();
    }
    out.wrapping_add(terminal)
}
