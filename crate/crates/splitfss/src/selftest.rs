//! The release-gate self-test: exhaustive and sampled correctness of the
//! comparison and equality keys, the statistical key-hiding proxies, and
//! the small-ring ReLU equivalence scan. Each suite reports pass/fail
//! independently so a corrupted primitive is pinpointed.

use crate::fixed::FixedPointConfig;
use crate::fss::{dcf, dpf};
use crate::mpc;
use crate::stats::{byte_frequency_p, ks_two_sample};
use crate::tensor::RingTensor;
use crate::transport::loopback_pair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn all_pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&format!(
                "{} {:<38} {}\n",
                if s.pass { "PASS" } else { "FAIL" },
                s.name,
                s.detail
            ));
        }
        out
    }
}

fn point_exhaustive(bits: u8, corrupt: bool, rng: &mut ChaCha12Rng) -> SuiteResult {
    let domain = 1u64 << bits;
    let mut mismatches = 0u64;
    let mut cases = 0u64;
    for alpha in 0..domain {
        let beta = 1 + alpha % 251;
        let (k0, mut k1) = dpf::keygen(alpha, beta, bits, rng);
        if corrupt && alpha == domain / 2 {
            k1.0.levels[1].seed.0[0] ^= 1;
        }
        for x in 0..domain {
            let got = dpf::eval(&k0, x).wrapping_add(dpf::eval(&k1, x));
            let expect = if x == alpha { beta } else { 0 };
            if got != expect {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    SuiteResult {
        name: format!("equality exhaustive {bits}-bit"),
        pass: mismatches == 0,
        detail: format!("{cases} cases, {mismatches} mismatches"),
    }
}

fn comparison_exhaustive(bits: u8, corrupt: bool, rng: &mut ChaCha12Rng) -> SuiteResult {
    let domain = 1u64 << bits;
    let mut mismatches = 0u64;
    let mut cases = 0u64;
    for alpha in 0..domain {
        let beta = 1 + alpha % 241;
        let (k0, mut k1) = dcf::keygen(alpha, beta, bits, rng);
        if corrupt && alpha == domain / 3 {
            k1.0.levels[2].value = k1.0.levels[2].value.wrapping_add(1);
        }
        for x in 0..domain {
            let got = dcf::eval(&k0, x).wrapping_add(dcf::eval(&k1, x));
            let expect = if x <= alpha { beta } else { 0 };
            if got != expect {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    SuiteResult {
        name: format!("comparison exhaustive {bits}-bit"),
        pass: mismatches == 0,
        detail: format!("{cases} cases, {mismatches} mismatches"),
    }
}

fn sampled_wide(bits: u8, samples: usize, rng: &mut ChaCha12Rng) -> SuiteResult {
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    let mut mismatches = 0u64;
    for _ in 0..samples {
        let alpha = rng.next_u64() & mask;
        let beta = rng.next_u64();
        let x = rng.next_u64() & mask;
        let (d0, d1) = dpf::keygen(alpha, beta, bits, rng);
        let got = dpf::eval(&d0, x).wrapping_add(dpf::eval(&d1, x));
        if got != if x == alpha { beta } else { 0 } {
            mismatches += 1;
        }
        let (c0, c1) = dcf::keygen(alpha, beta, bits, rng);
        let got = dcf::eval(&c0, x).wrapping_add(dcf::eval(&c1, x));
        if got != if x <= alpha { beta } else { 0 } {
            mismatches += 1;
        }
        let got = dcf::eval(&c0, alpha).wrapping_add(dcf::eval(&c1, alpha));
        if got != beta {
            mismatches += 1;
        }
    }
    SuiteResult {
        name: format!("equality+comparison sampled {bits}-bit"),
        pass: mismatches == 0,
        detail: format!("{samples} random (α, x) pairs, {mismatches} mismatches"),
    }
}

/// Single-key output marginal: frequency-uniform low byte, and the
/// distribution must not depend on α (two-sample KS).
fn marginal_uniformity(samples: usize, rng: &mut ChaCha12Rng) -> SuiteResult {
    let x = 0x1234_5678u64;
    let collect = |alpha: u64, rng: &mut ChaCha12Rng| -> Vec<u64> {
        (0..samples)
            .map(|_| {
                let (k0, _k1) = dcf::keygen(alpha, 1, 32, rng);
                dcf::eval(&k0, x)
            })
            .collect()
    };
    let sample_a = collect(0x0f0f_0f0f, rng);
    let sample_b = collect(0xf0f0_f0f0, rng);
    let p_freq_a = byte_frequency_p(&sample_a);
    let p_freq_b = byte_frequency_p(&sample_b);
    let to_unit =
        |v: &[u64]| -> Vec<f64> { v.iter().map(|&e| e as f64 / u64::MAX as f64).collect() };
    let (_, p_ks) = ks_two_sample(&to_unit(&sample_a), &to_unit(&sample_b));
    let pass = p_freq_a > 0.01 && p_freq_b > 0.01 && p_ks > 0.01;
    SuiteResult {
        name: "single-key marginal uniformity".into(),
        pass,
        detail: format!("freq p = {p_freq_a:.3}/{p_freq_b:.3}, KS p = {p_ks:.3}"),
    }
}

/// End-to-end gadget equivalence on the 16-bit test ring, full domain.
fn relu_small_ring_exhaustive() -> SuiteResult {
    let cfg = FixedPointConfig::small_test_ring();
    let mut rng = ChaCha12Rng::seed_from_u64(0x5e1f);
    let all: Vec<u64> = (0..=cfg.mask()).collect();
    let shape = [all.len()];
    let x = RingTensor::from_vec(&shape, all.clone()).unwrap();
    let (alpha, mut m0, mut m1) = match mpc::make_relu_material(&shape, &cfg, &mut rng) {
        Ok(v) => v,
        Err(e) => {
            return SuiteResult {
                name: "secure relu small-ring exhaustive".into(),
                pass: false,
                detail: format!("material generation failed: {e}"),
            }
        }
    };
    let x_pub = x.add(&alpha, &cfg).unwrap();
    let (mut c0, mut c1) = loopback_pair();
    let cfg1 = cfg;
    let xp = x_pub.clone();
    let handle =
        std::thread::spawn(move || mpc::secure_relu(&xp, &mut m1, &mut c1, &cfg1).unwrap());
    let (y0, _) = mpc::secure_relu(&x_pub, &mut m0, &mut c0, &cfg).unwrap();
    let (y1, _) = handle.join().unwrap();
    let y = mpc::reconstruct(&y0, &y1, &cfg);
    let mut mismatches = 0u64;
    for (i, &v) in all.iter().enumerate() {
        let expect = if cfg.is_negative(v) { 0 } else { v };
        if y.data()[i] != expect {
            mismatches += 1;
        }
    }
    SuiteResult {
        name: "secure relu small-ring exhaustive".into(),
        pass: mismatches == 0,
        detail: format!("{} inputs, {mismatches} mismatches", all.len()),
    }
}

/// Run every suite. `inject_corruption` flips one correction word inside
/// the exhaustive suites, which must then fail.
pub fn run_fss_selftest(wide_bits: &[u8], inject_corruption: bool) -> SelftestReport {
    let mut rng = ChaCha12Rng::seed_from_u64(0xf55_7e57);
    let mut suites = Vec::new();
    suites.push(point_exhaustive(8, inject_corruption, &mut rng));
    suites.push(comparison_exhaustive(8, inject_corruption, &mut rng));
    for &bits in wide_bits {
        suites.push(sampled_wide(bits, 10_000, &mut rng));
    }
    suites.push(marginal_uniformity(10_000, &mut rng));
    suites.push(relu_small_ring_exhaustive());
    SelftestReport { suites }
}
