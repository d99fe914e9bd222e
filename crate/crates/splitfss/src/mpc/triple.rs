//! Dealer-issued multiplication triples and the Beaver product protocol.
//!
//! A triple (a, b, c = a·b) is shared between the two servers; one secure
//! product opens ε = x − a and δ = y − b (the only values on the wire,
//! both uniform) and assembles z_j = j·ε·δ + ε·b_j + a_j·δ + c_j.

use super::share::share;
use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use crate::transport::{exchange, tensor_from_bytes, tensor_to_bytes, Channel, MsgType};
use rand::Rng;

/// One party's half of a multiplication triple. `matrix` selects the
/// product: matrix triples satisfy c = a·b for the fixed (m×k)·(k×n)
/// shapes of one linear layer, elementwise triples satisfy c = a⊙b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleHalf {
    pub party: u8,
    pub matrix: bool,
    pub a: RingTensor,
    pub b: RingTensor,
    pub c: RingTensor,
    used: bool,
}

impl TripleHalf {
    pub fn new(party: u8, matrix: bool, a: RingTensor, b: RingTensor, c: RingTensor) -> Self {
        Self {
            party,
            matrix,
            a,
            b,
            c,
            used: false,
        }
    }

    pub fn is_used(&self) -> bool {
        self.used
    }

    fn mark_used(&mut self) -> Result<()> {
        if self.used {
            return Err(Error::Material(
                "multiplication triple consumed twice".into(),
            ));
        }
        self.used = true;
        Ok(())
    }
}

/// Generate one matrix triple for shapes (m×k)·(k×n).
pub fn make_matrix_triple<R: Rng>(
    shape_a: &[usize],
    shape_b: &[usize],
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<(TripleHalf, TripleHalf)> {
    let a = RingTensor::random(shape_a, cfg, rng);
    let b = RingTensor::random(shape_b, cfg, rng);
    let c = a.matmul(&b, cfg)?;
    let (a0, a1) = share(&a, cfg, rng);
    let (b0, b1) = share(&b, cfg, rng);
    let (c0, c1) = share(&c, cfg, rng);
    Ok((
        TripleHalf::new(0, true, a0, b0, c0),
        TripleHalf::new(1, true, a1, b1, c1),
    ))
}

/// Generate one elementwise triple of the given shape.
pub fn make_elem_triple<R: Rng>(
    shape: &[usize],
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<(TripleHalf, TripleHalf)> {
    let a = RingTensor::random(shape, cfg, rng);
    let b = RingTensor::random(shape, cfg, rng);
    let c = a.hadamard(&b, cfg)?;
    let (a0, a1) = share(&a, cfg, rng);
    let (b0, b1) = share(&b, cfg, rng);
    let (c0, c1) = share(&c, cfg, rng);
    Ok((
        TripleHalf::new(0, false, a0, b0, c0),
        TripleHalf::new(1, false, a1, b1, c1),
    ))
}

fn two_tensors_to_bytes(a: &RingTensor, b: &RingTensor) -> Vec<u8> {
    let ab = tensor_to_bytes(a);
    let bb = tensor_to_bytes(b);
    let mut out = Vec::with_capacity(8 + ab.len() + bb.len());
    out.extend_from_slice(&(ab.len() as u64).to_le_bytes());
    out.extend_from_slice(&ab);
    out.extend_from_slice(&bb);
    out
}

fn two_tensors_from_bytes(bytes: &[u8]) -> Result<(RingTensor, RingTensor)> {
    use crate::error::FrameError;
    if bytes.len() < 8 {
        return Err(FrameError::Payload("opened pair truncated".into()).into());
    }
    let alen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + alen {
        return Err(FrameError::Payload("opened pair truncated".into()).into());
    }
    Ok((
        tensor_from_bytes(&bytes[8..8 + alen])?,
        tensor_from_bytes(&bytes[8 + alen..])?,
    ))
}

/// One Beaver product on shares. Raw scale: fixed-point callers follow
/// with [`truncate_local`]; bit-select callers must not.
pub fn beaver_mul(
    x_sh: &RingTensor,
    y_sh: &RingTensor,
    triple: &mut TripleHalf,
    chan: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    triple.mark_used()?;
    if x_sh.shape() != triple.a.shape() || y_sh.shape() != triple.b.shape() {
        return Err(Error::Shape(format!(
            "beaver operands {:?}/{:?} vs triple {:?}/{:?}",
            x_sh.shape(),
            y_sh.shape(),
            triple.a.shape(),
            triple.b.shape()
        )));
    }
    let party = triple.party;
    let eps_sh = x_sh.sub(&triple.a, cfg)?;
    let del_sh = y_sh.sub(&triple.b, cfg)?;
    let opened = exchange(
        chan,
        party,
        MsgType::XPub,
        &two_tensors_to_bytes(&eps_sh, &del_sh),
    )?;
    let (peer_eps, peer_del) = two_tensors_from_bytes(&opened)?;
    let eps = eps_sh.add(&peer_eps, cfg)?;
    let del = del_sh.add(&peer_del, cfg)?;
    let mut z = if triple.matrix {
        let mut z = eps.matmul(&triple.b, cfg)?;
        z = z.add(&triple.a.matmul(&del, cfg)?, cfg)?;
        z = z.add(&triple.c, cfg)?;
        if party == 1 {
            z = z.add(&eps.matmul(&del, cfg)?, cfg)?;
        }
        z
    } else {
        let mut z = eps.hadamard(&triple.b, cfg)?;
        z = z.add(&triple.a.hadamard(&del, cfg)?, cfg)?;
        z = z.add(&triple.c, cfg)?;
        if party == 1 {
            z = z.add(&eps.hadamard(&del, cfg)?, cfg)?;
        }
        z
    };
    // elementwise outputs keep the operand shape; matrix outputs are [m,n]
    if !triple.matrix {
        z = z.reshape(&x_sh.shape().to_vec())?;
    }
    Ok(z)
}

/// Local share truncation by f bits: party 0 folds in the
/// round-to-nearest offset and arithmetic-shifts its share, party 1
/// negates, floor-shifts, negates. Reconstruction is within 1 ULP of the
/// rounding truncation except with probability ~|x|/2^(ℓ−1).
pub fn truncate_local(party: u8, share: &RingTensor, cfg: &FixedPointConfig) -> RingTensor {
    if party == 0 {
        // trunc() adds the ½ ULP rounding offset exactly once
        share.trunc(cfg)
    } else {
        let data = share
            .data()
            .iter()
            .map(|&e| cfg.neg(cfg.trunc_floor(cfg.neg(e))))
            .collect();
        RingTensor::from_vec(share.shape(), data).expect("shape preserved")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::share::{reconstruct, share};
    use crate::transport::loopback_pair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::thread;

    fn cfg() -> FixedPointConfig {
        FixedPointConfig::default()
    }

    #[test]
    fn scalar_triples_verify() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (t0, t1) = make_elem_triple(&[1], &c, &mut rng).unwrap();
            let a = reconstruct(&t0.a, &t1.a, &c);
            let b = reconstruct(&t0.b, &t1.b, &c);
            let prod = reconstruct(&t0.c, &t1.c, &c);
            assert_eq!(a.hadamard(&b, &c).unwrap(), prod);
        }
    }

    #[test]
    fn fc_shaped_matrix_triple_verifies_exactly() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (t0, t1) = make_matrix_triple(&[1, 256], &[256, 100], &c, &mut rng).unwrap();
        let a = reconstruct(&t0.a, &t1.a, &c);
        let b = reconstruct(&t0.b, &t1.b, &c);
        let prod = reconstruct(&t0.c, &t1.c, &c);
        assert_eq!(a.matmul(&b, &c).unwrap(), prod);
    }

    #[test]
    fn triple_reuse_rejected() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = RingTensor::random(&[2, 2], &c, &mut rng);
        let (x0, x1) = share(&x, &c, &mut rng);
        let (mut t0, mut t1) = make_matrix_triple(&[2, 2], &[2, 2], &c, &mut rng).unwrap();
        let (mut c0, mut c1) = loopback_pair();
        let x1c = x1.clone();
        let handle = thread::spawn(move || {
            let z = beaver_mul(&x1c.clone(), &x1c, &mut t1, &mut c1, &cfg()).unwrap();
            let again = beaver_mul(&x1c.clone(), &x1c, &mut t1, &mut c1, &cfg());
            (z, again.is_err())
        });
        let _z0 = beaver_mul(&x0.clone(), &x0, &mut t0, &mut c0, &c).unwrap();
        let again0 = beaver_mul(&x0.clone(), &x0, &mut t0, &mut c0, &c);
        assert!(matches!(again0, Err(Error::Material(_))));
        let (_z1, reuse_err) = handle.join().unwrap();
        assert!(reuse_err);
    }

    fn run_beaver(
        x: &RingTensor,
        y: &RingTensor,
        matrix: bool,
        seed: u64,
    ) -> (RingTensor, Vec<u64>) {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (x0, x1) = share(x, &c, &mut rng);
        let (y0, y1) = share(y, &c, &mut rng);
        let (mut t0, mut t1) = if matrix {
            make_matrix_triple(x.shape(), y.shape(), &c, &mut rng).unwrap()
        } else {
            make_elem_triple(x.shape(), &c, &mut rng).unwrap()
        };
        let (mut c0, mut c1) = loopback_pair();
        let handle = thread::spawn(move || beaver_mul(&x1, &y1, &mut t1, &mut c1, &cfg()).unwrap());
        let z0 = beaver_mul(&x0, &y0, &mut t0, &mut c0, &c).unwrap();
        let z1 = handle.join().unwrap();
        let z = reconstruct(&z0, &z1, &c);
        // the only traffic was the two openings
        (z, vec![c0.meter().sent_total()])
    }

    #[test]
    fn zero_operand_gives_zero_product() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = RingTensor::zeros(&[3, 3]);
        let y = RingTensor::random(&[3, 3], &c, &mut rng);
        let (z, _) = run_beaver(&x, &y, true, 10);
        assert_eq!(z, RingTensor::zeros(&[3, 3]));
    }

    #[test]
    fn fixed_point_product_after_truncation() {
        let c = cfg();
        let x = RingTensor::from_f64s(&[1], &[1.5], &c).unwrap();
        let y = RingTensor::from_f64s(&[1], &[2.0], &c).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (x0, x1) = share(&x, &c, &mut rng);
        let (y0, y1) = share(&y, &c, &mut rng);
        let (mut t0, mut t1) = make_elem_triple(&[1], &c, &mut rng).unwrap();
        let (mut c0, mut c1) = loopback_pair();
        let handle = thread::spawn(move || {
            let z1 = beaver_mul(&x1, &y1, &mut t1, &mut c1, &cfg()).unwrap();
            truncate_local(1, &z1, &cfg())
        });
        let z0 = truncate_local(0, &beaver_mul(&x0, &y0, &mut t0, &mut c0, &c).unwrap(), &c);
        let z1 = handle.join().unwrap();
        let z = reconstruct(&z0, &z1, &c);
        let got = c.decode(z.data()[0]);
        assert!((got - 3.0).abs() <= 1.0 / c.one() as f64, "got {got}");
    }

    #[test]
    fn secure_matmul_matches_plaintext_within_ulp() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let xv: Vec<f64> = (0..8).map(|i| (i as f64 - 4.0) / 3.0).collect();
        let yv: Vec<f64> = (0..8).map(|i| (i as f64) / 7.0 - 0.5).collect();
        let x = RingTensor::from_f64s(&[2, 4], &xv, &c).unwrap();
        let y = RingTensor::from_f64s(&[4, 2], &yv, &c).unwrap();
        let (x0, x1) = share(&x, &c, &mut rng);
        let (y0, y1) = share(&y, &c, &mut rng);
        let (mut t0, mut t1) = make_matrix_triple(&[2, 4], &[4, 2], &c, &mut rng).unwrap();
        let (mut c0, mut c1) = loopback_pair();
        let handle = thread::spawn(move || {
            truncate_local(
                1,
                &beaver_mul(&x1, &y1, &mut t1, &mut c1, &cfg()).unwrap(),
                &cfg(),
            )
        });
        let z0 = truncate_local(0, &beaver_mul(&x0, &y0, &mut t0, &mut c0, &c).unwrap(), &c);
        let z = reconstruct(&z0, &handle.join().unwrap(), &c);
        let plain = x.matmul(&y, &c).unwrap().trunc(&c);
        assert!(z.max_ulp_diff(&plain, &c).unwrap() <= 4);
    }

    #[test]
    fn opened_values_look_uniform() {
        // ε = x − a with a uniform: collect openings over repeated runs
        // with a fixed secret and frequency-test the bytes
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let x = RingTensor::from_f64s(&[64], &vec![1.25; 64], &c).unwrap();
        let mut opened = Vec::new();
        for _ in 0..512 {
            let (x0, _x1) = share(&x, &c, &mut rng);
            let (t0, _t1) = make_elem_triple(&[64], &c, &mut rng).unwrap();
            let eps = x0.sub(&t0.a, &c).unwrap();
            opened.extend_from_slice(eps.data());
        }
        assert!(crate::stats::byte_frequency_p(&opened) > 0.01);
    }

    #[test]
    fn truncation_monte_carlo_in_range_never_fails_catastrophically() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut worst = 0u64;
        for i in 0..100_000 {
            let v = ((i % 1000) as f64 - 500.0) * 0.37;
            let x = RingTensor::from_vec(&[1], vec![c.encode(v).unwrap()]).unwrap();
            let (x0, x1) = share(&x, &c, &mut rng);
            let z = reconstruct(&truncate_local(0, &x0, &c), &truncate_local(1, &x1, &c), &c);
            let expect = x.trunc(&c);
            worst = worst.max(z.max_ulp_diff(&expect, &c).unwrap());
        }
        assert!(worst <= 1, "worst truncation error {worst} ULP");
    }

    #[test]
    fn truncation_near_ring_boundary_fails_measurably() {
        // |x| ≈ 2^(ℓ−2) sits halfway to the wrap boundary: local
        // truncation must now fail for ~a quarter of share splits
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let x = RingTensor::from_vec(&[1], vec![1u64 << 62]).unwrap();
        let mut failures = 0;
        let trials = 2000;
        for _ in 0..trials {
            let (x0, x1) = share(&x, &c, &mut rng);
            let z = reconstruct(&truncate_local(0, &x0, &c), &truncate_local(1, &x1, &c), &c);
            if z.max_ulp_diff(&x.trunc(&c), &c).unwrap() > 1 {
                failures += 1;
            }
        }
        let rate = failures as f64 / trials as f64;
        assert!(
            rate > 0.1 && rate < 0.4,
            "boundary failure rate {rate} outside the documented band"
        );
    }
}
