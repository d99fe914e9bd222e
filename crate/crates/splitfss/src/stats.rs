//! Statistical tests used by the privacy checks: chi-square byte
//! frequency, two-sample Kolmogorov–Smirnov, Pearson correlation.
//! P-values come from the standard series / continued-fraction
//! evaluations of the regularized incomplete gamma function and the
//! asymptotic Kolmogorov distribution.

/// ln Γ(x) (Lanczos).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-14 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-14 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x < 0.0 || a <= 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

/// Chi-square statistic and p-value for observed counts against a uniform
/// expectation.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    if total == 0 || k < 2 {
        return (0.0, 1.0);
    }
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = (k - 1) as f64;
    (stat, gamma_q(dof / 2.0, stat / 2.0))
}

/// Byte-frequency test: counts each low byte of the given ring elements
/// and returns the 256-bin chi-square p-value.
pub fn byte_frequency_p(elements: &[u64]) -> f64 {
    let mut counts = [0u64; 256];
    for &e in elements {
        counts[(e & 0xff) as usize] += 1;
    }
    chi_square_uniform(&counts).1
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-9 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test; returns (D, p).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let p = kolmogorov_q((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d);
    (d, p)
}

/// Pearson correlation coefficient of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn gamma_q_reference_points() {
        // Q(0.5, x) = erfc(sqrt(x)); spot values
        assert!((gamma_q(0.5, 0.5) - 0.317310507).abs() < 1e-6);
        assert!((gamma_q(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-9);
        // chi-square with 255 dof at its mean has p ≈ 0.49
        let p = gamma_q(127.5, 127.5);
        assert!(p > 0.4 && p < 0.6, "p = {p}");
    }

    #[test]
    fn uniform_bytes_pass_biased_bytes_fail() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let uniform: Vec<u64> = (0..100_000).map(|_| rng.next_u64()).collect();
        assert!(byte_frequency_p(&uniform) > 0.01);
        let biased: Vec<u64> = (0..100_000).map(|_| rng.next_u64() & 0x7f).collect();
        assert!(byte_frequency_p(&biased) < 1e-6);
    }

    #[test]
    fn ks_same_distribution_passes_shifted_fails() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let (_, p_same) = ks_two_sample(&a, &b);
        assert!(p_same > 0.01, "p = {p_same}");
        let c: Vec<f64> = (0..5000).map(|_| rng.random::<f64>() + 0.2).collect();
        let (_, p_diff) = ks_two_sample(&a, &c);
        assert!(p_diff < 1e-6);
    }

    #[test]
    fn pearson_endpoints() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
        let c = [8.0, 6.0, 4.0, 2.0];
        assert!((pearson(&a, &c) + 1.0).abs() < 1e-12);
        let flat = [5.0, 5.0, 5.0, 5.0];
        assert_eq!(pearson(&a, &flat), 0.0);
    }
}
