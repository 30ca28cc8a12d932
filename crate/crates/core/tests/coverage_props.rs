use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use proptest::prelude::*;
use rii::coverage::{binomial_tail, coverage_curve, k_alpha, linear_grid};

/// Exact `P[Bin(n, p/q) >= k]` in rational arithmetic.
fn exact_tail(n: usize, k: usize, p: u32, q: u32) -> f64 {
    let b = BigRational::new(BigInt::from(p), BigInt::from(q));
    let c = BigRational::one() - &b;
    let mut total = BigRational::zero();
    let mut binom = BigInt::one();
    for j in 0..=n {
        if j > 0 {
            binom = binom * BigInt::from(n - j + 1) / BigInt::from(j);
        }
        if j >= k {
            let term = BigRational::from_integer(binom.clone())
                * num::pow(b.clone(), j)
                * num::pow(c.clone(), n - j);
            total += term;
        }
    }
    total.to_f64().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_exact_rational_sum(n in 1usize..=20, k_frac in 0.0f64..=1.0, p in 1u32..=50) {
        let k = ((n as f64) * k_frac).round() as usize;
        let want = exact_tail(n, k, p, 100);
        let got = binomial_tail(n, k, p as f64 / 100.0).unwrap();
        prop_assert!((got - want).abs() <= 1e-12, "n={} k={} b={}: {} vs {}", n, k, p, got, want);
    }

    #[test]
    fn nonincreasing_in_k(n in 1usize..=400, b in 0.0f64..=0.5) {
        let mut prev = 1.0;
        for k in 0..=n {
            let s = binomial_tail(n, k, b).unwrap();
            prop_assert!(s <= prev + 1e-15, "k={} rises from {} to {}", k, prev, s);
            prev = s;
        }
    }

    #[test]
    fn nondecreasing_in_b(n in 1usize..=200, k_frac in 0.0f64..=1.0, b1 in 0.0f64..=0.5, b2 in 0.0f64..=0.5) {
        let k = ((n as f64) * k_frac).round() as usize;
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let s_lo = binomial_tail(n, k, lo).unwrap();
        let s_hi = binomial_tail(n, k, hi).unwrap();
        prop_assert!(s_lo <= s_hi + 1e-14, "S({}) = {} > S({}) = {}", lo, s_lo, hi, s_hi);
    }

    #[test]
    fn complement_identity(n in 1usize..=300, k_frac in 0.0f64..=1.0, b in 0.001f64..=0.999) {
        // P[Bin(n, b) >= k] + P[Bin(n, 1 - b) >= n - k + 1] = 1.
        let k = (((n as f64) * k_frac).round() as usize).max(1);
        let s = binomial_tail(n, k, b).unwrap();
        let t = binomial_tail(n, n - k + 1, 1.0 - b).unwrap();
        prop_assert!((s + t - 1.0).abs() <= 1e-12, "{} + {} != 1", s, t);
    }

    #[test]
    fn k_alpha_is_the_largest_valid_threshold(n in 1usize..=200, alpha in 0.001f64..0.5, b in 0.01f64..=0.5) {
        let target = 1.0 - alpha;
        match k_alpha(n, alpha, b).unwrap() {
            Some(k) => {
                prop_assert!(binomial_tail(n, k, b).unwrap() >= target);
                if k < n {
                    prop_assert!(binomial_tail(n, k + 1, b).unwrap() < target);
                }
            }
            None => prop_assert!(binomial_tail(n, 1, b).unwrap() < target),
        }
    }
}

#[test]
fn appendix_anchor() {
    let s = binomial_tail(39, 16, 0.5).unwrap();
    assert!((s - 0.9002).abs() <= 5e-4, "S_39(16, 0.5) = {s}");
    assert_eq!(k_alpha(39, 0.1, 0.5).unwrap(), Some(16));
    assert_eq!(k_alpha(1, 0.01, 0.5).unwrap(), None);
}

#[test]
fn large_n_is_finite_and_in_range() {
    for n in [1_000usize, 10_000, 100_000] {
        for b in [1e-4, 0.1, 0.5] {
            let k = (n as f64 * b) as usize;
            let s = binomial_tail(n, k, b).unwrap();
            assert!(
                s.is_finite() && (0.0..=1.0).contains(&s),
                "n={n} b={b}: {s}"
            );
            // The mean sits at or above k, so at least roughly half the mass
            // lies at or above it.
            assert!(s > 0.4, "n={n} b={b}: {s}");
        }
    }
}

#[test]
fn figure1_curves_are_monotone_and_ordered() {
    let ks = [4, 8, 12, 16];
    let grid = linear_grid(0.0, 0.5, 201);
    let rows = coverage_curve(30, &ks, &grid).unwrap();
    assert_eq!(rows.len(), ks.len() * grid.len());
    for curve in rows.chunks(grid.len()) {
        for w in curve.windows(2) {
            assert!(w[0].coverage <= w[1].coverage + 1e-15);
        }
    }
    for j in 0..grid.len() {
        for i in 1..ks.len() {
            assert!(
                rows[i * grid.len() + j].coverage
                    <= rows[(i - 1) * grid.len() + j].coverage + 1e-15
            );
        }
    }
    let direct = exact_tail(30, 16, 1, 2);
    let last = rows.last().unwrap();
    assert_eq!((last.k, last.b), (16, 0.5));
    assert!((last.coverage - direct).abs() <= 1e-12);
}

#[test]
fn out_of_domain_inputs_are_rejected() {
    assert!(binomial_tail(5, 6, 0.5).is_err());
    assert!(binomial_tail(5, 2, 1.5).is_err());
    assert!(binomial_tail(5, 2, f64::NAN).is_err());
    assert!(k_alpha(0, 0.1, 0.5).is_err());
    assert!(k_alpha(10, 0.0, 0.5).is_err());
    assert!(k_alpha(10, 0.1, 0.6).is_err());
    assert!(coverage_curve(10, &[2], &[0.7]).is_err());
}
