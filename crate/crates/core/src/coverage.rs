//! Binomial-tail arithmetic behind the coverage guarantee.
//!
//! With `n` test points whose residual intervals each contain the true
//! response independently with probability at least `b`, the number of hits
//! is stochastically larger than `Binomial(n, b)`. The guaranteed coverage of
//! the threshold `k` is therefore the upper tail `P[Binomial(n, b) >= k]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Checked bundle of the quantities tying a threshold to its guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageParams {
    pub n_te: usize,
    pub k: usize,
    pub b: f64,
    pub alpha: f64,
}

impl CoverageParams {
    pub fn new(n_te: usize, k: usize, b: f64, alpha: f64) -> Result<Self> {
        if n_te == 0 {
            return Err(invalid("n_te must be positive"));
        }
        if k > n_te {
            return Err(invalid(format!("k = {k} exceeds n_te = {n_te}")));
        }
        check_tolerance(b)?;
        check_alpha(alpha)?;
        Ok(Self { n_te, k, b, alpha })
    }

    pub fn guaranteed_coverage(&self) -> f64 {
        binomial_tail(self.n_te, self.k, self.b).expect("validated at construction")
    }

    /// Whether the threshold actually delivers `1 - alpha`.
    pub fn is_valid(&self) -> bool {
        self.guaranteed_coverage() >= 1.0 - self.alpha
    }
}

pub(crate) fn check_tolerance(b: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&b) {
        return Err(invalid(format!("tolerance b = {b} outside [0, 0.5]")));
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// `P[Binomial(n, b) >= k]`.
///
/// Only the side of the distribution away from the mean is summed: for
/// `k` above `n b` the upper tail directly, otherwise one minus the lower
/// tail, evaluated as the upper tail of `Binomial(n, 1 - b)` from
/// `n - k + 1`. Terms are accumulated with the ratio recurrence
/// `pmf(j+1) = pmf(j) * (n-j)/(j+1) * b/(1-b)`, re-anchored every
/// [`RESEED_EVERY`] steps on a saddle-point evaluation of the pmf so the
/// product cannot drift.
pub fn binomial_tail(n: usize, k: usize, b: f64) -> Result<f64> {
    if k > n {
        return Err(invalid(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(invalid(format!("probability {b} outside [0, 1]")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    if b == 1.0 {
        return Ok(1.0);
    }
    let s = if (k as f64) > n as f64 * b {
        upper_tail_sum(n, k, b)
    } else {
        1.0 - upper_tail_sum(n, n - k + 1, 1.0 - b)
    };
    Ok(s.clamp(0.0, 1.0))
}

/// `sum_{j >= k} pmf(j)` for `0 < b < 1` and `1 <= k <= n`.
fn upper_tail_sum(n: usize, k: usize, b: f64) -> f64 {
    let q = 1.0 - b;
    let odds = b / q;
    let nf = n as f64;
    let mode = ((nf + 1.0) * b).floor();

    let mut term = binomial_pmf(k, n, b, q);
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut j = k;
    loop {
        // Kahan summation.
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if j == n {
            break;
        }
        if (j as f64) > mode && term < sum * 1e-18 {
            break;
        }
        let jf = j as f64;
        j += 1;
        term = if (j - k) % RESEED_EVERY == 0 {
            binomial_pmf(j, n, b, q)
        } else {
            term * ((nf - jf) / (jf + 1.0)) * odds
        };
    }
    sum
}

const RESEED_EVERY: usize = 32;

/// Largest `k` in `1..=n_te` with `S(k, b) >= 1 - alpha`, or `None` when even
/// `k = 1` falls short.
pub fn k_alpha(n_te: usize, alpha: f64, b: f64) -> Result<Option<usize>> {
    if n_te == 0 {
        return Err(invalid("n_te must be positive"));
    }
    check_alpha(alpha)?;
    if !(b > 0.0 && b <= 0.5) {
        return Err(invalid(format!("tolerance b = {b} outside (0, 0.5]")));
    }
    let target = 1.0 - alpha;
    // S is nonincreasing in k: binary search for the last k meeting the target.
    if binomial_tail(n_te, 1, b)? < target {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1usize, n_te);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if binomial_tail(n_te, mid, b)? >= target {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(Some(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub b: f64,
    pub coverage: f64,
}

/// Guaranteed coverage over a `k x b` grid, grouped by `k`.
pub fn coverage_curve(n_te: usize, ks: &[usize], b_grid: &[f64]) -> Result<Vec<CurvePoint>> {
    for &b in b_grid {
        check_tolerance(b)?;
    }
    let mut rows = Vec::with_capacity(ks.len() * b_grid.len());
    for &k in ks {
        for &b in b_grid {
            rows.push(CurvePoint {
                k,
                b,
                coverage: binomial_tail(n_te, k, b)?,
            });
        }
    }
    Ok(rows)
}

/// `points` evenly spaced values covering `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// CSV with header `k,b,coverage`, reals at 10 significant digits.
pub fn curve_to_csv(rows: &[CurvePoint]) -> String {
    let mut out = String::from("k,b,coverage\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.k, fmt_sig(r.b), fmt_sig(r.coverage));
    }
    out
}

/// Formats a real with 10 significant digits; infinities become `inf`/`-inf`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_zeros(&s)
    } else {
        let s = format!("{v:.9e}");
        match s.split_once('e') {
            Some((mant, e)) => format!("{}e{e}", trim_zeros(mant)),
            None => s,
        }
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

// Saddle-point binomial pmf (Loader, 2000).

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)` for integer `n >= 1`.
fn stirlerr(n: usize) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_26,
        0.041_340_695_955_409_294,
        0.027_677_925_684_998_34,
        0.020_790_672_103_765_093,
        0.016_644_691_189_821_193,
        0.013_876_128_823_070_748,
        0.011_896_709_945_891_77,
        0.010_411_265_261_972_096,
        0.009_255_462_182_712_733,
        0.008_330_563_433_362_871,
        0.007_573_675_487_951_841,
        0.006_942_840_107_209_53,
        0.006_408_994_188_004_207,
        0.005_951_370_112_758_848,
        0.005_554_733_551_962_801,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < TABLE.len() {
        return TABLE[n];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / np).ln() + np - x
}

fn binomial_pmf(x: usize, n: usize, p: f64, q: f64) -> f64 {
    let nf = n as f64;
    if x == 0 {
        return if p < 0.1 {
            (-bd0(nf, nf * q) - nf * p).exp()
        } else {
            (nf * q.ln()).exp()
        };
    }
    if x == n {
        return if q < 0.1 {
            (-bd0(nf, nf * p) - nf * q).exp()
        } else {
            (nf * p.ln()).exp()
        };
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = LN_2PI + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_from_zero_is_one() {
        assert_eq!(binomial_tail(30, 0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn full_tail_is_power() {
        assert!((binomial_tail(5, 5, 0.5).unwrap() - 0.03125).abs() < 1e-15);
    }

    #[test]
    fn endpoint_probabilities() {
        assert_eq!(binomial_tail(10, 1, 0.0).unwrap(), 0.0);
        assert_eq!(binomial_tail(10, 0, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_tail(10, 10, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(binomial_tail(3, 4, 0.5).is_err());
        assert!(binomial_tail(3, 1, 1.5).is_err());
        assert!(binomial_tail(3, 1, f64::NAN).is_err());
        assert!(k_alpha(0, 0.1, 0.5).is_err());
        assert!(k_alpha(10, 0.0, 0.5).is_err());
        assert!(k_alpha(10, 0.1, 0.0).is_err());
        assert!(k_alpha(10, 0.1, 0.6).is_err());
    }

    #[test]
    fn k_alpha_absent_for_tiny_test_split() {
        assert_eq!(k_alpha(1, 0.01, 0.5).unwrap(), None);
    }

    #[test]
    fn pmf_matches_direct_product_small_n() {
        let direct = |x: usize, n: usize, p: f64| {
            let mut c = 1.0;
            for i in 0..x {
                c *= (n - i) as f64 / (i + 1) as f64;
            }
            c * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32)
        };
        for n in 1..40 {
            for x in 0..=n {
                let a = binomial_pmf(x, n, 0.3, 0.7);
                let e = direct(x, n, 0.3);
                assert!((a - e).abs() <= 1e-12 * e, "n={n} x={x} a={a} e={e}");
            }
        }
    }

    #[test]
    fn curve_rows_and_csv() {
        let rows = coverage_curve(30, &[4], &[0.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].coverage, 0.0);
        let single = coverage_curve(30, &[8], &[0.5]).unwrap();
        assert_eq!(single[0].coverage, binomial_tail(30, 8, 0.5).unwrap());
        assert!(coverage_curve(30, &[4], &[0.7]).is_err());
        assert!(coverage_curve(30, &[31], &[0.2]).is_err());
        let csv = curve_to_csv(&single);
        assert!(csv.starts_with("k,b,coverage\n8,0.5,0.99"));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_sig(123456.789012345), "123456.789");
        assert_eq!(fmt_sig(-2.0), "-2");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_sig(1.234e-9), "1.234e-9");
        let x = 0.123456789012345;
        assert!((fmt_sig(x).parse::<f64>().unwrap() - x).abs() < 1e-10);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = linear_grid(0.0, 0.5, 51);
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[50], 0.5);
    }
}
