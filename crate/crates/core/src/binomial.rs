//! Binomial pmf and CDF, the one-step CDF difference, the critical index and
//! diagnostic tail bounds.
//!
//! Tails are summed as term ratios relative to the pmf at the cut, switching
//! to the upper tail (and `ln_1p`) when the cut lies past the mode. The anchor
//! pmf is a direct product for `z <= 50` and a saddle-point log form beyond,
//! so `ln_binom_cdf` stays finite far into the subnormal range.

use serde::Serialize;

use crate::error::{check_open_unit, check_prob, domain, Result};
use crate::special::{rel_entropy, std_normal_cdf};

const DIRECT_MAX_Z: u64 = 50;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Inputs of a binomial tail evaluation `B_{z,l}(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailQuery {
    pub z: u64,
    pub l: u64,
    pub p: f64,
}

impl TailQuery {
    pub fn new(z: u64, l: u64, p: f64) -> Result<Self> {
        check_prob("p", p)?;
        Ok(Self { z, l, p })
    }

    pub fn pmf(&self) -> f64 {
        pmf_unchecked(self.z, self.l, self.p)
    }

    pub fn cdf(&self) -> f64 {
        cdf_unchecked(self.z, self.l, self.p)
    }

    pub fn ln_cdf(&self) -> f64 {
        ln_cdf_unchecked(self.z, self.l, self.p)
    }
}

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`.
fn stirlerr(n: u64) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_26,
        0.041_340_695_955_409_29,
        0.027_677_925_684_998_34,
        0.020_790_672_103_765_09,
        0.016_644_691_189_821_19,
        0.013_876_128_823_070_75,
        0.011_896_709_945_891_77,
        0.010_411_265_261_972_09,
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
    if n < 16 {
        return TABLE[n as usize];
    }
    let x = n as f64;
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// Deviance `x ln(x / m) + m - x`, accurate when `x` is close to `m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
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
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Log of `C(z, j) p^j q^(z - j)` with `q = 1 - p` supplied separately.
fn ln_pmf_raw(z: u64, j: u64, p: f64, q: f64) -> f64 {
    if j > z {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if j == z { 0.0 } else { f64::NEG_INFINITY };
    }
    let n = z as f64;
    if j == 0 {
        if z == 0 {
            return 0.0;
        }
        return if p < 0.1 { -bd0(n, n * q) - n * p } else { n * q.ln() };
    }
    if j == z {
        return if q < 0.1 { -bd0(n, n * p) - n * q } else { n * p.ln() };
    }
    let x = j as f64;
    let lc = stirlerr(z) - stirlerr(j) - stirlerr(z - j) - bd0(x, n * p) - bd0(n - x, n * q);
    let lf = LN_2PI + x.ln() + (-x / n).ln_1p();
    lc - 0.5 * lf
}

fn direct_ok(z: u64, q: f64) -> bool {
    z <= DIRECT_MAX_Z && q.powi(z as i32) > 1e-280
}

fn ln_pmf_anchor(z: u64, j: u64, p: f64, q: f64) -> f64 {
    if direct_ok(z, q) && p > 0.0 {
        let mut term = q.powi(z as i32);
        let ratio = p / q;
        for i in 0..j {
            term *= (z - i) as f64 / (i + 1) as f64 * ratio;
        }
        return term.ln();
    }
    ln_pmf_raw(z, j, p, q)
}

pub(crate) fn pmf_unchecked(z: u64, j: u64, p: f64) -> f64 {
    if j > z {
        return 0.0;
    }
    ln_pmf_anchor(z, j, p, 1.0 - p).exp()
}

pub(crate) fn ln_pmf_unchecked(z: u64, j: u64, p: f64) -> f64 {
    if j > z {
        return f64::NEG_INFINITY;
    }
    ln_pmf_anchor(z, j, p, 1.0 - p)
}

/// `(ln B_{z,l}(p), ln(1 - B_{z,l}(p)))`, each accurate to a few ulps.
pub(crate) fn ln_tails_unchecked(z: u64, l: u64, p: f64) -> (f64, f64) {
    if l >= z || p == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let q = 1.0 - p;
    if q == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    let mode = ((z + 1) as f64 * p).floor() as u64;
    if l < mode {
        // Terms shrink geometrically walking down from the cut.
        let back = q / p;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = l;
        while j > 0 {
            term *= j as f64 / (z - j + 1) as f64 * back;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            j -= 1;
        }
        let lower = ln_pmf_anchor(z, l, p, q) + sum.ln();
        (lower, (-lower.exp()).ln_1p())
    } else {
        // Past the mode the upper tail is the small side.
        let fwd = p / q;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = l + 1;
        while j < z {
            term *= (z - j) as f64 / (j + 1) as f64 * fwd;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            j += 1;
        }
        let upper = ln_pmf_anchor(z, l + 1, p, q) + sum.ln();
        ((-upper.exp()).ln_1p(), upper)
    }
}

pub(crate) fn ln_cdf_unchecked(z: u64, l: u64, p: f64) -> f64 {
    ln_tails_unchecked(z, l, p).0
}

/// Natural log of `1 - B_{z,l}(p)`.
pub(crate) fn ln_ccdf_unchecked(z: u64, l: u64, p: f64) -> f64 {
    ln_tails_unchecked(z, l, p).1
}

pub(crate) fn cdf_unchecked(z: u64, l: u64, p: f64) -> f64 {
    ln_cdf_unchecked(z, l, p).exp()
}

/// `C(z, j) p^j (1 - p)^(z - j)`, zero when `j > z`.
pub fn binom_pmf(z: u64, j: u64, p: f64) -> Result<f64> {
    check_prob("p", p)?;
    Ok(pmf_unchecked(z, j, p))
}

/// `sum_{j <= l} C(z, j) p^j (1 - p)^(z - j)`, exactly one when `l >= z`.
pub fn binom_cdf(z: u64, l: u64, p: f64) -> Result<f64> {
    check_prob("p", p)?;
    Ok(cdf_unchecked(z, l, p))
}

/// Natural log of [`binom_cdf`].
pub fn ln_binom_cdf(z: u64, l: u64, p: f64) -> Result<f64> {
    check_prob("p", p)?;
    Ok(ln_cdf_unchecked(z, l, p))
}

/// Natural log of `1 - binom_cdf(z, l, p)`, accurate when the CDF is near one.
pub fn ln_binom_ccdf(z: u64, l: u64, p: f64) -> Result<f64> {
    check_prob("p", p)?;
    Ok(ln_ccdf_unchecked(z, l, p))
}

/// `B_{z,l} - B_{z+1,l}` at `p = 1 - lambda`, via `(1 - lambda) b_{z,l}`.
pub fn delta_zl(z: u64, l: u64, lambda: f64) -> Result<f64> {
    check_open_unit("lambda", lambda)?;
    Ok((1.0 - lambda) * pmf_unchecked(z, l, 1.0 - lambda))
}

/// Smallest trial count whose tail drops to the significance level, and its
/// predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CriticalIndex {
    /// Minimal `z >= l` with `B_{z,l}(1 - lambda) <= delta`.
    pub upper: u64,
    /// `upper - 1`; equals `-1` only in the degenerate `l = 0, delta = 1` case.
    pub lower: i64,
}

pub fn z_star(l: u64, delta: f64, lambda: f64) -> Result<CriticalIndex> {
    if !(delta > 0.0 && delta <= 1.0) {
        return domain(format!("delta = {delta} must lie in (0, 1]"));
    }
    z_star_ln(l, delta.ln(), lambda)
}

/// [`z_star`] with the significance level given as `ln delta`.
pub fn z_star_ln(l: u64, ln_delta: f64, lambda: f64) -> Result<CriticalIndex> {
    check_open_unit("lambda", lambda)?;
    if !(ln_delta <= 0.0) {
        return domain(format!("ln delta = {ln_delta} must be nonpositive"));
    }
    let nu = 1.0 - lambda;
    let fails = |z: u64| ln_cdf_unchecked(z, l, nu) > ln_delta;
    let upper = if !fails(l) {
        l
    } else {
        let mut lo = l;
        let mut step = 1u64;
        let mut hi = l + step;
        while fails(hi) {
            lo = hi;
            step = step.checked_mul(2).expect("critical index overflow");
            hi = l + step;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fails(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    Ok(CriticalIndex {
        upper,
        lower: upper as i64 - 1,
    })
}

/// Diagnostic approximations of `B_{z,l}(1 - lambda)`; a bound is `None`
/// where its hypotheses fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBounds {
    /// `exp(-z D(l/z || nu))`, needs `l <= nu z`.
    pub chernoff_upper: Option<f64>,
    /// Reverse Chernoff bound `exp(-z D) / (e sqrt(l))`, needs `1 <= l <= z - 1`.
    pub chernoff_lower: Option<f64>,
    /// `Phi((l - nu z) / sqrt(nu lambda z))`, needs `1 <= l <= z`.
    pub normal_approx: Option<f64>,
    /// `0.5 / sqrt(nu lambda l)`.
    pub be_error: Option<f64>,
    /// `0.5 (1 - 2 nu lambda) / sqrt(nu lambda z)`, the sharper form.
    pub be_error_sharp: Option<f64>,
}

fn chernoff_exponent(z: u64, l: u64, nu: f64) -> f64 {
    let frac = l as f64 / z as f64;
    -(z as f64) * rel_entropy(frac, nu).unwrap_or(f64::INFINITY)
}

pub fn tail_bounds(z: u64, l: u64, lambda: f64) -> Result<TailBounds> {
    check_open_unit("lambda", lambda)?;
    let nu = 1.0 - lambda;
    let chernoff_upper =
        (z > 0 && l as f64 <= nu * z as f64).then(|| chernoff_exponent(z, l, nu).exp());
    let chernoff_lower = reverse_chernoff(z, l, lambda).ok();
    let var = nu * lambda;
    let clt = l >= 1 && l <= z;
    let normal_approx =
        clt.then(|| std_normal_cdf((l as f64 - nu * z as f64) / (var * z as f64).sqrt()));
    let be_error = clt.then(|| 0.5 / (var * l as f64).sqrt());
    let be_error_sharp = clt.then(|| 0.5 * (1.0 - 2.0 * var) / (var * z as f64).sqrt());
    Ok(TailBounds {
        chernoff_upper,
        chernoff_lower,
        normal_approx,
        be_error,
        be_error_sharp,
    })
}

/// Lower bound `exp(-z D(l/z || nu)) / (e sqrt(l))` on `B_{z,l}(nu)`.
pub fn reverse_chernoff(z: u64, l: u64, lambda: f64) -> Result<f64> {
    check_open_unit("lambda", lambda)?;
    if !(l >= 1 && l < z) {
        return domain(format!("reverse Chernoff bound needs 1 <= l <= z - 1 (z = {z}, l = {l})"));
    }
    let nu = 1.0 - lambda;
    Ok((chernoff_exponent(z, l, nu) - 1.0 - 0.5 * (l as f64).ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::lgamma;
    use proptest::prelude::*;

    // Exact rational tail in 128-bit integers for small z and p = a/b.
    fn cdf_rational(z: u64, l: u64, a: u128, b: u128) -> f64 {
        let mut num = 0u128;
        let mut c = 1u128;
        for j in 0..=l.min(z) {
            if j > 0 {
                c = c * (z - j + 1) as u128 / j as u128;
            }
            num += c * a.pow(j as u32) * (b - a).pow((z - j) as u32);
        }
        num as f64 / (b.pow(z as u32)) as f64
    }

    #[test]
    fn stirlerr_table_matches_lgamma() {
        for n in 1..40u64 {
            let x = n as f64;
            let reference = lgamma(x + 1.0) - (0.5 * LN_2PI + (x + 0.5) * x.ln() - x);
            assert!((stirlerr(n) - reference).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(binom_pmf(3, 1, 0.5).unwrap(), 0.375);
        assert_eq!(binom_pmf(2, 5, 0.3).unwrap(), 0.0);
        assert_eq!(binom_pmf(0, 0, 0.0).unwrap(), 1.0);
        assert!(binom_pmf(3, 1, 1.5).is_err());
        // Log path agrees with direct multiplication.
        let direct = (0..7).fold(1.0, |acc, i| acc * (80 - i) as f64 / (i + 1) as f64)
            * 0.3f64.powi(7)
            * 0.7f64.powi(73);
        let v = binom_pmf(80, 7, 0.3).unwrap();
        assert!((v / direct - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cdf_examples() {
        for l in 0..6 {
            assert_eq!(binom_cdf(l, l, 0.3).unwrap(), 1.0);
        }
        assert_eq!(binom_cdf(2, 1, 0.5).unwrap(), 0.75);
        let v = binom_cdf(100_000, 3, 0.5).unwrap();
        assert_eq!(v, 0.0);
        let ln = ln_binom_cdf(100_000, 3, 0.5).unwrap();
        let terms: Vec<f64> = (0..=3)
            .map(|j| {
                lgamma(100_001.0) - lgamma(j as f64 + 1.0) - lgamma(100_001.0 - j as f64)
                    + 100_000.0 * 0.5f64.ln()
            })
            .collect();
        let peak = terms[3];
        let lse = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
        assert!((ln / lse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_against_rational_reference() {
        for z in [0u64, 1, 5, 17, 25] {
            for l in 0..=z {
                for (a, b) in [(1u128, 2u128), (3, 10), (7, 10), (1, 20)] {
                    let p = a as f64 / b as f64;
                    let exact = cdf_rational(z, l, a, b);
                    let got = binom_cdf(z, l, p).unwrap();
                    assert!((got - exact).abs() <= 1e-14 * exact.max(1e-300) + 1e-300);
                }
            }
        }
    }

    #[test]
    fn log_path_matches_direct_at_switch() {
        for l in 0..50u64 {
            for p in [0.05, 0.3, 0.5, 0.9] {
                let a = ln_cdf_unchecked(50, l, p);
                let q: f64 = 1.0 - p;
                let mode = (51.0 * p).floor() as u64;
                let b = if l < mode {
                    let s: f64 = (0..=l).map(|j| ln_pmf_raw(50, j, p, q).exp()).sum();
                    s.ln()
                } else {
                    let s: f64 = (l + 1..=50).map(|j| ln_pmf_raw(50, j, p, q).exp()).sum();
                    (-s).ln_1p()
                };
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12), "l={l} p={p} {a} {b}");
            }
        }
    }

    #[test]
    fn delta_examples() {
        assert!((delta_zl(1, 0, 0.5).unwrap() - 0.25).abs() < 1e-16);
        assert_eq!(delta_zl(0, 1, 0.5).unwrap(), 0.0);
        let diff = binom_cdf(5, 2, 0.7).unwrap() - binom_cdf(6, 2, 0.7).unwrap();
        assert!((delta_zl(5, 2, 0.3).unwrap() - diff).abs() < 1e-14);
        assert!(delta_zl(5, 2, 0.0).is_err());
    }

    #[test]
    fn critical_index_examples() {
        let c = z_star(0, 1.0, 0.4).unwrap();
        assert_eq!((c.upper, c.lower), (0, -1));
        assert_eq!(z_star(0, 0.25, 0.5).unwrap().upper, 2);
        let c = z_star(1, 0.5, 0.5).unwrap();
        let scan = (1..).find(|&z| binom_cdf(z, 1, 0.5).unwrap() <= 0.5).unwrap();
        assert_eq!(c.upper, scan);
        assert!(c.upper >= 2);
    }

    #[test]
    fn critical_index_against_scan() {
        for l in 0..8u64 {
            for lambda in [0.1, 0.5, 0.9] {
                for delta in [0.9, 0.5, 0.1, 0.01, 1e-4] {
                    let c = z_star(l, delta, lambda).unwrap();
                    let scan = (l..)
                        .find(|&z| binom_cdf(z, l, 1.0 - lambda).unwrap() <= delta)
                        .unwrap();
                    assert_eq!(c.upper, scan);
                }
            }
        }
    }

    #[test]
    fn tail_bound_examples() {
        let b = binom_cdf(100, 20, 0.5).unwrap();
        let t = tail_bounds(100, 20, 0.5).unwrap();
        assert!(t.chernoff_lower.unwrap() <= b && b <= t.chernoff_upper.unwrap());
        assert!(reverse_chernoff(5, 5, 0.5).is_err());
        assert!(tail_bounds(5, 5, 0.5).unwrap().chernoff_lower.is_none());
        let b = binom_cdf(400, 100, 0.5).unwrap();
        let t = tail_bounds(400, 100, 0.5).unwrap();
        assert!((b - t.normal_approx.unwrap()).abs() <= t.be_error.unwrap());
    }

    #[test]
    fn critical_index_limits() {
        // z* / ln(delta) tends to 1 / ln(lambda); the offset decays like
        // l ln(z*) / ln(delta), so only l = 0 is within 5% at delta = 1e-12.
        for lambda in [0.1, 1.0 / std::f64::consts::E, 0.5, 0.9] {
            let z = z_star(0, 1e-12, lambda).unwrap().upper as f64;
            assert!((z * lambda.ln() / 1e-12f64.ln() - 1.0).abs() < 0.05);
            for l in 0..=3u64 {
                let mut prev = f64::INFINITY;
                for ln_delta in [-27.631, -1e2, -1e3, -1e4] {
                    let z = z_star_ln(l, ln_delta, lambda).unwrap().upper as f64;
                    let err = (z * lambda.ln() / ln_delta - 1.0).abs();
                    assert!(l == 0 || err <= prev, "l={l} lambda={lambda} ln_delta={ln_delta}");
                    prev = err;
                }
                assert!(prev < 0.05, "l={l} lambda={lambda}");
            }
        }
    }

    #[test]
    fn critical_index_large_l() {
        // z* - (l - q sqrt(lambda l)) / nu stays bounded as l grows.
        for lambda in [0.1, 0.5, 0.9] {
            for delta in [0.1, 0.3] {
                let q = crate::special::std_normal_quantile(delta).unwrap();
                let offsets: Vec<f64> = [100u64, 1_000, 10_000]
                    .iter()
                    .map(|&l| {
                        let lf = l as f64;
                        let z = z_star(l, delta, lambda).unwrap().upper as f64;
                        (z - (lf - q * (lambda * lf).sqrt()) / (1.0 - lambda)).abs()
                    })
                    .collect();
                let bound = offsets[0].max(1.0 / (1.0 - lambda)) * 2.0 + 2.0;
                assert!(offsets.iter().all(|&o| o <= bound), "{offsets:?}");
            }
        }
    }

    #[test]
    fn tail_ratio_limit() {
        // l lambda / nu^2 (B_{z_*}/B_{z*} - 1)^2 -> (phi(q)/delta)^2.
        let l = 10_000u64;
        for lambda in [0.1, 0.5, 0.9] {
            for delta in [0.1, 0.3] {
                let nu = 1.0 - lambda;
                let c = z_star(l, delta, lambda).unwrap();
                let hi = ln_cdf_unchecked(c.lower as u64, l, nu);
                let lo = ln_cdf_unchecked(c.upper, l, nu);
                let ratio = (hi - lo).exp_m1();
                let lhs = l as f64 * lambda / (nu * nu) * ratio * ratio;
                let rhs = crate::special::psi_times_quantile(delta).unwrap().powi(2);
                assert!((lhs / rhs - 1.0).abs() < 0.05, "lambda={lambda} delta={delta} {lhs} {rhs}");
            }
        }
    }

    proptest! {
        #[test]
        fn cdf_monotone(z in 1u64..60, l in 0u64..60, p in 0.01f64..0.99, dp in 0.0f64..0.01) {
            prop_assume!(l < z);
            let b = cdf_unchecked(z, l, p);
            prop_assert!(cdf_unchecked(z, l + 1, p) >= b);
            prop_assert!(cdf_unchecked(z + 1, l, p) <= b);
            prop_assert!(cdf_unchecked(z, l, p + dp) <= b + 1e-15);
        }

        #[test]
        fn cdf_sums_pmf(z in 0u64..200, l in 0u64..200, p in 0.0f64..=1.0) {
            let s: f64 = (0..=l.min(z)).map(|j| pmf_unchecked(z, j, p)).sum();
            let c = cdf_unchecked(z, l, p);
            prop_assert!((s - c).abs() <= 1e-12 * c.max(1e-300) + 1e-300, "{s} {c}");
        }
    }
}
