//! Normal distribution helpers, binary relative entropy, the Poisson CDF and
//! the monotone inverses built on them.

use serde::Serialize;
use libm::{erfc, lgamma};

use crate::error::{check_open_unit, check_prob, domain, Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const MAX_ITER: u32 = 200;

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

// Wichura's AS241 (PPND16) rational approximation.
fn quantile_as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Inverse of [`std_normal_cdf`], polished by one Newton step.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal quantile needs p in (0, 1), got {p}"));
    }
    if p > 0.5 {
        // 1 - p is exact here, and the lower tail keeps relative accuracy.
        return Ok(-std_normal_quantile(1.0 - p)?);
    }
    let x = quantile_as241(p);
    let dens = std_normal_pdf(x);
    if dens > 0.0 {
        Ok(x - (std_normal_cdf(x) - p) / dens)
    } else {
        Ok(x)
    }
}

/// `phi(q) / (delta * q)` with `q` the normal quantile of `delta`.
pub fn psi(delta: f64) -> Result<f64> {
    check_open_unit("delta", delta)?;
    if delta == 0.5 {
        return Err(Error::Singular("psi is undefined at delta = 1/2".into()));
    }
    let q = std_normal_quantile(delta)?;
    Ok(std_normal_pdf(q) / (delta * q))
}

/// The product `quantile(delta) * psi(delta) = phi(quantile(delta)) / delta`,
/// finite across `delta = 1/2`.
pub fn psi_times_quantile(delta: f64) -> Result<f64> {
    check_open_unit("delta", delta)?;
    Ok(std_normal_pdf(std_normal_quantile(delta)?) / delta)
}

/// Solves `psi(delta) = y` for `delta` in `(1/2, 1)`.
pub fn psi_inverse(y: f64) -> Result<InverseSolve> {
    if !(y > 0.0 && y.is_finite()) {
        return domain(format!("psi inverse needs a positive argument, got {y}"));
    }
    let f = |d: f64| psi(d).map(|v| v - y).unwrap_or(f64::NAN);
    let (value, iterations) = bisect(0.5, 1.0, |d| f(d) > 0.0);
    let value = value.clamp(0.5 + f64::EPSILON, 1.0 - f64::EPSILON);
    Ok(InverseSolve {
        value,
        residual: f(value) / y,
        iterations,
    })
}

/// Arguments of a binary relative entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyPair {
    pub p: f64,
    pub q: f64,
}

impl EntropyPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        check_prob("p", p)?;
        check_prob("q", q)?;
        if (p > 0.0 && q == 0.0) || (p < 1.0 && q == 1.0) {
            return Err(Error::Domain(format!(
                "relative entropy D({p} || {q}) is infinite"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn value(&self) -> f64 {
        let (p, q) = (self.p, self.q);
        let mut d = 0.0;
        if p > 0.0 {
            d += p * (p / q).ln();
        }
        if p < 1.0 {
            d += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        }
        d.max(0.0)
    }
}

pub fn rel_entropy(p: f64, q: f64) -> Result<f64> {
    Ok(EntropyPair::new(p, q)?.value())
}

/// Natural log of `exp(-x) * sum_{j <= k} x^j / j!`.
pub fn ln_pois_cdf(k: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lx = x.ln();
    // Sum relative to the largest term to stay finite for large x.
    let top = (k as f64).min(x.floor());
    let ln_term = |j: f64| j * lx - lgamma(j + 1.0);
    let peak = ln_term(top);
    let mut sum = 0.0;
    for j in 0..=k {
        let t = (ln_term(j as f64) - peak).exp();
        sum += t;
        if j as f64 > x && t < 1e-18 * sum {
            break;
        }
    }
    -x + peak + sum.ln()
}

pub fn pois_cdf(k: u64, x: f64) -> f64 {
    ln_pois_cdf(k, x).exp().min(1.0)
}

/// Result of a monotone root search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseSolve {
    pub value: f64,
    /// Residual of the defining equation, relative to its target where the
    /// target is nonzero.
    pub residual: f64,
    pub iterations: u32,
}

/// Bisects `[lo, hi]` where `left(lo)` holds and `left(hi)` fails, returning
/// the midpoint of the final bracket.
fn bisect(mut lo: f64, mut hi: f64, left: impl Fn(f64) -> bool) -> (f64, u32) {
    let mut it = 0;
    while it < MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if left(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    (0.5 * (lo + hi), it)
}

/// Solves `Pois(k, t) = delta`.
pub fn t_pois(k: u64, delta: f64) -> Result<InverseSolve> {
    check_open_unit("delta", delta)?;
    t_pois_ln(k, delta.ln())
}

/// [`t_pois`] with the target given as its natural log.
pub fn t_pois_ln(k: u64, ln_delta: f64) -> Result<InverseSolve> {
    if !(ln_delta < 0.0 && ln_delta.is_finite()) {
        return domain(format!("ln delta = {ln_delta} must be finite and negative"));
    }
    if k == 0 {
        return Ok(InverseSolve {
            value: -ln_delta,
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut hi = 1.0 + k as f64;
    while ln_pois_cdf(k, hi) >= ln_delta {
        hi *= 2.0;
    }
    let (t, iterations) = bisect(0.0, hi, |t| ln_pois_cdf(k, t) > ln_delta);
    Ok(InverseSolve {
        value: t,
        residual: (ln_pois_cdf(k, t) - ln_delta).exp_m1(),
        iterations,
    })
}

/// Solves `t * D(gamma / t || x) = 1` over `t >= gamma / x`.
pub fn t_div(gamma: f64, x: f64) -> Result<InverseSolve> {
    check_open_unit("x", x)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return domain(format!("gamma = {gamma} must be finite and nonnegative"));
    }
    if gamma == 0.0 {
        return Ok(InverseSolve {
            value: -1.0 / (-x).ln_1p(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let lo = gamma / x;
    let g = |t: f64| {
        let p = (gamma / t).min(1.0);
        t * EntropyPair { p, q: x }.value() - 1.0
    };
    let mut hi = 2.0 * lo + 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let (t, iterations) = bisect(lo, hi, |t| g(t) < 0.0);
    Ok(InverseSolve {
        value: t,
        residual: g(t),
        iterations,
    })
}

/// Solves `D(s || eps) = r` for `eps` in `[s, 1)`.
pub fn eps_div(s: f64, r: f64) -> Result<InverseSolve> {
    if !(0.0..1.0).contains(&s) {
        return domain(format!("s = {s} must lie in [0, 1)"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("rate r = {r} must be positive"));
    }
    if s == 0.0 {
        return Ok(InverseSolve {
            value: -(-r).exp_m1(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let d = |e: f64| EntropyPair { p: s, q: e }.value();
    let (e, iterations) = bisect(s, 1.0, |e| d(e) < r);
    Ok(InverseSolve {
        value: e,
        residual: (d(e) - r) / r,
        iterations,
    })
}

/// Solves `D(s || eps) = r` for `s` in `[0, eps]`.
pub fn s_div(eps: f64, r: f64) -> Result<InverseSolve> {
    check_open_unit("eps", eps)?;
    let cap = -(-eps).ln_1p();
    if !(r > 0.0) || r > cap * (1.0 + 1e-15) {
        return domain(format!("rate r = {r} must lie in (0, {cap}]"));
    }
    if r >= cap {
        return Ok(InverseSolve {
            value: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let d = |s: f64| EntropyPair { p: s, q: eps }.value();
    let (s, iterations) = bisect(0.0, eps, |s| d(s) > r);
    Ok(InverseSolve {
        value: s,
        residual: (d(s) - r) / r,
        iterations,
    })
}
