//! Leading-order behaviour of the confidence limits as `n` grows.
//!
//! Expansions are returned as coefficients ([`Expansion`]) so that call sites
//! see which order they are truncating at.

use serde::Serialize;

use crate::binomial::{cdf_unchecked, pmf_unchecked, z_star};
use crate::ceil_guarded;
use crate::error::{check_open_unit, domain, Error, Result};
use crate::exact::{ucl_exact, ucl_iid_exact_ln, ConfidenceBound, TestDesign};
use crate::special::{
    eps_div, psi, psi_inverse, psi_times_quantile, rel_entropy, s_div, std_normal_quantile,
    t_div, t_pois, InverseSolve,
};

/// How the number of allowed failures scales with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// A fixed fraction `s` of the observations.
    Linear { s: f64 },
    /// A fixed count `k0`.
    Constant { k0: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Significance {
    Fixed(f64),
    /// `delta = exp(-rate * n)`.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    LinearFixedDelta,
    LinearExponentialDelta,
    ConstantFixedDelta,
    ConstantExponentialDelta,
}

/// Which test is being analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Randomized,
    /// The unrandomized test (`lambda = 0`).
    Deterministic,
    /// The benchmark where the variables are independent and identically
    /// distributed.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub significance: Significance,
}

impl RegimeSpec {
    pub fn new(regime: Regime, significance: Significance) -> Result<Self> {
        if let Regime::Linear { s } = regime {
            if !(0.0..1.0).contains(&s) {
                return domain(format!("s = {s} must lie in [0, 1)"));
            }
        }
        match significance {
            Significance::Fixed(d) => check_open_unit("delta", d)?,
            Significance::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                return domain(format!("rate r = {rate} must be positive"));
            }
            _ => {}
        }
        Ok(Self {
            regime,
            significance,
        })
    }

    pub fn kind(&self) -> RegimeKind {
        match (self.regime, self.significance) {
            (Regime::Linear { .. }, Significance::Fixed(_)) => RegimeKind::LinearFixedDelta,
            (Regime::Linear { .. }, _) => RegimeKind::LinearExponentialDelta,
            (Regime::Constant { .. }, Significance::Fixed(_)) => RegimeKind::ConstantFixedDelta,
            (Regime::Constant { .. }, _) => RegimeKind::ConstantExponentialDelta,
        }
    }

    /// The failure budget at sample size `n`: `ceil(nu s n)` or `ceil(nu k0)`
    /// for the randomized test, `ceil(s n)` or `k0` otherwise.
    pub fn budget(&self, n: u64, lambda: f64, mode: Mode) -> u64 {
        let scale = if mode == Mode::Randomized { 1.0 - lambda } else { 1.0 };
        match self.regime {
            Regime::Linear { s } => ceil_guarded(scale * s * n as f64) as u64,
            Regime::Constant { k0 } => ceil_guarded(scale * k0 as f64) as u64,
        }
    }

    pub fn ln_delta(&self, n: u64) -> f64 {
        match self.significance {
            Significance::Fixed(d) => d.ln(),
            Significance::Exponential { rate } => -rate * n as f64,
        }
    }

    /// Rate above which the limit is identically one.
    pub fn rate_threshold(&self, lambda: f64, mode: Mode) -> Option<f64> {
        match (self.regime, mode) {
            (Regime::Linear { s }, Mode::Randomized) => {
                let nu = 1.0 - lambda;
                rel_entropy(s * nu, nu).ok()
            }
            (Regime::Constant { .. }, Mode::Randomized) => Some(-lambda.ln()),
            _ => None,
        }
    }
}

/// A truncated expansion in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Expansion {
    /// `leading + coeff / sqrt(n)`.
    InvSqrt { leading: f64, coeff: f64 },
    /// `leading + coeff / n`.
    InvN { leading: f64, coeff: f64 },
    /// `s/delta + ((1 - s + s^2 - delta) / (delta (1 - s)) + u_n / delta) / n`
    /// with `u_n = ceil(s n) - s n`.
    LinearDeterministic { s: f64, delta: f64 },
    /// A limit with no stated rate.
    Limit(f64),
}

impl Expansion {
    /// Leading term and first-order correction at `n`.
    pub fn terms(&self, n: u64) -> (f64, f64) {
        let nf = n as f64;
        match *self {
            Expansion::InvSqrt { leading, coeff } => (leading, coeff / nf.sqrt()),
            Expansion::InvN { leading, coeff } => (leading, coeff / nf),
            Expansion::LinearDeterministic { s, delta } => {
                let upsilon = ceil_guarded(s * nf) - s * nf;
                let c = (1.0 - s + s * s - delta) / (delta * (1.0 - s)) + upsilon / delta;
                (s / delta, c / nf)
            }
            Expansion::Limit(x) => (x, 0.0),
        }
    }

    pub fn eval(&self, n: u64) -> f64 {
        let (a, b) = self.terms(n);
        a + b
    }
}

/// Coefficient of `1/sqrt(n)` for the randomized test in the linear regime.
pub fn coeff_c(lambda: f64, s: f64, delta: f64) -> Result<f64> {
    check_open_unit("lambda", lambda)?;
    check_open_unit("delta", delta)?;
    if !(0.0..1.0).contains(&s) {
        return domain(format!("s = {s} must lie in [0, 1)"));
    }
    let nu = 1.0 - lambda;
    let q = std_normal_quantile(delta)?;
    let fused = psi_times_quantile(delta)?;
    Ok(s.sqrt() * (1.0 - s) * ((nu / lambda).sqrt() * fused - q * (lambda / nu).sqrt() / (1.0 - s)))
}

/// `coeff_c` is nonnegative for `delta` up to this level.
pub fn coeff_c_nonnegative_below(lambda: f64, s: f64) -> Result<f64> {
    check_open_unit("lambda", lambda)?;
    Ok(psi_inverse(lambda / ((1.0 - lambda) * (1.0 - s)))?.value)
}

/// Infimum of `coeff_c` over `lambda`; `-inf` when `delta > 1/2`.
pub fn coeff_c_min(s: f64, delta: f64) -> Result<f64> {
    check_open_unit("delta", delta)?;
    if !(0.0..1.0).contains(&s) {
        return domain(format!("s = {s} must lie in [0, 1)"));
    }
    if delta > 0.5 {
        return Ok(f64::NEG_INFINITY);
    }
    let q = std_normal_quantile(delta)?;
    Ok(2.0 * (-s * (1.0 - s) * q * psi_times_quantile(delta)?).max(0.0).sqrt())
}

/// The `lambda` attaining [`coeff_c_min`], when it is attained (`delta < 1/2`).
pub fn lambda_opt_linear(s: f64, delta: f64) -> Result<Option<f64>> {
    check_open_unit("delta", delta)?;
    if delta >= 0.5 {
        return Ok(None);
    }
    let w = (1.0 - s) * psi(delta)?;
    Ok(Some(w / (w - 1.0)))
}

/// Limit of the randomized linear-regime limit when `delta = exp(-r n)`.
pub fn rate_limit_e(lambda: f64, s: f64, r: f64) -> Result<f64> {
    check_open_unit("lambda", lambda)?;
    if !(0.0..1.0).contains(&s) {
        return domain(format!("s = {s} must lie in [0, 1)"));
    }
    if !(r > 0.0) {
        return domain(format!("rate r = {r} must be positive"));
    }
    let nu = 1.0 - lambda;
    if r > rel_entropy(s * nu, nu)? {
        return Ok(1.0);
    }
    let rt = r * t_div(nu * s / r, nu)?.value;
    Ok(((rt - nu * s) / (lambda - nu * s + nu * rt)).min(1.0))
}

/// Inverts [`rate_limit_e`] in `s`.
pub fn rate_inverse_e(lambda: f64, r: f64, eps: f64) -> Result<InverseSolve> {
    check_open_unit("lambda", lambda)?;
    check_open_unit("eps", eps)?;
    let nu = 1.0 - lambda;
    if !(r > 0.0) || r > -lambda * eps * lambda.ln() / (1.0 - nu * eps) {
        return domain(format!(
            "rate r = {r} must lie in (0, -lambda eps ln(lambda) / (1 - nu eps)]"
        ));
    }
    // E reaches one once D(s nu || nu) = r.
    let hi = (s_div(nu, r)?.value / nu).min(1.0 - f64::EPSILON);
    let f = |s: f64| rate_limit_e(lambda, s, r).unwrap_or(1.0);
    let (mut lo, mut up) = (0.0, hi);
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if f(mid) < eps {
            lo = mid;
        } else {
            up = mid;
        }
        iterations += 1;
    }
    let s = 0.5 * (lo + up);
    Ok(InverseSolve {
        value: s,
        residual: (f(s) - eps) / eps,
        iterations,
    })
}

/// The rate `r` with `E_{lambda,s}(r) = eps`, for `s < eps < 1`.
pub fn rate_for_limit_e(lambda: f64, s: f64, eps: f64) -> Result<InverseSolve> {
    check_open_unit("lambda", lambda)?;
    check_open_unit("eps", eps)?;
    if !(0.0..eps).contains(&s) {
        return domain(format!("need 0 <= s < eps (s = {s}, eps = {eps})"));
    }
    let nu = 1.0 - lambda;
    let (mut lo, mut up) = (0.0, rel_entropy(s * nu, nu)?);
    if s == 0.0 {
        // Closed form of the s = 0 limit.
        let r = -lambda * eps * lambda.ln() / (1.0 - nu * eps);
        return Ok(InverseSolve {
            value: r,
            residual: 0.0,
            iterations: 0,
        });
    }
    let f = |r: f64| rate_limit_e(lambda, s, r).unwrap_or(1.0);
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if f(mid) < eps {
            lo = mid;
        } else {
            up = mid;
        }
        iterations += 1;
    }
    let r = 0.5 * (lo + up);
    Ok(InverseSolve {
        value: r,
        residual: (f(r) - eps) / eps,
        iterations,
    })
}

/// Coefficient of `1/n` for the randomized test in the constant regime.
pub fn coeff_g(l: u64, delta: f64, lambda: f64) -> Result<f64> {
    check_open_unit("delta", delta)?;
    check_open_unit("lambda", lambda)?;
    let nu = 1.0 - lambda;
    let crit = z_star(l, delta, lambda)?;
    let (zu, zl) = (crit.upper, crit.lower as u64);
    let b_lower = cdf_unchecked(zl, l, nu);
    let b_upper = cdf_unchecked(zu, l, nu);
    let b_before = if zl == 0 { 1.0 } else { cdf_unchecked(zl - 1, l, nu) };
    let step = nu * pmf_unchecked(zl, l, nu);
    Ok(((b_lower - delta) * zu as f64 * b_lower + (delta - b_upper) * zl as f64 * b_before)
        / (delta * step))
}

/// The asymptotic expansion for a regime and test.
pub fn ucl_asymptotic(spec: &RegimeSpec, lambda: f64, mode: Mode) -> Result<Expansion> {
    match mode {
        Mode::Randomized if !(lambda > 0.0 && lambda < 1.0) => {
            return Err(Error::Incompatible(format!(
                "randomized mode needs lambda in (0, 1), got {lambda}"
            )));
        }
        Mode::Deterministic if lambda != 0.0 => {
            return Err(Error::Incompatible(format!(
                "deterministic mode needs lambda = 0, got {lambda}"
            )));
        }
        _ => {}
    }
    Ok(match (spec.regime, spec.significance, mode) {
        (Regime::Linear { s }, Significance::Fixed(delta), Mode::Randomized) => {
            Expansion::InvSqrt {
                leading: s,
                coeff: coeff_c(lambda, s, delta)?,
            }
        }
        (Regime::Linear { s }, Significance::Fixed(delta), Mode::Iid) => Expansion::InvSqrt {
            leading: s,
            coeff: -std_normal_quantile(delta)? * (s * (1.0 - s)).sqrt(),
        },
        (Regime::Linear { s }, Significance::Fixed(delta), Mode::Deterministic) => {
            if s <= delta {
                Expansion::LinearDeterministic { s, delta }
            } else {
                Expansion::Limit(1.0)
            }
        }
        (Regime::Linear { s }, Significance::Exponential { rate }, Mode::Randomized) => {
            Expansion::Limit(rate_limit_e(lambda, s, rate)?)
        }
        (Regime::Linear { s }, Significance::Exponential { rate }, Mode::Iid) => {
            Expansion::Limit(eps_div(s, rate)?.value)
        }
        (Regime::Constant { .. }, Significance::Fixed(delta), Mode::Randomized) => {
            Expansion::InvN {
                leading: 0.0,
                coeff: coeff_g(spec.budget(0, lambda, mode), delta, lambda)?,
            }
        }
        (Regime::Constant { k0 }, Significance::Fixed(delta), Mode::Iid) => Expansion::InvN {
            leading: 0.0,
            coeff: t_pois(k0, delta)?.value,
        },
        (Regime::Constant { k0 }, Significance::Fixed(delta), Mode::Deterministic) => {
            Expansion::InvN {
                leading: 0.0,
                coeff: (k0 as f64 + 1.0 - delta) / delta,
            }
        }
        (Regime::Constant { .. }, Significance::Exponential { rate }, Mode::Randomized) => {
            let ln_inv = -lambda.ln();
            Expansion::Limit(if rate <= ln_inv {
                rate / (rate + lambda * (ln_inv - rate))
            } else {
                1.0
            })
        }
        (Regime::Constant { .. }, Significance::Exponential { rate }, Mode::Iid) => {
            Expansion::Limit(-(-rate).exp_m1())
        }
        (_, Significance::Exponential { .. }, Mode::Deterministic) => Expansion::Limit(1.0),
    })
}

/// The exact limit at sample size `n` for the budget the regime prescribes.
pub fn ucl_regime_exact(spec: &RegimeSpec, n: u64, lambda: f64, mode: Mode) -> Result<ConfidenceBound> {
    let l = spec.budget(n, lambda, mode);
    let ln_delta = spec.ln_delta(n);
    if l >= n {
        return Ok(ConfidenceBound::trivial(match mode {
            Mode::Iid => crate::exact::Method::IidBisection,
            Mode::Deterministic => crate::exact::Method::ClosedFormLambda0,
            Mode::Randomized => crate::exact::Method::RegionExact,
        }));
    }
    match mode {
        Mode::Iid => ucl_iid_exact_ln(l, n, ln_delta),
        Mode::Deterministic => Ok(ucl_exact(&TestDesign::with_ln_delta(n, l, ln_delta, 0.0)?)),
        Mode::Randomized => Ok(ucl_exact(&TestDesign::with_ln_delta(n, l, ln_delta, lambda)?)),
    }
}
