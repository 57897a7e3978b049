//! Minimum sample sizes and maximum failure budgets for a target `(eps, delta)`.

use serde::Serialize;

use crate::asymptotics::{coeff_c, coeff_c_min, coeff_g, rate_for_limit_e, rate_inverse_e, Mode};
use crate::binomial::{ln_cdf_unchecked, z_star};
use crate::ceil_guarded;
use crate::error::{check_open_unit, domain, Error, Result};
use crate::exact::{ucl_exact, ucl_iid_exact, TestDesign};
use crate::special::{rel_entropy, s_div, std_normal_quantile, t_pois};

/// Sample sizes scanned before a linear-regime target is declared infeasible.
pub const SCAN_CAP: u64 = 10_000_000;

/// Doublings of the upper bracket before a constant-regime target is
/// declared infeasible.
const MAX_DOUBLINGS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMethod {
    ExactSearch,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanResult {
    pub value: u64,
    pub method: PlanMethod,
    /// Limit at `value`, then at the neighbour one step toward infeasibility.
    pub certificate: Option<(f64, f64)>,
}

/// The test being planned for: the randomized test with a given `lambda`
/// (zero gives the unrandomized test) or the iid benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
enum Bench {
    Randomized(f64),
    Iid,
}

impl Bench {
    fn from_mode(mode: Mode, lambda: f64) -> Result<Self> {
        match mode {
            Mode::Iid => Ok(Bench::Iid),
            Mode::Deterministic if lambda != 0.0 => Err(Error::Incompatible(format!(
                "deterministic mode needs lambda = 0, got {lambda}"
            ))),
            Mode::Deterministic => Ok(Bench::Randomized(0.0)),
            Mode::Randomized => {
                check_lambda(lambda)?;
                Ok(Bench::Randomized(lambda))
            }
        }
    }

    fn bound(self, l: u64, n: u64, delta: f64) -> Result<f64> {
        if l >= n {
            return Ok(1.0);
        }
        match self {
            Bench::Randomized(lambda) => Ok(ucl_exact(&TestDesign::new(n, l, delta, lambda)?).epsilon_bar),
            Bench::Iid => Ok(ucl_iid_exact(l, n, delta)?.epsilon_bar),
        }
    }

    fn feasible(self, l: u64, n: u64, delta: f64, eps: f64) -> Result<bool> {
        if l >= n {
            return Ok(false);
        }
        match self {
            Bench::Randomized(_) => Ok(self.bound(l, n, delta)? <= eps),
            // The iid limit is at most eps exactly when B_{n,l}(eps) <= delta.
            Bench::Iid => Ok(ln_cdf_unchecked(n, l, eps) <= delta.ln()),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return domain(format!("lambda = {lambda} must lie in [0, 1)"));
    }
    Ok(())
}

fn check_target(eps: f64, delta: f64) -> Result<()> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta)
}

/// Analytic bracket `(lower, upper)` on the constant-regime sample size for
/// `0 < lambda` and `delta <= 1/2`.
pub fn constant_n_bracket(l: u64, eps: f64, delta: f64, lambda: f64) -> Result<(f64, f64)> {
    check_target(eps, delta)?;
    check_open_unit("lambda", lambda)?;
    if delta > 0.5 {
        return domain("the bracket needs delta <= 1/2");
    }
    let crit = z_star(l, delta, lambda)?;
    let (zu, zl, lf) = (crit.upper as f64, crit.lower as f64, l as f64);
    let lower = (1.0 / eps - 1.0) * (zl - lf) / lambda + zl - 1.0;
    let upper = (zu - lf + 1.0 + (lambda * lf).sqrt()) / (lambda * eps);
    Ok((lower, upper))
}

fn min_n_monotone(bench: Bench, l: u64, eps: f64, delta: f64, start: u64) -> Result<PlanResult> {
    let first = l + 1;
    let mut hi = start.max(first);
    let mut doublings = 0;
    while !bench.feasible(l, hi, delta, eps)? {
        if doublings == MAX_DOUBLINGS || hi > u64::MAX / 2 {
            return Err(Error::Infeasible(format!(
                "no sample size up to {hi} reaches eps = {eps} with l = {l}, delta = {delta}"
            )));
        }
        hi *= 2;
        doublings += 1;
    }
    let mut lo = first;
    if !bench.feasible(l, lo, delta, eps)? {
        // Invariant: lo infeasible, hi feasible.
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if bench.feasible(l, mid, delta, eps)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = lo;
    }
    let prev = if hi > first { bench.bound(l, hi - 1, delta)? } else { 1.0 };
    Ok(PlanResult {
        value: hi,
        method: PlanMethod::ExactSearch,
        certificate: Some((bench.bound(l, hi, delta)?, prev)),
    })
}

/// Smallest `n > l` with the randomized limit at most `eps`.
pub fn min_n_constant_exact(l: u64, eps: f64, delta: f64, lambda: f64) -> Result<PlanResult> {
    check_target(eps, delta)?;
    check_lambda(lambda)?;
    let start = if lambda > 0.0 && delta <= 0.5 {
        constant_n_bracket(l, eps, delta, lambda)?.1.ceil() as u64
    } else {
        (((l + 1) as f64 / (delta * eps)).ceil() as u64).saturating_add(l + 1)
    };
    min_n_monotone(Bench::Randomized(lambda), l, eps, delta, start)
}

/// Smallest `n > k` with the iid limit at most `eps`.
pub fn min_n_iid_constant_exact(k: u64, eps: f64, delta: f64) -> Result<PlanResult> {
    check_target(eps, delta)?;
    let start = (t_pois(k, delta)?.value / eps).ceil() as u64;
    min_n_monotone(Bench::Iid, k, eps, delta, start)
}

fn min_n_scan(bench: Bench, s: f64, eps: f64, delta: f64, warm: Option<f64>) -> Result<PlanResult> {
    if !(0.0..1.0).contains(&s) {
        return domain(format!("s = {s} must lie in [0, 1)"));
    }
    check_target(eps, delta)?;
    if delta <= 0.5 && eps <= s {
        return Err(Error::Infeasible(format!(
            "the limit exceeds s = {s} at every n when delta <= 1/2"
        )));
    }
    let scale = match bench {
        Bench::Randomized(lambda) => 1.0 - lambda,
        Bench::Iid => 1.0,
    };
    let budget = |n: u64| ceil_guarded(scale * s * n as f64) as u64;
    let check = |n: u64| bench.feasible(budget(n), n, delta, eps);
    let scan = |from: u64, to: u64| -> Result<Option<u64>> {
        for n in from..=to {
            if check(n)? {
                return Ok(Some(n));
            }
        }
        Ok(None)
    };

    let start = warm
        .filter(|w| w.is_finite() && *w >= 2.0)
        .map(|w| (0.5 * w).floor() as u64)
        .unwrap_or(1)
        .clamp(1, SCAN_CAP);
    let found = if start > 1 && check(start)? {
        // Warm start already feasible: fall back to the full scan.
        scan(1, start)?
    } else {
        scan(start, SCAN_CAP)?
    };
    let n = found.ok_or_else(|| {
        Error::Infeasible(format!("no sample size up to {SCAN_CAP} reaches eps = {eps}"))
    })?;
    let prev = if n > 1 { bench.bound(budget(n - 1), n - 1, delta)? } else { 1.0 };
    Ok(PlanResult {
        value: n,
        method: PlanMethod::ExactSearch,
        certificate: Some((bench.bound(budget(n), n, delta)?, prev)),
    })
}

/// Smallest `n` with the randomized limit at budget `ceil(nu s n)` at most
/// `eps`.
pub fn min_n_linear_exact(s: f64, eps: f64, delta: f64, lambda: f64) -> Result<PlanResult> {
    check_lambda(lambda)?;
    check_target(eps, delta)?;
    let warm = if lambda > 0.0 && delta <= 0.5 && eps > s {
        let c = coeff_c(lambda, s, delta)?;
        (c > 0.0).then(|| (c / (eps - s)).powi(2))
    } else if lambda == 0.0 && delta <= 0.5 && eps > s / delta {
        let c = (1.0 - s + s * s - delta) / (delta * (1.0 - s)) + 0.5 / delta;
        Some(c / (eps - s / delta))
    } else {
        None
    };
    min_n_scan(Bench::Randomized(lambda), s, eps, delta, warm)
}

/// Smallest `n` with the iid limit at budget `ceil(s n)` at most `eps`.
pub fn min_n_iid_linear_exact(s: f64, eps: f64, delta: f64) -> Result<PlanResult> {
    check_target(eps, delta)?;
    let warm = (delta <= 0.5 && eps > s).then(|| {
        let q = std_normal_quantile(delta).unwrap_or(0.0);
        q * q * s * (1.0 - s) / (eps - s).powi(2)
    });
    min_n_scan(Bench::Iid, s, eps, delta, warm)
}

/// Largest budget `l` with the limit at `n` at most `eps`; `None` when even
/// `l = 0` fails.
pub fn max_failures_exact(n: u64, eps: f64, delta: f64, lambda: f64, mode: Mode) -> Result<Option<PlanResult>> {
    if n == 0 {
        return domain("n must be positive");
    }
    check_target(eps, delta)?;
    let bench = match mode {
        Mode::Randomized => {
            check_lambda(lambda)?;
            Bench::Randomized(lambda)
        }
        _ => Bench::from_mode(mode, lambda)?,
    };
    if !bench.feasible(0, n, delta, eps)? {
        return Ok(None);
    }
    // Invariant: lo feasible, hi infeasible.
    let (mut lo, mut hi) = (0u64, n);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if bench.feasible(mid, n, delta, eps)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(PlanResult {
        value: lo,
        method: PlanMethod::ExactSearch,
        certificate: Some((bench.bound(lo, n, delta)?, bench.bound(lo + 1, n, delta)?)),
    }))
}

/// Leading-order planning formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PlanQuery {
    /// Sample size in the linear regime as `eps` approaches `s`.
    LinearSmallEps { mode: Mode, lambda: f64, s: f64, eps: f64, delta: f64 },
    /// As above, minimised over `lambda`.
    LinearSmallEpsOptimal { s: f64, eps: f64, delta: f64 },
    /// Sample size in the linear regime as `delta` vanishes.
    LinearSmallDelta { mode: Mode, lambda: f64, s: f64, eps: f64, delta: f64 },
    /// Sample size in the constant regime as `eps` vanishes.
    ConstantSmallEps { mode: Mode, lambda: f64, k0: u64, eps: f64, delta: f64 },
    /// Sample size in the constant regime as `delta` vanishes.
    ConstantSmallDelta { mode: Mode, lambda: f64, k0: u64, eps: f64, delta: f64 },
    /// Failure budget at large `n`, before rounding down.
    MaxFailures { mode: Mode, lambda: f64, n: u64, eps: f64, delta: f64 },
    /// Failure budget at large `n` with `delta = exp(-rate n)`.
    MaxFailuresRate { mode: Mode, lambda: f64, n: u64, eps: f64, rate: f64 },
    /// The limit of `eps N / ln(1/delta)` in the constant regime.
    TwoLimit { lambda: f64 },
}

/// The `lambda` minimising [`two_limit_constant`].
pub fn two_limit_optimal_lambda() -> f64 {
    std::f64::consts::E.recip()
}

/// `1 / (lambda ln(1/lambda))`.
pub fn two_limit_constant(lambda: f64) -> Result<f64> {
    check_open_unit("lambda", lambda)?;
    Ok(1.0 / (lambda * -lambda.ln()))
}

fn needs_randomized(mode: Mode, lambda: f64) -> Result<()> {
    match mode {
        Mode::Randomized => check_open_unit("lambda", lambda),
        Mode::Deterministic if lambda != 0.0 => Err(Error::Incompatible(format!(
            "deterministic mode needs lambda = 0, got {lambda}"
        ))),
        _ => Ok(()),
    }
}

/// Evaluates a leading-order planning formula.
pub fn plan_asymptotics(query: PlanQuery) -> Result<f64> {
    match query {
        PlanQuery::LinearSmallEps { mode, lambda, s, eps, delta } => {
            needs_randomized(mode, lambda)?;
            check_target(eps, delta)?;
            if !(0.0..eps).contains(&s) || delta > 0.5 {
                return domain("need 0 <= s < eps and delta <= 1/2");
            }
            match mode {
                Mode::Randomized => Ok((coeff_c(lambda, s, delta)? / (eps - s)).powi(2)),
                Mode::Iid => {
                    let q = std_normal_quantile(delta)?;
                    Ok(q * q * s * (1.0 - s) / (eps - s).powi(2))
                }
                Mode::Deterministic => Err(Error::Incompatible(
                    "the unrandomized linear-regime size is only bounded near s / delta".into(),
                )),
            }
        }
        PlanQuery::LinearSmallEpsOptimal { s, eps, delta } => {
            check_target(eps, delta)?;
            if !(0.0..eps).contains(&s) || delta > 0.5 {
                return domain("need 0 <= s < eps and delta <= 1/2");
            }
            Ok((coeff_c_min(s, delta)? / (eps - s)).powi(2))
        }
        PlanQuery::LinearSmallDelta { mode, lambda, s, eps, delta } => {
            needs_randomized(mode, lambda)?;
            check_target(eps, delta)?;
            if !(0.0..eps).contains(&s) {
                return domain("need 0 <= s < eps");
            }
            let rate = match mode {
                Mode::Randomized => rate_for_limit_e(lambda, s, eps)?.value,
                Mode::Iid => rel_entropy(s, eps)?,
                Mode::Deterministic => {
                    return Err(Error::Incompatible(
                        "the unrandomized limit tends to one as delta vanishes".into(),
                    ))
                }
            };
            Ok(-delta.ln() / rate)
        }
        PlanQuery::ConstantSmallEps { mode, lambda, k0, eps, delta } => {
            needs_randomized(mode, lambda)?;
            check_target(eps, delta)?;
            let coeff = match mode {
                Mode::Deterministic => (k0 as f64 + 1.0 - delta) / delta,
                Mode::Randomized => {
                    coeff_g(ceil_guarded((1.0 - lambda) * k0 as f64) as u64, delta, lambda)?
                }
                Mode::Iid => t_pois(k0, delta)?.value,
            };
            Ok(coeff / eps)
        }
        PlanQuery::ConstantSmallDelta { mode, lambda, k0, eps, delta } => {
            needs_randomized(mode, lambda)?;
            check_target(eps, delta)?;
            let ln_inv = -delta.ln();
            Ok(match mode {
                Mode::Deterministic => (k0 as f64 + 1.0) / (delta * eps),
                Mode::Randomized => {
                    (1.0 - (1.0 - lambda) * eps) * ln_inv / (lambda * eps * -lambda.ln())
                }
                Mode::Iid => ln_inv / -(-eps).ln_1p(),
            })
        }
        PlanQuery::MaxFailures { mode, lambda, n, eps, delta } => {
            needs_randomized(mode, lambda)?;
            check_target(eps, delta)?;
            let nf = n as f64;
            Ok(match mode {
                Mode::Deterministic => {
                    let de = delta * eps;
                    de * nf - (1.0 - delta - de + de * de) / (1.0 - de)
                }
                Mode::Randomized => {
                    let nu = 1.0 - lambda;
                    eps * nu * nf - coeff_c(lambda, eps, delta)? * nu * nf.sqrt()
                }
                Mode::Iid => {
                    eps * nf + std_normal_quantile(delta)? * (eps * (1.0 - eps) * nf).sqrt()
                }
            })
        }
        PlanQuery::MaxFailuresRate { mode, lambda, n, eps, rate } => {
            needs_randomized(mode, lambda)?;
            check_open_unit("eps", eps)?;
            let nf = n as f64;
            match mode {
                Mode::Randomized => {
                    Ok((1.0 - lambda) * rate_inverse_e(lambda, rate, eps)?.value * nf)
                }
                Mode::Iid => Ok(s_div(eps, rate)?.value * nf),
                Mode::Deterministic => Err(Error::Incompatible(
                    "the unrandomized limit tends to one under exponential delta".into(),
                )),
            }
        }
        PlanQuery::TwoLimit { lambda } => two_limit_constant(lambda),
    }
}
