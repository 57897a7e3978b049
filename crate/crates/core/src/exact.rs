//! Exact upper confidence limits.
//!
//! Every permutation-invariant adversary is a mixture of the `n + 2`
//! distributions that fix the total number of failures `z` among the
//! `n + 1` variables. For each `z` the pair `(h_z, g_z)` records the
//! acceptance probability and the joint probability of accepting with a
//! successful held-out variable. The confidence limit is read off the lower
//! boundary of their convex hull at abscissa `delta`.
//!
//! All region quantities are handled as logarithms so designs with
//! `delta = exp(-r n)` far below the smallest normal double still work; only
//! the handful of vertices around the active one are ever evaluated.

use serde::Serialize;

use crate::binomial::{ln_cdf_unchecked, ln_ccdf_unchecked, ln_pmf_unchecked, z_star_ln};
use crate::error::{check_open_unit, domain, Result};

/// A randomized test instance: `n` observations, failure budget `l`,
/// significance level `delta` and randomization parameter `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestDesign {
    n: u64,
    l: u64,
    delta: f64,
    ln_delta: f64,
    lambda: f64,
}

impl TestDesign {
    pub fn new(n: u64, l: u64, delta: f64, lambda: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return domain(format!("delta = {delta} must lie in (0, 1]"));
        }
        let mut design = Self::with_ln_delta(n, l, delta.ln(), lambda)?;
        design.delta = delta;
        Ok(design)
    }

    /// Builds a design from `ln delta`, for levels below the double range.
    pub fn with_ln_delta(n: u64, l: u64, ln_delta: f64, lambda: f64) -> Result<Self> {
        if n < l + 1 {
            return domain(format!("need n >= l + 1 (n = {n}, l = {l})"));
        }
        if !(ln_delta <= 0.0 && ln_delta.is_finite()) {
            return domain(format!("ln delta = {ln_delta} must be finite and nonpositive"));
        }
        if !(0.0..1.0).contains(&lambda) {
            return domain(format!("lambda = {lambda} must lie in [0, 1)"));
        }
        Ok(Self {
            n,
            l,
            delta: ln_delta.exp(),
            ln_delta,
            lambda,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn l(&self) -> u64 {
        self.l
    }

    /// The significance level; zero if it underflows.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn ln_delta(&self) -> f64 {
        self.ln_delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        1.0 - self.lambda
    }

    pub(crate) fn region(&self) -> Region {
        Region {
            n: self.n,
            l: self.l,
            lambda: self.lambda,
            ln_n1: ((self.n + 1) as f64).ln(),
        }
    }
}

/// One extremal point of the achievable region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionPoint {
    pub z: u64,
    /// Acceptance probability given `z` failures.
    pub h: f64,
    /// Probability of accepting with a successful held-out variable.
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RegionExact,
    ClosedFormLambda0,
    IidBisection,
    OracleLp,
    Asymptotic,
}

/// An upper confidence limit and its complement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceBound {
    pub epsilon_bar: f64,
    pub complement: f64,
    pub method: Method,
    /// Vertex at which the lower boundary is read, when one is active.
    pub z_hat: Option<u64>,
}

impl ConfidenceBound {
    pub(crate) fn from_parts(eps: f64, comp: f64, method: Method, z_hat: Option<u64>) -> Self {
        // Keep whichever side was computed without cancellation.
        let (eps, comp) = if eps <= 0.5 {
            let e = eps.clamp(0.0, 1.0);
            (e, 1.0 - e)
        } else {
            let c = comp.clamp(0.0, 1.0);
            (1.0 - c, c)
        };
        Self {
            epsilon_bar: eps,
            complement: comp,
            method,
            z_hat,
        }
    }

    pub(crate) fn trivial(method: Method) -> Self {
        Self {
            epsilon_bar: 1.0,
            complement: 0.0,
            method,
            z_hat: None,
        }
    }
}

fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn ln_u(x: u64) -> f64 {
    (x as f64).ln()
}

/// Log-domain accessors for the region vertices of one design.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Region {
    n: u64,
    l: u64,
    lambda: f64,
    ln_n1: f64,
}

impl Region {
    fn ln_b(&self, z: u64) -> f64 {
        ln_cdf_unchecked(z, self.l, 1.0 - self.lambda)
    }

    fn ln_delta_b(&self, z: u64) -> f64 {
        (1.0 - self.lambda).ln() + ln_pmf_unchecked(z, self.l, 1.0 - self.lambda)
    }

    pub(crate) fn ln_h(&self, z: u64) -> f64 {
        if z <= self.l {
            return 0.0;
        }
        let held = ln_u(self.n + 1 - z) + self.ln_b(z);
        let seen = ln_u(z) + self.ln_b(z - 1);
        let ln_h = ln_add(held, seen) - self.ln_n1;
        if ln_h < -0.5 {
            return ln_h;
        }
        // Near one, go through the rejection mass to keep h monotone.
        let nu = 1.0 - self.lambda;
        let held = ln_u(self.n + 1 - z) + ln_ccdf_unchecked(z, self.l, nu);
        let seen = ln_u(z) + ln_ccdf_unchecked(z - 1, self.l, nu);
        (-(ln_add(held, seen) - self.ln_n1).exp()).ln_1p()
    }

    pub(crate) fn ln_g(&self, z: u64) -> f64 {
        let base = ln_u(self.n + 1 - z) - self.ln_n1;
        if z <= self.l {
            base
        } else {
            base + self.ln_b(z)
        }
    }

    /// `h_z - g_z`, the mass of accepting with a failed held-out variable.
    pub(crate) fn ln_e(&self, z: u64) -> f64 {
        if z == 0 {
            return f64::NEG_INFINITY;
        }
        let base = ln_u(z) - self.ln_n1;
        if z <= self.l {
            base
        } else {
            base + self.ln_b(z - 1)
        }
    }

    /// `h_z - h_{z+1}` for `l <= z <= n`.
    pub(crate) fn ln_dh(&self, z: u64) -> f64 {
        let a = ln_u(self.n - z) + self.ln_delta_b(z);
        let b = if z == 0 {
            f64::NEG_INFINITY
        } else {
            ln_u(z) + self.ln_delta_b(z - 1)
        };
        ln_add(a, b) - self.ln_n1
    }

    pub(crate) fn point(&self, z: u64) -> RegionPoint {
        RegionPoint {
            z,
            h: self.ln_h(z).exp(),
            g: self.ln_g(z).exp(),
        }
    }

    /// `g_z / h_z` from the defining formulas, extended past `n + 1`.
    pub(crate) fn ratio(&self, z: i64) -> f64 {
        let n = self.n as f64;
        if z < 0 {
            return 1.0;
        }
        let zu = z as u64;
        if zu <= self.l {
            return (n - z as f64 + 1.0) / (n + 1.0);
        }
        let a = n - z as f64 + 1.0;
        let b = z as f64 * (self.ln_b(zu - 1) - self.ln_b(zu)).exp();
        a / (a + b)
    }
}

/// The `n + 2` vertices `(h_z, g_z)` for `z = 0..=n+1`.
pub fn region_points(design: &TestDesign) -> Vec<RegionPoint> {
    let region = design.region();
    (0..=design.n + 1).map(|z| region.point(z)).collect()
}

/// A single vertex, evaluated on demand.
pub fn region_point(design: &TestDesign, z: u64) -> Result<RegionPoint> {
    if z > design.n + 1 {
        return domain(format!("z = {z} exceeds n + 1 = {}", design.n + 1));
    }
    Ok(design.region().point(z))
}

pub fn ucl_exact(design: &TestDesign) -> ConfidenceBound {
    if design.lambda == 0.0 {
        return ucl_lambda0(design);
    }
    let region = design.region();
    let (n, l, ln_delta) = (design.n, design.l, design.ln_delta);
    if ln_delta <= region.ln_h(n + 1) {
        return ConfidenceBound::trivial(Method::RegionExact);
    }
    // h is strictly decreasing on [l, n + 1]; h_l = 1 >= delta > h_{n+1}.
    let (mut lo, mut hi) = (l, n + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if region.ln_h(mid) >= ln_delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = lo;
    let gap = -(region.ln_h(z + 1) - ln_delta).exp_m1();
    let kappa = ((ln_delta - region.ln_dh(z)).exp() * gap).clamp(0.0, 1.0);
    let mix = |f: &dyn Fn(u64) -> f64| {
        (1.0 - kappa) * (f(z + 1) - ln_delta).exp() + kappa * (f(z) - ln_delta).exp()
    };
    let eps = mix(&|k| region.ln_e(k));
    let comp = mix(&|k| region.ln_g(k));
    ConfidenceBound::from_parts(eps, comp, Method::RegionExact, Some(z))
}

fn ucl_lambda0(design: &TestDesign) -> ConfidenceBound {
    let (n, l) = (design.n as f64, design.l as f64);
    if design.ln_delta < ((l + 1.0) / (n + 1.0)).ln() {
        return ConfidenceBound::trivial(Method::ClosedFormLambda0);
    }
    let delta = design.delta();
    let eps = ((l + 1.0) * (n + 1.0 - l) - delta * (n + 1.0)) / (delta * (n - l) * (n + 1.0));
    let comp = ((n + 1.0) * (delta * (n - l) + delta) - (l + 1.0) * (n + 1.0 - l))
        / (delta * (n - l) * (n + 1.0));
    ConfidenceBound::from_parts(eps, comp, Method::ClosedFormLambda0, Some(design.l))
}

/// Largest `theta` with `B_{n,k}(theta) >= delta`.
pub fn ucl_iid_exact(k: u64, n: u64, delta: f64) -> Result<ConfidenceBound> {
    if !(delta > 0.0 && delta <= 1.0) {
        return domain(format!("delta = {delta} must lie in (0, 1]"));
    }
    ucl_iid_exact_ln(k, n, delta.ln())
}

/// [`ucl_iid_exact`] with the level given as `ln delta`.
pub fn ucl_iid_exact_ln(k: u64, n: u64, ln_delta: f64) -> Result<ConfidenceBound> {
    if k >= n {
        return domain(format!("need k < n (k = {k}, n = {n})"));
    }
    if !(ln_delta <= 0.0 && ln_delta.is_finite()) {
        return domain(format!("ln delta = {ln_delta} must be finite and nonpositive"));
    }
    if ln_delta == 0.0 {
        return Ok(ConfidenceBound::from_parts(0.0, 1.0, Method::IidBisection, None));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_cdf_unchecked(n, k, mid) >= ln_delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ConfidenceBound::from_parts(
        lo,
        1.0 - lo,
        Method::IidBisection,
        None,
    ))
}

/// The significance level at which the vertex `z` is active for `l = 0`, and
/// the limit attained there.
pub fn delta_z_schedule(n: u64, lambda: f64, z: u64) -> Result<(f64, f64)> {
    check_open_unit("lambda", lambda)?;
    if z > n + 1 {
        return domain(format!("z = {z} exceeds n + 1 = {}", n + 1));
    }
    let (nf, zf) = (n as f64, z as f64);
    let seen = if z == 0 { 0.0 } else { zf * lambda.powi(z as i32 - 1) };
    let delta = ((nf + 1.0 - zf) * lambda.powi(z as i32) + seen) / (nf + 1.0);
    let ucl = if z == 0 {
        0.0
    } else {
        zf / (zf + (nf - zf + 1.0) * lambda)
    };
    Ok((delta, ucl))
}

/// Analytic brackets for the complement `1 - epsilon_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub comp_lower: f64,
    pub comp_upper: f64,
    /// `1 - (z* - l + 1 + sqrt(lambda l)) / (lambda n)`, the simplest lower
    /// bound, available when `delta <= 1/2`.
    pub comp_lower_simple: Option<f64>,
}

pub fn ucl_sandwich(design: &TestDesign) -> Result<Sandwich> {
    check_open_unit("lambda", design.lambda)?;
    if design.ln_delta >= 0.0 {
        return domain("sandwich bounds need delta < 1");
    }
    let region = design.region();
    let (n, l, lambda) = (design.n as f64, design.l as f64, design.lambda);
    let crit = z_star_ln(design.l, design.ln_delta, lambda)?;
    let (zu, zl) = (crit.upper as f64, crit.lower as f64);

    let mut lower = region
        .ratio(crit.upper as i64 + 1)
        .max(lambda * (n - zu) / (lambda * (n - zu) + zu + 1.0));
    let half = design.ln_delta <= 0.5f64.ln();
    let slack = zu - l + 1.0 + (lambda * l).sqrt();
    if half {
        lower = lower.max(lambda * (n - zu) / (lambda * (n - zu) + slack));
    }
    let held = lambda * (n - zl + 1.0);
    let linear_upper = if held <= 0.0 {
        0.0
    } else {
        (held / (held + zl - l)).max(0.0)
    };
    let upper = region.ratio(crit.lower).max(0.0).min(linear_upper);
    Ok(Sandwich {
        comp_lower: lower,
        comp_upper: upper,
        comp_lower_simple: half.then(|| 1.0 - slack / (lambda * n)),
    })
}
