//! Limiting detection probabilities when the variables are in fact iid with
//! failure rate `theta0 + t/sqrt(n)` and the target is `eps = theta0 + e/sqrt(n)`.

use serde::Serialize;

use crate::asymptotics::{coeff_c, Mode};
use crate::error::{check_open_unit, domain, Result};
use crate::special::{psi, std_normal_cdf, std_normal_quantile, InverseSolve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionSetting {
    pub theta0: f64,
    /// Target offset.
    pub e: f64,
    /// Truth offset.
    pub t: f64,
    pub delta: f64,
    pub lambda: f64,
    pub p0: Option<f64>,
}

impl DetectionSetting {
    pub fn new(theta0: f64, e: f64, t: f64, delta: f64, lambda: f64) -> Result<Self> {
        check_open_unit("theta0", theta0)?;
        check_open_unit("delta", delta)?;
        if !(0.0..1.0).contains(&lambda) {
            return domain(format!("lambda = {lambda} must lie in [0, 1)"));
        }
        if !(e.is_finite() && t.is_finite()) {
            return domain("offsets must be finite");
        }
        Ok(Self {
            theta0,
            e,
            t,
            delta,
            lambda,
            p0: None,
        })
    }

    pub fn with_p0(mut self, p0: f64) -> Result<Self> {
        check_open_unit("p0", p0)?;
        self.p0 = Some(p0);
        Ok(self)
    }

    pub fn gap(&self) -> f64 {
        self.e - self.t
    }
}

/// Coefficients of the objective `kappa(lambda)` maximised over `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubicCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    theta0: f64,
    psi: f64,
    gap: f64,
}

impl CubicCoefficients {
    pub fn new(theta0: f64, gap: f64, delta: f64) -> Result<Self> {
        check_open_unit("theta0", theta0)?;
        check_open_unit("delta", delta)?;
        let alpha = std_normal_quantile(delta)?;
        let psi = psi(delta)?;
        Ok(Self {
            alpha,
            beta: -alpha * psi * (1.0 - theta0),
            gamma: gap / theta0.sqrt(),
            theta0,
            psi,
            gap,
        })
    }

    /// The standardized detection threshold as a function of `lambda`.
    pub fn kappa(&self, lambda: f64) -> f64 {
        let nu = 1.0 - lambda;
        (self.alpha * lambda.sqrt() + self.beta * nu / lambda.sqrt() + self.gamma * nu.sqrt())
            / (1.0 - self.theta0 * nu).sqrt()
    }

    /// Right side minus left side of the stationarity cubic; its zero in
    /// `(0, 1)` maximises `kappa`.
    pub fn residual(&self, lambda: f64) -> f64 {
        let th = self.theta0;
        let lin = (1.0 + (1.0 + th) * self.psi) * lambda + (1.0 - th) * self.psi;
        let lhs = (1.0 - lambda) * (self.alpha * (1.0 - th)).powi(2) * lin * lin;
        self.gap * self.gap / th * lambda.powi(3) - lhs
    }
}

/// Standardized threshold whose normal cdf is the limiting detection
/// probability; `-inf` for the unrandomized test.
pub fn detect_threshold(setting: &DetectionSetting, mode: Mode) -> f64 {
    let s = setting;
    match mode {
        Mode::Iid => {
            s.gap() / (s.theta0 * (1.0 - s.theta0)).sqrt()
                + std_normal_quantile(s.delta).unwrap_or(f64::NAN)
        }
        Mode::Randomized if s.lambda > 0.0 => {
            let nu = 1.0 - s.lambda;
            let c = coeff_c(s.lambda, s.theta0, s.delta).unwrap_or(f64::NAN);
            nu.sqrt() / (s.theta0 * (1.0 - s.theta0 * nu)).sqrt() * (s.gap() - c)
        }
        _ => f64::NEG_INFINITY,
    }
}

/// The unrandomized threshold at finite `n`, before its divergence.
pub fn deterministic_threshold_at(setting: &DetectionSetting, n: u64) -> f64 {
    let s = setting;
    let spread = (s.theta0 * (1.0 - s.theta0)).sqrt();
    -(1.0 - s.delta) * (s.theta0 * n as f64).sqrt() / (1.0 - s.theta0).sqrt()
        + (s.delta * s.e - s.t) / spread
}

pub fn detect_prob(setting: &DetectionSetting, mode: Mode) -> f64 {
    std_normal_cdf(detect_threshold(setting, mode))
}

/// The two terms of each threshold, iid first: `(gap terms, level terms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentTerms {
    pub gap_iid: f64,
    pub gap_randomized: f64,
    pub level_iid: f64,
    pub level_randomized: f64,
}

pub fn component_terms(setting: &DetectionSetting) -> Result<ComponentTerms> {
    let s = setting;
    check_open_unit("lambda", s.lambda)?;
    let nu = 1.0 - s.lambda;
    let scale = nu.sqrt() / (s.theta0 * (1.0 - s.theta0 * nu)).sqrt();
    Ok(ComponentTerms {
        gap_iid: s.gap() / (s.theta0 * (1.0 - s.theta0)).sqrt(),
        gap_randomized: scale * s.gap(),
        level_iid: std_normal_quantile(s.delta)?,
        level_randomized: -scale * coeff_c(s.lambda, s.theta0, s.delta)?,
    })
}

/// Smallest `e - t` reaching detection probability `p0` in the limit.
pub fn required_gap(theta0: f64, delta: f64, lambda: f64, p0: f64) -> Result<f64> {
    check_open_unit("theta0", theta0)?;
    check_open_unit("p0", p0)?;
    let nu = 1.0 - lambda;
    Ok(coeff_c(lambda, theta0, delta)?
        + (theta0 * (1.0 - theta0 * nu)).sqrt() / nu.sqrt() * std_normal_quantile(p0)?)
}

/// The maximising `lambda` and the maximal threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalLambda {
    pub lambda: f64,
    pub kappa: f64,
    pub solve: InverseSolve,
}

/// Maximises the randomized threshold over `lambda` for `delta < 1/2`.
///
/// At `gap = 0` the cubic has no root in `(0, 1)` and the supremum is the
/// `lambda -> 1` limit `Phi^{-1}(delta)`, reported as `lambda = 1`.
pub fn optimal_lambda_detection(theta0: f64, gap: f64, delta: f64) -> Result<OptimalLambda> {
    check_open_unit("delta", delta)?;
    if delta >= 0.5 {
        return domain(format!("delta = {delta} must be below 1/2"));
    }
    if !(gap >= 0.0 && gap.is_finite()) {
        return domain(format!("gap = {gap} must be nonnegative"));
    }
    let cubic = CubicCoefficients::new(theta0, gap, delta)?;
    if gap == 0.0 {
        return Ok(OptimalLambda {
            lambda: 1.0,
            kappa: cubic.alpha,
            solve: InverseSolve {
                value: 1.0,
                residual: 0.0,
                iterations: 0,
            },
        });
    }
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cubic.residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let lambda = 0.5 * (lo + hi);
    Ok(OptimalLambda {
        lambda,
        kappa: cubic.kappa(lambda),
        solve: InverseSolve {
            value: lambda,
            residual: cubic.residual(lambda),
            iterations,
        },
    })
}
