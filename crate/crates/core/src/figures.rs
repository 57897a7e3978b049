//! Plot-ready datasets: one row per abscissa value, one column per curve.

use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{
    coeff_c_min, lambda_opt_linear, ucl_asymptotic, ucl_regime_exact, Mode, Regime, RegimeSpec,
    Significance,
};
use crate::detection::{detect_prob, optimal_lambda_detection, DetectionSetting};
use crate::error::{domain, Result};

/// Formats with 12 significant digits, positional when the exponent lies in
/// `[-5, 12)`, trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if (-5..12).contains(&exp) {
        let (int, frac) = if exp >= 0 {
            let split = exp as usize + 1;
            (digits[..split].to_string(), digits[split..].to_string())
        } else {
            ("0".to_string(), "0".repeat((-exp - 1) as usize) + &digits)
        };
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac}")
        }
    } else {
        let frac = digits[1..].trim_end_matches('0');
        let dot = if frac.is_empty() { "" } else { "." };
        format!("{sign}{}{dot}{frac}e{exp}", &digits[..1])
    }
}

/// Rounds to the value [`format_sig`] prints.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        format_sig(x).parse().expect("formatted float")
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub figure: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_sig(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// A copy with every value rounded to 12 significant digits.
    pub fn rounded(&self) -> Dataset {
        Dataset {
            figure: self.figure.clone(),
            columns: self.columns.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(|&v| round_sig(v)).collect()).collect(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn lambda_tag(lambda: f64) -> String {
    format!("lambda_{}", format_sig(lambda))
}

fn n_grid(n_max: u64, n_step: u64) -> Result<Vec<u64>> {
    if n_step == 0 || n_max < n_step {
        return domain("need 0 < n_step <= n_max");
    }
    Ok((1..=n_max / n_step).map(|i| i * n_step).collect())
}

fn gap_grid(gap_max: f64, gap_step: f64) -> Result<Vec<f64>> {
    if !(gap_step > 0.0 && gap_max >= 0.0) {
        return domain("need gap_step > 0 and gap_max >= 0");
    }
    let count = (gap_max / gap_step + 1e-9).floor() as u64;
    Ok((0..=count).map(|i| i as f64 * gap_step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstUclParams {
    pub k0: u64,
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub n_max: u64,
    pub n_step: u64,
}

impl Default for ConstUclParams {
    fn default() -> Self {
        Self {
            k0: 100,
            delta: 0.1,
            lambdas: vec![0.0, 0.01, 0.5, 0.95],
            n_max: 4000,
            n_step: 10,
        }
    }
}

/// Constant regime: exact limits next to their `1/n` asymptotes.
pub fn const_ucl(p: &ConstUclParams) -> Result<Dataset> {
    let spec = RegimeSpec::new(Regime::Constant { k0: p.k0 }, Significance::Fixed(p.delta))?;
    let mut curves: Vec<(String, f64, Mode)> = p
        .lambdas
        .iter()
        .map(|&l| {
            let mode = if l == 0.0 { Mode::Deterministic } else { Mode::Randomized };
            (lambda_tag(l), l, mode)
        })
        .collect();
    curves.push(("iid".into(), 0.0, Mode::Iid));
    let asymptotes = curves
        .iter()
        .map(|(_, l, m)| ucl_asymptotic(&spec, *l, *m))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["n".to_string()];
    for (tag, _, _) in &curves {
        columns.push(format!("exact_{tag}"));
        columns.push(format!("asym_{tag}"));
    }
    let rows = n_grid(p.n_max, p.n_step)?
        .into_par_iter()
        .map(|n| {
            let mut row = vec![n as f64];
            for ((_, l, m), asym) in curves.iter().zip(&asymptotes) {
                row.push(ucl_regime_exact(&spec, n, *l, *m)?.epsilon_bar);
                row.push(asym.eval(n));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        figure: "const-ucl".into(),
        columns,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearUclParams {
    pub s: f64,
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub n_max: u64,
    pub n_step: u64,
    /// Number of interior grid points used for the minimum over `lambda`.
    pub lambda_grid: u32,
}

impl Default for LinearUclParams {
    fn default() -> Self {
        Self {
            s: 0.1,
            delta: 0.1,
            lambdas: vec![0.01, 0.05],
            n_max: 4000,
            n_step: 10,
            lambda_grid: 99,
        }
    }
}

/// Linear regime: exact limits next to `s + C/sqrt(n)`, the minimum over
/// `lambda`, the iid benchmark and the unrandomized expansion.
pub fn linear_ucl(p: &LinearUclParams) -> Result<Dataset> {
    if !(p.delta < 0.5) {
        return domain("the linear-regime figure needs delta < 1/2");
    }
    let spec = RegimeSpec::new(Regime::Linear { s: p.s }, Significance::Fixed(p.delta))?;
    let lam_opt = lambda_opt_linear(p.s, p.delta)?.expect("delta < 1/2");
    let c_min = coeff_c_min(p.s, p.delta)?;
    let mut search: Vec<f64> = (1..=p.lambda_grid)
        .map(|i| i as f64 / (p.lambda_grid + 1) as f64)
        .collect();
    search.push(lam_opt);

    let mut curves: Vec<(String, f64, Mode)> = p
        .lambdas
        .iter()
        .map(|&l| (lambda_tag(l), l, Mode::Randomized))
        .collect();
    curves.push(("iid".into(), 0.0, Mode::Iid));
    curves.push((lambda_tag(0.0), 0.0, Mode::Deterministic));
    let asymptotes = curves
        .iter()
        .map(|(_, l, m)| ucl_asymptotic(&spec, *l, *m))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["n".to_string()];
    for (tag, _, _) in &curves {
        columns.push(format!("exact_{tag}"));
        columns.push(format!("asym_{tag}"));
    }
    columns.extend(["exact_at_opt", "exact_min", "asym_min"].map(String::from));

    let rows = n_grid(p.n_max, p.n_step)?
        .into_par_iter()
        .map(|n| {
            let mut row = vec![n as f64];
            for ((_, l, m), asym) in curves.iter().zip(&asymptotes) {
                row.push(ucl_regime_exact(&spec, n, *l, *m)?.epsilon_bar);
                row.push(asym.eval(n));
            }
            let at_opt = ucl_regime_exact(&spec, n, lam_opt, Mode::Randomized)?.epsilon_bar;
            let mut min = f64::INFINITY;
            for &l in &search {
                min = min.min(ucl_regime_exact(&spec, n, l, Mode::Randomized)?.epsilon_bar);
            }
            row.extend([at_opt, min, p.s + c_min / (n as f64).sqrt()]);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        figure: "linear-ucl".into(),
        columns,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptLambdaParams {
    pub thetas: Vec<f64>,
    pub delta: f64,
    pub gap_max: f64,
    pub gap_step: f64,
}

impl Default for OptLambdaParams {
    fn default() -> Self {
        Self {
            thetas: vec![1e-4, 1e-3, 1e-2, 0.1],
            delta: 0.1,
            gap_max: 3.0,
            gap_step: 0.05,
        }
    }
}

/// The detection-maximising `lambda` against the gap `e - t`.
pub fn opt_lambda(p: &OptLambdaParams) -> Result<Dataset> {
    let mut columns = vec!["gap".to_string()];
    columns.extend(p.thetas.iter().map(|t| format!("lambda_opt_theta0_{}", format_sig(*t))));
    let rows = gap_grid(p.gap_max, p.gap_step)?
        .into_iter()
        .map(|gap| {
            let mut row = vec![gap];
            for &theta0 in &p.thetas {
                row.push(optimal_lambda_detection(theta0, gap, p.delta)?.lambda);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        figure: "opt-lambda".into(),
        columns,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectProbParams {
    pub theta0: f64,
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub gap_max: f64,
    pub gap_step: f64,
}

impl Default for DetectProbParams {
    fn default() -> Self {
        Self {
            theta0: 0.1,
            delta: 0.1,
            lambdas: vec![0.1, 0.3],
            gap_max: 3.0,
            gap_step: 0.05,
        }
    }
}

/// Limiting detection probabilities against the gap `e - t`.
pub fn detect_prob_curve(p: &DetectProbParams) -> Result<Dataset> {
    let mut columns = vec!["gap".to_string(), "iid".to_string()];
    columns.extend(p.lambdas.iter().map(|l| format!("randomized_{}", lambda_tag(*l))));
    columns.extend(["randomized_opt", "lambda_opt"].map(String::from));
    let rows = gap_grid(p.gap_max, p.gap_step)?
        .into_iter()
        .map(|gap| {
            let base = DetectionSetting::new(p.theta0, gap, 0.0, p.delta, 0.0)?;
            let mut row = vec![gap, detect_prob(&base, Mode::Iid)];
            for &lambda in &p.lambdas {
                let s = DetectionSetting::new(p.theta0, gap, 0.0, p.delta, lambda)?;
                row.push(detect_prob(&s, Mode::Randomized));
            }
            let opt = optimal_lambda_detection(p.theta0, gap, p.delta)?;
            row.push(crate::special::std_normal_cdf(opt.kappa));
            row.push(opt.lambda);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        figure: "detect-prob".into(),
        columns,
        rows,
    })
}
