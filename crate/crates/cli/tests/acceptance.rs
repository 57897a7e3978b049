//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Expected values are recomputed here from first principles (direct sums,
//! bisection, closed forms) rather than taken from the library.

use std::process::Command;
use std::time::Instant;

use wor_core::asymptotics::Mode;
use wor_core::detection::{detect_prob, detect_threshold, optimal_lambda_detection, DetectionSetting};
use wor_core::exact::{ucl_exact, ucl_iid_exact, TestDesign};
use wor_core::oracle::{simulate_protocol, ucl_oracle_lp, Sampler, Truth};
use wor_core::planners::max_failures_exact;
use wor_core::special::{eps_div, s_div, std_normal_cdf, std_normal_quantile, t_div, t_pois};
use wor_core::verify;

const INV_E: f64 = 0.367_879_441_171_442_33;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Independent helpers

fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_quantile(p: f64) -> f64 {
    bisect(-40.0, 40.0, |x| std_normal_cdf(x) < p)
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn kl(a: f64, b: f64) -> f64 {
    xlogy(a, a / b) + xlogy(1.0 - a, (1.0 - a) / (1.0 - b))
}

fn ln_choose(z: u64, j: u64) -> f64 {
    (1..=j).map(|i| ((z - j + i) as f64 / i as f64).ln()).sum()
}

/// Probability that at most `l` of `z` failures survive a channel that keeps
/// each with probability `1 - lambda`.
fn survive_cdf(z: u64, l: u64, lambda: f64) -> f64 {
    let nu = 1.0 - lambda;
    (0..=l.min(z))
        .map(|j| (ln_choose(z, j) + j as f64 * nu.ln() + (z - j) as f64 * lambda.ln()).exp())
        .sum()
}

fn survive_pmf(z: u64, l: u64, lambda: f64) -> f64 {
    if l > z {
        return 0.0;
    }
    (ln_choose(z, l) + l as f64 * (1.0 - lambda).ln() + (z - l) as f64 * lambda.ln()).exp()
}

/// The `1/n` coefficient of the constant-regime limit, from direct sums.
fn g_coeff(l: u64, delta: f64, lambda: f64) -> f64 {
    let mut zu = l;
    while survive_cdf(zu, l, lambda) > delta {
        zu += 1;
    }
    let zl = zu - 1;
    let b_lower = survive_cdf(zl, l, lambda);
    let b_upper = survive_cdf(zu, l, lambda);
    let b_before = if zl == 0 { 1.0 } else { survive_cdf(zl - 1, l, lambda) };
    let step = (1.0 - lambda) * survive_pmf(zl, l, lambda);
    ((b_lower - delta) * zu as f64 * b_lower + (delta - b_upper) * zl as f64 * b_before)
        / (delta * step)
}

fn coeff_c(lambda: f64, s: f64, delta: f64) -> f64 {
    let nu = 1.0 - lambda;
    let q = normal_quantile(delta);
    s.sqrt() * (1.0 - s) * ((nu / lambda).sqrt() * normal_pdf(q) / delta - q * (lambda / nu).sqrt() / (1.0 - s))
}

fn ceil_budget(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

fn limit(n: u64, l: u64, delta: f64, lambda: f64) -> f64 {
    if l >= n {
        return 1.0;
    }
    ucl_exact(&TestDesign::new(n, l, delta, lambda).expect("design")).epsilon_bar
}

fn suite(report: verify::SuiteReport) -> Outcome {
    let mut detail = format!(
        "{}: {} checks, {} violations, max error {:.2e}",
        report.name, report.checks, report.violations, report.max_abs_error
    );
    if let Some(first) = &report.first_violation {
        detail.push_str(&format!(", first: {first}"));
    }
    outcome(report.passed(), detail)
}

fn merge(parts: Vec<Outcome>) -> Outcome {
    outcome(
        parts.iter().all(|p| p.pass),
        parts.iter().map(|p| p.detail.as_str()).collect::<Vec<_>>().join("; "),
    )
}

// ---------------------------------------------------------------------------
// Criteria

fn oracle_equivalence() -> Outcome {
    suite(verify::oracle_equivalence(40, 1e-9))
}

fn closed_form_lambda0() -> Outcome {
    let (mut worst, mut checks) = (0.0f64, 0u64);
    for n in 1..=40u64 {
        for k in 0..n {
            for i in 0..50 {
                let delta = (2 * i + 1) as f64 / 100.0;
                let (nf, kf) = (n as f64, k as f64);
                let closed = if delta < (kf + 1.0) / (nf + 1.0) {
                    1.0
                } else {
                    ((kf + 1.0) * (nf + 1.0 - kf) - delta * (nf + 1.0)) / (delta * (nf - kf) * (nf + 1.0))
                };
                let d = TestDesign::new(n, k, delta, 0.0).unwrap();
                let exact = ucl_exact(&d).epsilon_bar;
                let lp = ucl_oracle_lp(&d).unwrap().epsilon_bar;
                worst = worst.max((exact - closed).abs()).max((exact - lp).abs());
                checks += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checks} designs, max |diff| {worst:.2e} (tol 1e-12)"))
}

fn schedule() -> Outcome {
    let (mut worst, mut checks) = (0.0f64, 0u64);
    for n in 1..=50u64 {
        for lambda in [0.1f64, 0.5, 0.9] {
            for z in 0..=n + 1 {
                let (nf, zf) = (n as f64, z as f64);
                let seen = if z == 0 { 0.0 } else { zf * lambda.powi(z as i32 - 1) };
                let delta = ((nf + 1.0 - zf) * lambda.powi(z as i32) + seen) / (nf + 1.0);
                let expected = zf / (zf + (nf - zf + 1.0) * lambda);
                let got = limit(n, 0, delta, lambda);
                worst = worst.max((got - expected).abs());
                checks += 1;
            }
        }
    }
    outcome(worst <= 1e-10, format!("{checks} points, max |diff| {worst:.2e} (tol 1e-10)"))
}

fn monotonicity() -> Outcome {
    suite(verify::monotonicity(60))
}

fn bound_suites() -> Outcome {
    merge(vec![suite(verify::limit_bounds(60)), suite(verify::tail_suite(200))])
}

fn constant_limit() -> Outcome {
    let n = 100_000u64;
    let mut worst = 0.0f64;
    let mut lib_gap = 0.0f64;
    for k0 in [0u64, 1, 3] {
        for delta in [0.1, 0.3] {
            for lambda in [0.1, INV_E, 0.9] {
                let l = ceil_budget((1.0 - lambda) * k0 as f64);
                let g = g_coeff(l, delta, lambda);
                let scaled = n as f64 * limit(n, l, delta, lambda);
                worst = worst.max((scaled - g).abs() / g);
                let lib = wor_core::asymptotics::coeff_g(l, delta, lambda).unwrap();
                lib_gap = lib_gap.max((lib - g).abs() / g);
            }
        }
    }
    let hand = g_coeff(0, 0.25, 0.5);
    let hand_lib = wor_core::asymptotics::coeff_g(0, 0.25, 0.5).unwrap();
    let pass = worst <= 0.02 && (hand - 4.0).abs() <= 1e-12 && (hand_lib - 4.0).abs() <= 1e-12 && lib_gap <= 1e-10;
    outcome(
        pass,
        format!(
            "max |n*eps - G|/G at n=1e5: {:.3}% (tol 2%); hand case G = {hand_lib} (expect 4); library G vs direct sums {lib_gap:.1e}",
            100.0 * worst
        ),
    )
}

fn linear_coefficient() -> Outcome {
    let (s, delta) = (0.1, 0.1);
    let mut parts = Vec::new();
    let mut pass = true;
    for lambda in [0.01, 0.05, 0.5] {
        let c = coeff_c(lambda, s, delta);
        let scaled_resid = |n: u64| {
            let l = ceil_budget((1.0 - lambda) * s * n as f64);
            (limit(n, l, delta, lambda) - s - c / (n as f64).sqrt()).abs() * n as f64
        };
        let (r1, r4) = (scaled_resid(1000), scaled_resid(4000));
        pass &= r4 <= 2.0 * r1;
        parts.push(format!("lambda={lambda}: {r1:.3} -> {r4:.3}"));
    }
    outcome(pass, format!("|resid|*n at n=1000 -> 4000: {}", parts.join(", ")))
}

/// Solves `t D(gamma / t || x) = 1` for `t >= gamma / x`.
fn t_div_local(gamma: f64, x: f64) -> f64 {
    let f = |t: f64| t * kl(gamma / t, x);
    let lo = gamma / x;
    let mut hi = (2.0 * lo).max(1.0);
    while f(hi) < 1.0 {
        hi *= 2.0;
    }
    bisect(lo, hi, |t| f(t) < 1.0)
}

fn exponential_delta() -> Outcome {
    let n = 2000u64;
    let mut worst_lin = (0.0f64, String::new());
    let mut worst_const = (0.0f64, String::new());
    let mut above_ok = true;
    let s = 0.1;
    let note = |worst: &mut (f64, String), diff: f64, label: String| {
        if diff > worst.0 {
            *worst = (diff, label);
        }
    };
    for lambda in [0.1, 0.5, 0.9] {
        let nu = 1.0 - lambda;
        let l = ceil_budget(nu * s * n as f64);
        let threshold = kl(s * nu, nu);
        let r = 0.5 * threshold;
        let t = t_div_local(nu * s / r, nu);
        let expected = (r * t - nu * s) / (lambda - nu * s + nu * r * t);
        let d = TestDesign::with_ln_delta(n, l, -r * n as f64, lambda).unwrap();
        let diff = (ucl_exact(&d).epsilon_bar - expected).abs();
        note(&mut worst_lin, diff, format!("s={s} lambda={lambda}"));
        let d = TestDesign::with_ln_delta(n, l, -1.2 * threshold * n as f64, lambda).unwrap();
        above_ok &= ucl_exact(&d).epsilon_bar == 1.0;

        for k0 in [0u64, 3] {
            let l = ceil_budget(nu * k0 as f64);
            let threshold = -lambda.ln();
            let r = 0.5 * threshold;
            let expected = r / (r + lambda * (threshold - r));
            let d = TestDesign::with_ln_delta(n, l, -r * n as f64, lambda).unwrap();
            let diff = (ucl_exact(&d).epsilon_bar - expected).abs();
            note(&mut worst_const, diff, format!("k0={k0} lambda={lambda}"));
            let d = TestDesign::with_ln_delta(n, l, -1.2 * threshold * n as f64, lambda).unwrap();
            above_ok &= ucl_exact(&d).epsilon_bar == 1.0;
        }
    }
    outcome(
        worst_lin.0 <= 0.02 && worst_const.0 <= 0.02 && above_ok,
        format!(
            "n=2000, r = threshold/2: linear max |diff| {:.4} at {}, constant max |diff| {:.4} at {} (tol 0.02); r = 1.2 threshold gives 1 exactly: {above_ok}",
            worst_lin.0, worst_lin.1, worst_const.0, worst_const.1
        ),
    )
}

fn mc_significance() -> Outcome {
    let (n, lambda) = (10u64, 0.5f64);
    let mut pass = true;
    let mut parts = Vec::new();
    for z in [1u64, 3, 5] {
        let (nf, zf) = (n as f64, z as f64);
        let delta_z = ((nf + 1.0 - zf) * lambda.powi(z as i32) + zf * lambda.powi(z as i32 - 1)) / (nf + 1.0);
        let eps_z = zf / (zf + (nf - zf + 1.0) * lambda);
        let design = TestDesign::new(n, 0, delta_z, lambda).unwrap();
        let eps_bar = ucl_exact(&design).epsilon_bar;
        pass &= (eps_bar - eps_z).abs() <= 1e-10;
        for sampler in [Sampler::Sufficient, Sampler::Explicit] {
            let out = simulate_protocol(Truth::Vertex(z), &design, 100_000, 42, sampler).unwrap();
            let cond = out.p_fail_given_accept.unwrap_or(0.0);
            let se = out.std_err_cond.unwrap_or(0.0);
            let accept_ok = (out.p_accept - delta_z).abs() <= 3.0 * out.std_err_accept;
            let cond_ok = cond <= eps_bar + 3.0 * se;
            pass &= accept_ok && cond_ok;
            parts.push(format!(
                "z={z} {sampler:?}: accept {:.4} vs {delta_z:.4}, fail|accept {cond:.4} vs {eps_bar:.4}",
                out.p_accept
            ));
        }
    }
    outcome(pass, parts.join("; "))
}

fn mc_detection() -> Outcome {
    let (theta0, e, delta, lambda, n) = (0.1, 1.0, 0.1, 0.3, 10_000u64);
    let eps = theta0 + e / (n as f64).sqrt();
    let budget = match max_failures_exact(n, eps, delta, lambda, Mode::Randomized).unwrap() {
        Some(p) => p.value,
        None => return outcome(false, "no feasible budget"),
    };
    let design = TestDesign::new(n, budget, delta, lambda).unwrap();
    let out = simulate_protocol(Truth::Iid(theta0), &design, 200_000, 42, Sampler::Sufficient).unwrap();
    let nu = 1.0 - lambda;
    let det1 = std_normal_cdf(nu.sqrt() / (theta0 * (1.0 - theta0 * nu)).sqrt() * (e - coeff_c(lambda, theta0, delta)));
    let diff = (out.p_accept - det1).abs();
    let tol = 0.02 + 3.0 * out.std_err_accept;
    outcome(
        diff <= tol,
        format!("budget l={budget}, empirical {:.4}, limit {det1:.4}, |diff| {diff:.4} (tol {tol:.4})", out.p_accept),
    )
}

fn pois_cdf(k: u64, x: f64) -> f64 {
    let mut term = (-x).exp();
    let mut sum = term;
    for j in 1..=k {
        term *= x / j as f64;
        sum += term;
    }
    sum
}

fn inverse_round_trips() -> Outcome {
    let mut worst = [0.0f64; 5];
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    for k in [0u64, 1, 2, 5, 10, 50] {
        for delta in [1e-6, 1e-3, 0.01, 0.1, 0.3, 0.5, 0.9] {
            let t = t_pois(k, delta).unwrap().value;
            worst[0] = worst[0].max(rel(pois_cdf(k, t), delta));
        }
    }
    for gamma in [0.01, 0.1, 0.5, 1.0, 2.0] {
        for x in [0.1, 0.5, 0.9] {
            let t = t_div(gamma, x).unwrap().value;
            worst[1] = worst[1].max(rel(t * kl(gamma / t, x), 1.0));
        }
    }
    for s in [0.0, 0.01, 0.1, 0.5, 0.9] {
        for r in [1e-4, 0.01, 0.1, 1.0] {
            let eps = eps_div(s, r).unwrap().value;
            worst[2] = worst[2].max(rel(kl(s, eps), r));
        }
    }
    for eps in [0.05f64, 0.1, 0.3, 0.5, 0.9] {
        for frac in [0.01, 0.1, 0.5, 0.9, 0.99] {
            let r = frac * -(1.0 - eps).ln();
            let s = s_div(eps, r).unwrap().value;
            worst[3] = worst[3].max(rel(kl(s, eps), r));
        }
    }
    for p in [1e-12, 1e-8, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999] {
        let q = std_normal_quantile(p).unwrap();
        worst[4] = worst[4].max(rel(std_normal_cdf(q), p));
    }
    let names = ["t_P", "t_D", "eps_D", "s_D", "Phi^-1"];
    let detail = names
        .iter()
        .zip(worst)
        .map(|(name, w)| format!("{name} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(worst.iter().all(|&w| w <= 1e-10), format!("max relative residual: {detail} (tol 1e-10)"))
}

fn cubic_optimizer() -> Outcome {
    let delta: f64 = 0.1;
    let q = normal_quantile(delta);
    let psi = normal_pdf(q) / (delta * q);
    let mut pass = true;
    let mut worst_fd = 0.0f64;
    let mut cases = 0;
    for theta in [1e-4, 1e-3, 1e-2, 0.1] {
        for i in 1..=12 {
            let gap = 0.25 * i as f64;
            let kappa = |lambda: f64| {
                let nu = 1.0 - lambda;
                (q * lambda.sqrt() - q * psi * (1.0 - theta) * nu / lambda.sqrt() + gap / theta.sqrt() * nu.sqrt())
                    / (1.0 - theta * nu).sqrt()
            };
            let residual = |lambda: f64| {
                let lin = (1.0 + (1.0 + theta) * psi) * lambda + (1.0 - theta) * psi;
                gap * gap / theta * lambda.powi(3) - (1.0 - lambda) * (q * (1.0 - theta)).powi(2) * lin * lin
            };
            let points = 100_000;
            let roots = (1..points)
                .filter(|&j| {
                    let (a, b) = (j as f64 / points as f64, (j + 1) as f64 / points as f64);
                    b < 1.0 && residual(a).signum() != residual(b).signum()
                })
                .count();
            let opt = optimal_lambda_detection(theta, gap, delta).unwrap();
            let lam = opt.lambda;
            let h = 1e-4 * lam.min(1.0 - lam);
            let fd = (kappa(lam + h) - kappa(lam - h)) / (2.0 * h);
            let rel_fd = fd.abs() / kappa(lam).abs();
            worst_fd = worst_fd.max(rel_fd);
            let dominated = (1..1000).all(|j| kappa(j as f64 / 1000.0) <= kappa(lam));
            pass &= roots == 1 && rel_fd <= 1e-6 && dominated;
            cases += 1;
        }
    }
    outcome(pass, format!("{cases} cases, one root each and grid dominance: {pass}, max |kappa'|/|kappa| {worst_fd:.1e} (tol 1e-6)"))
}

fn run_wor(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_wor"))
        .args(args)
        .env_remove(wor_cli::OUT_DIR_ENV)
        .output()
        .expect("run wor");
    assert!(out.status.success(), "wor {args:?} failed");
    out.stdout
}

fn figure_datasets() -> Outcome {
    let mut identical = true;
    let mut const_csv = Vec::new();
    for figure in ["const-ucl", "linear-ucl", "opt-lambda", "detect-prob"] {
        for format in ["csv", "json"] {
            let args = ["curve", "--figure", figure, "--format", format];
            let first = run_wor(&args);
            identical &= !first.is_empty() && first == run_wor(&args);
            if figure == "const-ucl" && format == "csv" {
                const_csv = first;
            }
        }
    }
    let text = String::from_utf8(const_csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (k0, delta) = (100u64, 0.1);
    let mut worst = 0.0f64;
    let mut points = 0;
    for line in lines {
        let row: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let n = row[0] as u64;
        for (col, name) in header.iter().enumerate() {
            let expected = if *name == "exact_iid" {
                if n <= k0 { 1.0 } else { ucl_iid_exact(k0, n, delta).unwrap().epsilon_bar }
            } else if let Some(lam) = name.strip_prefix("exact_lambda_") {
                let lambda: f64 = lam.parse().unwrap();
                limit(n, ceil_budget((1.0 - lambda) * k0 as f64), delta, lambda)
            } else {
                continue;
            };
            worst = worst.max((row[col] - expected).abs());
            points += 1;
        }
    }
    outcome(
        identical && worst <= 1e-12 && points > 0,
        format!("byte-identical reruns (csv and json): {identical}; const-ucl {points} exact points, max |diff| {worst:.1e} (tol 1e-12)"),
    )
}

fn detection_dominance() -> Outcome {
    let mut checks = 0u64;
    let mut violations = Vec::new();
    let lambdas: Vec<f64> = [0.01].into_iter().chain((1..20).map(|i| 0.05 * i as f64)).chain([0.99]).collect();
    for theta0 in [1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.5, 0.9] {
        for delta in [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49] {
            for i in 0..=60 {
                let gap = 0.05 * i as f64;
                let iid = DetectionSetting::new(theta0, gap, 0.0, delta, 0.0).unwrap();
                let (iid_thr, iid_prob) = (detect_threshold(&iid, Mode::Iid), detect_prob(&iid, Mode::Iid));
                for &lambda in &lambdas {
                    let r = DetectionSetting::new(theta0, gap, 0.0, delta, lambda).unwrap();
                    let (thr, prob) = (detect_threshold(&r, Mode::Randomized), detect_prob(&r, Mode::Randomized));
                    checks += 1;
                    if !(thr < iid_thr && prob <= iid_prob) {
                        violations.push(format!("theta0={theta0} delta={delta} gap={gap} lambda={lambda}"));
                    }
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{checks} grid points, {} violations (strict on the standardized threshold, probabilities never exceed iid){}",
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("oracle equivalence", oracle_equivalence),
        ("closed form at lambda = 0", closed_form_lambda0),
        ("vertex schedule", schedule),
        ("monotonicity", monotonicity),
        ("bound suites", bound_suites),
        ("constant-regime limit", constant_limit),
        ("linear-regime coefficient", linear_coefficient),
        ("exponential significance", exponential_delta),
        ("Monte Carlo significance", mc_significance),
        ("Monte Carlo detection", mc_detection),
        ("inverse round trips", inverse_round_trips),
        ("cubic optimizer", cubic_optimizer),
        ("figure datasets", figure_datasets),
        ("detection dominance", detection_dominance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!result.pass);
        println!(
            "criterion {:>2} {verdict} {name} [{:.1}s]: {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
