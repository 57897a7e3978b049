//! Grid suites checking the exact limits against the oracle, the closed
//! forms, the monotonicity properties and the analytic bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::binomial::{binom_cdf, delta_zl, tail_bounds};
use crate::exact::{delta_z_schedule, ucl_exact, ucl_iid_exact, ucl_sandwich, TestDesign};
use crate::oracle::ucl_oracle_lp;

/// Slack allowed on monotonicity comparisons.
pub const MONOTONE_TOL: f64 = 1e-12;

/// Relative slack allowed on analytic inequalities.
pub const BOUND_REL_TOL: f64 = 1e-12;

const INV_E: f64 = 0.367_879_441_171_442_33;

pub const ORACLE_LAMBDAS: [f64; 5] = [0.1, 0.3, INV_E, 0.7, 0.9];
pub const MONOTONE_LAMBDAS: [f64; 5] = [0.0, 0.1, INV_E, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: u64,
    pub violations: u64,
    pub max_abs_error: f64,
    pub first_violation: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    checks: u64,
    violations: u64,
    max_abs_error: f64,
    first: Option<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.first.is_none() {
                self.first = Some(what());
            }
        }
    }

    fn error(&mut self, err: f64, tol: f64, what: impl FnOnce() -> String) {
        if err > self.max_abs_error || err.is_nan() {
            self.max_abs_error = if err.is_nan() { f64::INFINITY } else { err };
        }
        self.check(err <= tol, what);
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.checks += other.checks;
        self.violations += other.violations;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        if self.first.is_none() {
            self.first = other.first;
        }
        self
    }

    fn report(self, name: &str) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            checks: self.checks,
            violations: self.violations,
            max_abs_error: self.max_abs_error,
            first_violation: self.first,
        }
    }
}

fn sweep<F>(max_n: u64, f: F) -> Tally
where
    F: Fn(u64, &mut Tally) + Sync,
{
    (1..=max_n)
        .into_par_iter()
        .map(|n| {
            let mut t = Tally::default();
            f(n, &mut t);
            t
        })
        .reduce(Tally::default, Tally::merge)
}

/// `0.01, 0.03, ..., 0.99`.
pub fn oracle_deltas() -> Vec<f64> {
    (0..50).map(|i| (2 * i + 1) as f64 / 100.0).collect()
}

/// `0.01, 0.02, ..., 0.99`.
pub fn monotone_deltas() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

fn bound(n: u64, l: u64, delta: f64, lambda: f64) -> f64 {
    ucl_exact(&TestDesign::new(n, l, delta, lambda).expect("grid design")).epsilon_bar
}

/// The unrandomized limit written out directly.
fn closed_form_lambda0(n: u64, l: u64, delta: f64) -> f64 {
    let (n, l) = (n as f64, l as f64);
    if delta < (l + 1.0) / (n + 1.0) {
        1.0
    } else {
        ((l + 1.0) * (n + 1.0 - l) - delta * (n + 1.0)) / (delta * (n - l) * (n + 1.0))
    }
}

/// Exact limits agree with the linear-programming oracle.
pub fn oracle_equivalence(max_n: u64, tol: f64) -> SuiteReport {
    let deltas = oracle_deltas();
    sweep(max_n, |n, t| {
        for l in 0..n {
            for &lambda in &ORACLE_LAMBDAS {
                for &delta in &deltas {
                    let d = TestDesign::new(n, l, delta, lambda).expect("grid design");
                    let exact = ucl_exact(&d).epsilon_bar;
                    let lp = ucl_oracle_lp(&d).map(|b| b.epsilon_bar).unwrap_or(f64::NAN);
                    t.error((exact - lp).abs(), tol, || {
                        format!("n={n} l={l} lambda={lambda} delta={delta}: exact {exact} oracle {lp}")
                    });
                }
            }
        }
    })
    .report("oracle-equivalence")
}

/// The unrandomized limit agrees with its closed form and with the oracle.
pub fn closed_form(max_n: u64, tol: f64) -> SuiteReport {
    let deltas = oracle_deltas();
    sweep(max_n, |n, t| {
        for l in 0..n {
            for &delta in &deltas {
                let d = TestDesign::new(n, l, delta, 0.0).expect("grid design");
                let exact = ucl_exact(&d).epsilon_bar;
                let closed = closed_form_lambda0(n, l, delta).clamp(0.0, 1.0);
                let lp = ucl_oracle_lp(&d).map(|b| b.epsilon_bar).unwrap_or(f64::NAN);
                let err = (exact - closed).abs().max((exact - lp).abs());
                t.error(err, tol, || {
                    format!("n={n} l={l} delta={delta}: exact {exact} closed {closed} oracle {lp}")
                });
            }
        }
    })
    .report("closed-form-lambda0")
}

/// At `delta = delta_z` with `l = 0` the limit is `z / (z + (n - z + 1) lambda)`.
pub fn schedule(max_n: u64, tol: f64) -> SuiteReport {
    sweep(max_n, |n, t| {
        for lambda in [0.1, 0.5, 0.9] {
            for z in 0..=n + 1 {
                let (delta, expected) = delta_z_schedule(n, lambda, z).expect("schedule");
                if delta <= 0.0 {
                    t.check(false, || format!("n={n} z={z} lambda={lambda}: delta_z underflows"));
                    continue;
                }
                let got = bound(n, 0, delta, lambda);
                t.error((got - expected).abs(), tol, || {
                    format!("n={n} z={z} lambda={lambda}: exact {got} expected {expected}")
                });
            }
        }
    })
    .report("delta-z-schedule")
}

/// Monotonicity in `delta`, `n` and `l` of the randomized and iid limits.
pub fn monotonicity(max_n: u64) -> SuiteReport {
    let deltas = monotone_deltas();
    let randomized = MONOTONE_LAMBDAS
        .par_iter()
        .map(|&lambda| {
            let mut t = Tally::default();
            let table = |n: u64, l: u64, delta: f64| bound(n, l, delta, lambda);
            mono_checks(&mut t, max_n, &deltas, &format!("lambda={lambda}"), table);
            t
        })
        .reduce(Tally::default, Tally::merge);
    let mut iid = Tally::default();
    mono_checks(&mut iid, max_n, &deltas, "iid", |n, k, delta| {
        ucl_iid_exact(k, n, delta).expect("grid design").epsilon_bar
    });
    randomized.merge(iid).report("monotonicity")
}

fn mono_checks<F>(t: &mut Tally, max_n: u64, deltas: &[f64], tag: &str, f: F)
where
    F: Fn(u64, u64, f64) -> f64 + Sync,
{
    let rows: Vec<Vec<Vec<f64>>> = (1..=max_n)
        .into_par_iter()
        .map(|n| (0..n).map(|l| deltas.iter().map(|&d| f(n, l, d)).collect()).collect())
        .collect();
    let at = |n: u64, l: u64, i: usize| rows[(n - 1) as usize][l as usize][i];
    for n in 1..=max_n {
        for l in 0..n {
            for i in 0..deltas.len() {
                let v = at(n, l, i);
                if i + 1 < deltas.len() {
                    let w = at(n, l, i + 1);
                    t.check(w <= v + MONOTONE_TOL, || {
                        format!("{tag} n={n} l={l}: increases in delta at {} ({v} -> {w})", deltas[i])
                    });
                }
                if n < max_n {
                    let w = at(n + 1, l, i);
                    t.check(w <= v + MONOTONE_TOL, || {
                        format!("{tag} n={n} l={l} delta={}: increases in n ({v} -> {w})", deltas[i])
                    });
                }
                if l + 1 < n {
                    let w = at(n, l + 1, i);
                    t.check(w + MONOTONE_TOL >= v, || {
                        format!("{tag} n={n} l={l} delta={}: decreases in l ({v} -> {w})", deltas[i])
                    });
                }
            }
        }
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b + BOUND_REL_TOL * b.abs().max(f64::MIN_POSITIVE)
}

/// Lower bounds on the limits and the sandwich on the complement.
pub fn limit_bounds(max_n: u64) -> SuiteReport {
    let deltas = monotone_deltas();
    sweep(max_n, |n, t| {
        let nf = n as f64;
        for l in 0..n {
            let lf = l as f64;
            for &delta in &deltas {
                // The lower bounds below assume delta <= 1/2.
                let half = delta <= 0.5;
                let iid = ucl_iid_exact(l, n, delta).expect("grid design").epsilon_bar;
                if half {
                    t.check(iid > lf / nf, || format!("iid n={n} k={l} delta={delta}: {iid} <= k/n"));
                    let det = bound(n, l, delta, 0.0);
                    t.check(det > lf / nf, || format!("lambda=0 n={n} l={l} delta={delta}: {det} <= l/n"));
                    if lf / nf < delta {
                        t.check(det > lf / (nf * delta), || {
                            format!("lambda=0 n={n} k={l} delta={delta}: {det} <= k/(n delta)")
                        });
                    }
                }
                for &lambda in &MONOTONE_LAMBDAS[1..] {
                    let nu = 1.0 - lambda;
                    let d = TestDesign::new(n, l, delta, lambda).expect("grid design");
                    let exact = ucl_exact(&d);
                    if half && lf >= nu * nf {
                        t.check(exact.epsilon_bar == 1.0, || {
                            format!("n={n} l={l} lambda={lambda} delta={delta}: {} != 1 with l >= nu n", exact.epsilon_bar)
                        });
                    } else if half {
                        t.check(exact.epsilon_bar > lf / (nu * nf), || {
                            format!("n={n} l={l} lambda={lambda} delta={delta}: {} <= l/(nu n)", exact.epsilon_bar)
                        });
                    }
                    let sw = ucl_sandwich(&d).expect("sandwich");
                    let comp = exact.complement;
                    t.check(le(sw.comp_lower, comp) && le(comp, sw.comp_upper), || {
                        format!(
                            "n={n} l={l} lambda={lambda} delta={delta}: complement {comp} outside [{}, {}]",
                            sw.comp_lower, sw.comp_upper
                        )
                    });
                    if let Some(simple) = sw.comp_lower_simple {
                        t.check(le(simple, comp), || {
                            format!("n={n} l={l} lambda={lambda} delta={delta}: simple bound {simple} > {comp}")
                        });
                    }
                }
            }
        }
    })
    .report("limit-bounds")
}

/// Chernoff, reverse Chernoff, Berry-Esseen, tail-ratio and difference-ratio
/// checks on `B_{z,l}(1 - lambda)`.
pub fn tail_suite(max_z: u64) -> SuiteReport {
    let lambdas = [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95];
    sweep(max_z, |z, t| {
        for &lambda in &lambdas {
            let nu = 1.0 - lambda;
            let mut prev_ratio: Vec<f64> = Vec::new();
            for l in 0..=z {
                let b = binom_cdf(z, l, nu).expect("cdf");
                let tb = tail_bounds(z, l, lambda).expect("bounds");
                if let Some(up) = tb.chernoff_upper {
                    t.check(le(b, up), || format!("z={z} l={l} lambda={lambda}: B {b} > Chernoff {up}"));
                }
                if let Some(lo) = tb.chernoff_lower {
                    t.check(le(lo, b), || format!("z={z} l={l} lambda={lambda}: reverse Chernoff {lo} > B {b}"));
                }
                if let (Some(approx), Some(sharp), Some(loose)) =
                    (tb.normal_approx, tb.be_error_sharp, tb.be_error)
                {
                    let err = (b - approx).abs();
                    t.check(err <= sharp + 1e-15 && sharp <= loose, || {
                        format!("z={z} l={l} lambda={lambda}: |B - normal| {err} > {sharp}")
                    });
                }
                let b_next = binom_cdf(z + 1, l, nu).expect("cdf");
                let ratio = b / b_next;
                let (zf, lf) = (z as f64, l as f64);
                t.check(le((zf - lf + 1.0) / ((zf + 1.0) * lambda), ratio) && le(ratio, 1.0 / lambda), || {
                    format!("z={z} l={l} lambda={lambda}: ratio {ratio} outside its bounds")
                });
                if lf <= nu * zf {
                    let cap = (zf - lf + 1.0 + (lambda * lf).sqrt()) / ((zf + 1.0) * lambda);
                    t.check(le(ratio, cap), || format!("z={z} l={l} lambda={lambda}: ratio {ratio} > {cap}"));
                }
                prev_ratio.push(ratio);
                if z > l {
                    let d_ratio = delta_zl(z, l, lambda).expect("delta") / delta_zl(z - 1, l, lambda).expect("delta");
                    let expected = zf * lambda / (zf - lf);
                    t.check((d_ratio / expected - 1.0).abs() <= 1e-10, || {
                        format!("z={z} l={l} lambda={lambda}: difference ratio {d_ratio} vs {expected}")
                    });
                }
            }
            // Ratio nondecreasing in z: compare with z - 1 at the same l.
            if z >= 2 {
                for l in 0..z {
                    let here = prev_ratio[l as usize];
                    let before = binom_cdf(z - 1, l, nu).unwrap() / binom_cdf(z, l, nu).unwrap();
                    t.check(le(before, here), || {
                        format!("z={z} l={l} lambda={lambda}: ratio decreases in z ({before} -> {here})")
                    });
                }
            }
        }
    })
    .report("tail-bounds")
}

/// Size parameters for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyGrid {
    pub oracle_max_n: u64,
    pub schedule_max_n: u64,
    pub monotone_max_n: u64,
    pub tail_max_z: u64,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self {
            oracle_max_n: 40,
            schedule_max_n: 50,
            monotone_max_n: 60,
            tail_max_z: 200,
        }
    }
}

pub fn run_all(grid: &VerifyGrid) -> Vec<SuiteReport> {
    vec![
        oracle_equivalence(grid.oracle_max_n, 1e-9),
        closed_form(grid.oracle_max_n, 1e-12),
        schedule(grid.schedule_max_n, 1e-10),
        monotonicity(grid.monotone_max_n),
        limit_bounds(grid.monotone_max_n),
        tail_suite(grid.tail_max_z),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grids_pass() {
        let grid = VerifyGrid {
            oracle_max_n: 8,
            schedule_max_n: 8,
            monotone_max_n: 10,
            tail_max_z: 30,
        };
        for report in run_all(&grid) {
            assert!(report.passed(), "{report:?}");
            assert!(report.checks > 0);
        }
    }

    #[test]
    fn tally_records_first_violation() {
        let mut t = Tally::default();
        t.error(0.5, 0.1, || "first".into());
        t.error(0.7, 0.1, || "second".into());
        t.check(true, || unreachable!());
        let r = t.report("x");
        assert_eq!((r.checks, r.violations), (3, 2));
        assert_eq!(r.first_violation.as_deref(), Some("first"));
        assert_eq!(r.max_abs_error, 0.7);
    }

    #[test]
    fn grids() {
        let d = oracle_deltas();
        assert_eq!((d.len(), d[0], d[49]), (50, 0.01, 0.99));
        let d = monotone_deltas();
        assert_eq!((d.len(), d[0], d[98]), (99, 0.01, 0.99));
    }
}
