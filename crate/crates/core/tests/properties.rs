//! Cross-module properties through the public API.

use proptest::prelude::*;

use wor_core::asymptotics::Mode;
use wor_core::exact::{ucl_exact, ucl_sandwich, TestDesign};
use wor_core::figures::{format_sig, round_sig};
use wor_core::oracle::{
    lower_envelope_eval, simulate_protocol, simulate_protocol_parallel, ucl_oracle_lp, Sampler,
    Truth,
};
use wor_core::planners::max_failures_exact;

fn design() -> impl Strategy<Value = (u64, u64, f64, f64)> {
    (1u64..30)
        .prop_flat_map(|n| (Just(n), 0..n, 0.005f64..0.995, 0.01f64..0.99))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_matches_oracle((n, l, delta, lambda) in design()) {
        let d = TestDesign::new(n, l, delta, lambda).unwrap();
        let exact = ucl_exact(&d).epsilon_bar;
        let oracle = ucl_oracle_lp(&d).unwrap().epsilon_bar;
        prop_assert!((exact - oracle).abs() <= 1e-9, "{exact} vs {oracle}");
        prop_assert!((0.0..=1.0).contains(&exact));
    }

    #[test]
    fn envelope_at_delta_is_the_limit((n, l, delta, lambda) in design()) {
        let d = TestDesign::new(n, l, delta, lambda).unwrap();
        let bound = ucl_exact(&d);
        prop_assume!(bound.epsilon_bar < 1.0);
        let zeta = lower_envelope_eval(&d, delta).unwrap();
        prop_assert!((zeta - delta * (1.0 - bound.epsilon_bar)).abs() <= 1e-10);
    }

    #[test]
    fn envelope_is_convex((n, l, delta, lambda) in design(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let d = TestDesign::new(n, l, delta, lambda).unwrap();
        let mid = lower_envelope_eval(&d, 0.5 * (a + b)).unwrap();
        let avg = 0.5 * (lower_envelope_eval(&d, a).unwrap() + lower_envelope_eval(&d, b).unwrap());
        prop_assert!(mid <= avg + 1e-12);
    }

    #[test]
    fn sandwich_brackets_complement((n, l, delta, lambda) in design()) {
        let d = TestDesign::new(n, l, delta, lambda).unwrap();
        let comp = 1.0 - ucl_exact(&d).epsilon_bar;
        let s = ucl_sandwich(&d).unwrap();
        prop_assert!(s.comp_lower <= comp + 1e-12 && comp <= s.comp_upper + 1e-12);
    }

    #[test]
    fn max_failures_certificate(n in 50u64..2000, eps in 0.02f64..0.5, delta in 0.01f64..0.5, lambda in 0.05f64..0.95) {
        if let Some(plan) = max_failures_exact(n, eps, delta, lambda, Mode::Randomized).unwrap() {
            let (at, next) = plan.certificate.unwrap();
            prop_assert!(at <= eps && next > eps);
        }
    }

    #[test]
    fn twelve_significant_digits(x in -1e6f64..1e6) {
        let r = round_sig(x);
        prop_assert!((r - x).abs() <= 5e-12 * x.abs().max(f64::MIN_POSITIVE));
        prop_assert_eq!(format_sig(r), format_sig(x));
    }
}

#[test]
fn simulator_reproducible_and_partitioned() {
    let d = TestDesign::new(30, 2, 0.1, 0.4).unwrap();
    let truth = Truth::Iid(0.15);
    let a = simulate_protocol(truth, &d, 20_000, 9, Sampler::Sufficient).unwrap();
    let b = simulate_protocol(truth, &d, 20_000, 9, Sampler::Sufficient).unwrap();
    assert_eq!(a, b);
    let p = simulate_protocol_parallel(truth, &d, 20_000, 9, 4).unwrap();
    assert_eq!(p, simulate_protocol_parallel(truth, &d, 20_000, 9, 4).unwrap());
    assert_eq!(p.trials, 20_000);
    // Different streams, same law.
    assert!((p.p_accept - a.p_accept).abs() <= 4.0 * (a.std_err_accept + p.std_err_accept));
}
