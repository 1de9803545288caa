//! Reference values computed independently: exact big-integer binomials and
//! 50-digit multiprecision evaluations frozen below.

use num_bigint::BigUint;
use num_traits::One;
use pqkd_core::bounds::{condition2_check, condition2_log_rhs, pn_bounds};
use pqkd_core::estimator::{confidence_bound_active, confidence_bound_passive, UntaggedWindow};
use pqkd_core::photonstats::{binomial_thinning_pmf, ln_binomial_thinning_pmf, log_binomial_coefficient};

fn exact_binomial(n: u64, r: u64) -> BigUint {
    let r = r.min(n - r);
    let mut acc = BigUint::one();
    for i in 0..r {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 60 {
        return (x.iter_u64_digits().next().unwrap_or(0) as f64).ln();
    }
    let shift = bits - 60;
    let top: BigUint = x >> shift;
    (top.iter_u64_digits().next().unwrap() as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

#[test]
fn log_binomial_matches_exact_integers() {
    for &(n, r) in
        &[(10u64, 3u64), (60, 30), (200, 100), (1000, 31), (1000, 500), (5000, 29), (5000, 2500), (20_000, 7000)]
    {
        let want = ln_big(&exact_binomial(n, r));
        let got = log_binomial_coefficient(n, r).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "C({n},{r}): {got} vs {want}");
    }
}

#[test]
fn log_binomial_matches_multiprecision_at_large_n() {
    let cases: [(u64, u64, f64); 6] = [
        (10_000_000_000, 5_000_000_000, 6931471793.8607362765),
        (10_000_000_000, 3, 67.28579332029331552),
        (10_000_000_000, 100_000, 1251285.3710982571689),
        (1_000_000_000, 123_456_789, 373756275.6364929056),
        (200, 100, 135.75323608127849321),
        (1_000_000, 31, 350.18813873884961452),
    ];
    for (n, r, want) in cases {
        let got = log_binomial_coefficient(n, r).unwrap();
        assert!((got - want).abs() / want < 1e-12, "C({n},{r}): {got} vs {want}");
    }
}

#[test]
fn thinning_pmf_matches_multiprecision() {
    let cases: [(u64, f64, u64, f64); 3] = [
        (10_000_000_000, 1e-10, 1, -0.99999999995),
        (100_000_000, 0.3, 30_000_000, -9.348955034183441927),
        (1_000_000, 1e-7, 2, -5.3983181715485270111),
    ];
    for (m, t, n, want) in cases {
        let got = ln_binomial_thinning_pmf(m, t, n).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "({m},{t},{n}): {got} vs {want}");
    }
    assert!((binomial_thinning_pmf(10_000_000_000, 1e-10, 1).unwrap() - 0.3678794411897).abs() < 1e-12);
}

#[test]
fn condition2_rhs_matches_multiprecision() {
    let cases: [(f64, f64, f64); 6] = [
        (20.0, 0.1, 0.65165456661630735),
        (1e3, 0.01, 0.098899027948437191),
        (1e6, 0.001, 0.014440882176218751),
        (5e5, 0.0083, 0.085334002029327908),
        (1e8, 1e-4, 0.0019035895145353954),
        (6.2e6, 0.1, 0.57950268059906228),
    ];
    for (m, d, want) in cases {
        let w = UntaggedWindow::new(m, d, 0.0).unwrap();
        let got = condition2_log_rhs(&w).unwrap();
        assert!((got - want).abs() / want < 1e-10, "M={m} δ={d}: {got} vs {want}");
    }
}

#[test]
fn condition2_threshold_brackets_frozen_value() {
    let w = UntaggedWindow::new(1e6, 0.001, 0.0).unwrap();
    let ratio = 0.014440882176218751f64.exp();
    assert!(condition2_check(0.1 * ratio * 1.000001, 0.1, &w).unwrap());
    assert!(!condition2_check(0.1 * ratio * 0.999999, 0.1, &w).unwrap());
}

#[test]
fn confidence_bounds_direct_evaluation() {
    assert!((confidence_bound_active(1e4, 0.03, 0.5).unwrap() - 0.011108996538242).abs() < 1e-12);
    assert!((confidence_bound_passive(1e4, 0.03).unwrap() - 2.0 * (-2.25f64).exp()).abs() < 1e-12);
}

#[test]
fn pn_bounds_by_enumeration() {
    let w = UntaggedWindow::new(20.0, 0.1, 0.0).unwrap();
    for n in 0..=23 {
        let b = pn_bounds(&w, 0.03, n).unwrap();
        let vals: Vec<f64> = (18..=22).map(|m| binomial_thinning_pmf(m, 0.03, n).unwrap()).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        assert!(b.lower <= lo * (1.0 + 1e-12) && hi <= b.upper * (1.0 + 1e-12), "n={n}");
    }
}
