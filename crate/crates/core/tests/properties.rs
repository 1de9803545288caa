use proptest::prelude::*;

use pqkd_core::bounds::pn_bounds;
use pqkd_core::estimator::UntaggedWindow;
use pqkd_core::experiment::{ChannelDetector, Placement, SourceConfig};
use pqkd_core::keyrate::{ErrorCorrection, Normalization, Protocol, StatePortions};
use pqkd_core::model::{Analysis, Interval, MonitorConfig, RateParams, SystemModel};
use pqkd_core::optimizer::{default_grid, grid_search, optimize_keyrate, Axis, Scale, SearchGrid};
use pqkd_core::photonstats::{log_binomial_coefficient, total_variation, PhotonNumberDistribution};

fn uni_model(protocol: Protocol, m: f64) -> SystemModel {
    SystemModel {
        source: SourceConfig { mean_photons: m, placement: Placement::AtAlice, pulses: None },
        q: Interval::exact(0.5),
        lambda_relative_uncertainty: 0.0,
        monitor: MonitorConfig::perfect(),
        channel: ChannelDetector::gys(0.0),
        protocol,
        error_correction: ErrorCorrection::CascadeTable,
        normalization: Normalization::PerSourcePulse,
        finite: None,
        portions: None,
    }
}

fn signal_only() -> StatePortions {
    StatePortions { signal: 1.0, decoy: 0.0, vacuum: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thinning_composes(mean in 1.0f64..40.0, t1 in 0.05f64..0.95, t2 in 0.05f64..0.95, low in 0u64..30, gap in 1u64..30, w in 0.0f64..1.0) {
        for d in [
            PhotonNumberDistribution::Poisson { mean },
            PhotonNumberDistribution::DualDelta { low, high: low + gap, weight_low: w },
        ] {
            let two_step = d.thin(t1).unwrap().thin(t2).unwrap();
            let one_step = d.thin(t1 * t2).unwrap();
            prop_assert!(total_variation(&two_step, &one_step) < 1e-9);
        }
    }

    #[test]
    fn binomial_symmetric_and_unimodal(n in 2u64..1_000_000_000, frac in 0.0f64..0.5) {
        let r = ((n as f64) * frac) as u64;
        let a = log_binomial_coefficient(n, r).unwrap();
        let b = log_binomial_coefficient(n, n - r).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if r < n / 2 {
            prop_assert!(log_binomial_coefficient(n, r + 1).unwrap() >= a);
        }
    }

    #[test]
    fn pn_bounds_bracket_unit_mass(m in 20.0f64..200.0, delta in 0.0f64..0.3, frac in 0.01f64..0.99) {
        let w = UntaggedWindow::new(m, delta, 0.0).unwrap();
        let lambda = frac / (w.hi_edge() + 1.0);
        let mut lower = 0.0;
        let mut upper = 0.0;
        for n in 0..=w.hi_edge() as u64 {
            let b = pn_bounds(&w, lambda, n).unwrap();
            prop_assert!(b.lower <= b.upper);
            lower += b.lower;
            upper += b.upper;
        }
        prop_assert!(lower <= 1.0 + 1e-12);
        prop_assert!(upper >= 1.0 - 1e-12);
    }

    #[test]
    fn untrusted_never_beats_trusted(mu in 0.001f64..0.8, r in 0.001f64..0.9, delta in 1e-4f64..0.1, l in 0.0f64..120.0) {
        for protocol in [Protocol::Gllp, Protocol::WeakVacuum] {
            let model = uni_model(protocol, 1e6);
            let mu_decoy = if protocol.uses_decoys() { mu * r } else { 0.0 };
            let p = RateParams { mu_signal: mu, mu_decoy, delta, portions: signal_only() };
            let trusted = model.evaluate(Analysis::Trusted, l, &p).unwrap().result.rate;
            for a in [Analysis::Passive, Analysis::Active] {
                let untrusted = model.evaluate(a, l, &p).unwrap().result.rate;
                prop_assert!(untrusted <= trusted * (1.0 + 1e-12), "{:?} {:?}: {} > {}", protocol, a, untrusted, trusted);
            }
        }
    }

    #[test]
    fn refinement_never_lowers_optimum(cx in 0.0f64..1.0, cy in 0.0f64..1.0, rounds in 0usize..3) {
        let f = |p: &[f64]| 1.0 - (p[0] - cx).powi(2) - 2.0 * (p[1] - cy).powi(2);
        let grid = |n| SearchGrid { axes: vec![Axis::new(0.0, 1.0, 9, Scale::Linear), Axis::new(0.0, 1.0, 9, Scale::Linear)], refinement_rounds: n };
        let coarse = grid_search(&grid(rounds), f).unwrap();
        let fine = grid_search(&grid(rounds + 1), f).unwrap();
        prop_assert!(fine.value >= coarse.value);
    }
}

#[test]
fn untrusted_rate_approaches_trusted_for_bright_sources() {
    let distance = 20.0;
    let mut last = 0.0;
    for m in [1e6, 1e8, 1e10, 1e12] {
        let model = uni_model(Protocol::Gllp, m);
        let trusted =
            optimize_keyrate(&model, Analysis::Trusted, distance, &default_grid(&model, Analysis::Trusted)).unwrap();
        let passive =
            optimize_keyrate(&model, Analysis::Passive, distance, &default_grid(&model, Analysis::Passive)).unwrap();
        let ratio = passive.rate / trusted.rate;
        assert!(ratio >= last - 1e-6, "ratio fell to {ratio} at M = {m}");
        assert!(ratio <= 1.0 + 1e-12);
        last = ratio;
    }
    assert!(last > 0.999, "ratio at M = 1e12 is {last}");
}
