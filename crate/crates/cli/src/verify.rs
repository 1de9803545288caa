//! Seeded self-verification: sampling inequalities by simulation, exhaustive
//! photon-number containment, phase randomization, thinning composition, and
//! convergence to the trusted-source rate.

use rayon::prelude::*;

use pqkd_core::bounds::pn_bounds;
use pqkd_core::estimator::{AliceApparatus, Scheme, UntaggedWindow};
use pqkd_core::experiment::{ChannelDetector, Placement, SourceConfig};
use pqkd_core::keyrate::{ErrorCorrection, Normalization, Protocol};
use pqkd_core::model::{Analysis, Interval, MonitorConfig, SystemModel};
use pqkd_core::montecarlo::{
    bruteforce_pn_check, run_trials, verify_phase_randomization, verify_sampling_bounds, FaultInjection, TrialConfig,
};
use pqkd_core::optimizer::{default_grid, optimize_keyrate};
use pqkd_core::photonstats::{total_variation, Histogram, PhotonNumberDistribution};
use pqkd_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = format!("# verify level={:?} seed={}\n", self.level, self.seed).to_lowercase();
        for c in &self.checks {
            out.push_str(&format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        let failed = self.failures().count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

const TRACE_TOLERANCE: f64 = 1e-12;
const CONTAINMENT_TOLERANCE: f64 = 1e-12;
const THINNING_TOLERANCE: f64 = 1e-9;

struct SamplingSource {
    label: &'static str,
    source: PhotonNumberDistribution,
    apparatus: AliceApparatus,
    window: UntaggedWindow,
}

fn sampling_sources() -> Vec<SamplingSource> {
    let apparatus = |eta_im: f64, sigma_im: f64, varsigma: f64| AliceApparatus {
        q: 0.5,
        lambda_signal: 2e-6,
        lambda_decoy: 1e-6,
        eta_im,
        sigma_im,
        varsigma,
    };
    vec![
        SamplingSource {
            label: "poisson 1e4",
            source: PhotonNumberDistribution::Poisson { mean: 1e4 },
            apparatus: apparatus(1.0, 0.0, 0.0),
            window: UntaggedWindow { center: 5e3, delta: 0.00954, varsigma: 0.0 },
        },
        SamplingSource {
            label: "dual-delta 9000/11000",
            source: PhotonNumberDistribution::DualDelta { low: 9000, high: 11000, weight_low: 0.5 },
            apparatus: apparatus(1.0, 0.0, 0.0),
            window: UntaggedWindow { center: 4500.0, delta: 0.02, varsigma: 0.0 },
        },
        SamplingSource {
            label: "gaussian 1e4 noisy monitor",
            source: PhotonNumberDistribution::Gaussian { mean: 1e4, variance: 4e4 },
            apparatus: apparatus(0.8, 20.0, 120.0),
            window: UntaggedWindow { center: 4000.0, delta: 0.046, varsigma: 120.0 },
        },
    ]
}

fn trials_for(level: Level) -> u64 {
    match level {
        Level::Quick => 2_000,
        Level::Full => 50_000,
    }
}

fn mix(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn sampling_checks(level: Level, seed: u64, faults: &FaultInjection) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut index = 0;
    for src in sampling_sources() {
        for k in [1_000u64, 10_000] {
            let cfg = TrialConfig {
                k,
                trials: trials_for(level),
                seed: mix(seed, index),
                source: src.source.clone(),
                apparatus: src.apparatus,
                window: src.window,
            };
            index += 1;
            let counts = run_trials(&cfg)?;
            for scheme in [Scheme::Active, Scheme::Passive] {
                for eps in [0.01, 0.03, 0.1] {
                    let c = verify_sampling_bounds(&counts, scheme, eps, faults)?;
                    out.push(CheckOutcome {
                        name: format!("{} [{}, k={k}, eps={eps}]", scheme.sampling_claim(), src.label),
                        pass: c.pass,
                        detail: format!(
                            "{} of {} trials violate; rate {:.3e} vs bound {:.3e}",
                            c.violations, c.trials, c.empirical_rate, c.analytic_bound
                        ),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn containment_checks(level: Level) -> Result<Vec<CheckOutcome>> {
    let centers: Vec<f64> = match level {
        Level::Quick => vec![1.0, 20.0, 50.0, 100.0, 150.0, 200.0],
        Level::Full => (1..=200).map(f64::from).collect(),
    };
    let mut out = Vec::new();
    for delta in [0.0, 0.05, 0.1, 0.2] {
        let cases: Vec<(f64, f64)> =
            centers.iter().flat_map(|m| [0.01, 0.3, 0.9, 1.0 - 1e-6].map(|f| (*m, f))).collect();
        let margins = cases
            .par_iter()
            .map(|(m, frac)| {
                let w = UntaggedWindow::new(*m, delta, 0.0)?;
                bruteforce_pn_check(&w, frac / w.hi_edge().max(1.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        let worst = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(CheckOutcome {
            name: format!("photon-number bounds contain every in-window thinning [delta={delta}]"),
            pass: worst <= CONTAINMENT_TOLERANCE,
            detail: format!("{} windows, worst escape {worst:.3e}", cases.len()),
        });
    }
    // Ordering must survive right at the transmittance limit.
    let w = UntaggedWindow::new(200.0, 0.2, 0.0)?;
    let lambda = (1.0 - 1e-6) / w.hi_edge();
    let ordered = (0..=w.hi_edge() as u64)
        .map(|n| pn_bounds(&w, lambda, n))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .all(|b| b.lower <= b.upper);
    out.push(CheckOutcome {
        name: "photon-number bounds ordered at the transmittance limit".into(),
        pass: ordered,
        detail: format!("centre 200, delta 0.2, lambda {lambda:.6e}"),
    });
    Ok(out)
}

fn phase_checks(level: Level, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let main = (0..100u64)
        .into_par_iter()
        .map(|i| verify_phase_randomization(4, mix(seed, 1_000 + i)))
        .collect::<Result<Vec<_>>>()?;
    let worst = main.iter().map(|c| c.trace_distance.max(c.rotation_distance)).fold(0.0, f64::max);
    out.push(CheckOutcome {
        name: "phase randomization equals photon-number measurement [cutoff 4]".into(),
        pass: main.iter().all(|c| c.pass(TRACE_TOLERANCE)),
        detail: format!("100 random states, worst trace distance {worst:.3e}"),
    });
    let per_cutoff = match level {
        Level::Quick => 2,
        Level::Full => 10,
    };
    for cutoff in 1..=8usize {
        let checks = (0..per_cutoff)
            .map(|i| verify_phase_randomization(cutoff, mix(seed, 2_000 + 100 * cutoff as u64 + i)))
            .collect::<Result<Vec<_>>>()?;
        let worst = checks.iter().map(|c| c.trace_distance.max(c.rotation_distance)).fold(0.0, f64::max);
        out.push(CheckOutcome {
            name: format!("phase randomization equals photon-number measurement [cutoff {cutoff}]"),
            pass: checks.iter().all(|c| c.pass(TRACE_TOLERANCE)),
            detail: format!("{per_cutoff} random states, worst trace distance {worst:.3e}"),
        });
    }
    Ok(out)
}

fn thinning_checks() -> Result<Vec<CheckOutcome>> {
    let histogram = Histogram { bin_width: 1, bins: vec![(3, 2.0), (10, 5.0), (11, 1.0), (40, 2.0)] };
    let sources = [
        ("poisson 30", PhotonNumberDistribution::Poisson { mean: 30.0 }),
        ("dual-delta 10/40", PhotonNumberDistribution::DualDelta { low: 10, high: 40, weight_low: 0.3 }),
        ("empirical histogram", PhotonNumberDistribution::Empirical(histogram)),
    ];
    let mut out = Vec::new();
    for (label, d) in sources {
        let mut worst = 0.0f64;
        for (t1, t2) in [(0.5, 0.5), (0.9, 0.1), (0.05, 0.7), (0.999, 0.999)] {
            let two_step = d.thin(t1)?.thin(t2)?;
            let one_step = d.thin(t1 * t2)?;
            worst = worst.max(total_variation(&two_step, &one_step));
        }
        out.push(CheckOutcome {
            name: format!("successive attenuations compose [{label}]"),
            pass: worst < THINNING_TOLERANCE,
            detail: format!("worst total variation {worst:.3e}"),
        });
    }
    Ok(out)
}

fn bright_source_model(mean_photons: f64) -> SystemModel {
    SystemModel {
        source: SourceConfig { mean_photons, placement: Placement::AtAlice, pulses: None },
        q: Interval::exact(0.5),
        lambda_relative_uncertainty: 0.0,
        monitor: MonitorConfig::perfect(),
        channel: ChannelDetector::gys(0.0),
        protocol: Protocol::Gllp,
        error_correction: ErrorCorrection::CascadeTable,
        normalization: Normalization::PerSourcePulse,
        finite: None,
        portions: None,
    }
}

fn trusted_limit_check() -> Result<CheckOutcome> {
    let distance = 20.0;
    let mut ratios = Vec::new();
    for m in [1e6, 1e8, 1e10, 1e12] {
        let model = bright_source_model(m);
        let trusted = optimize_keyrate(&model, Analysis::Trusted, distance, &default_grid(&model, Analysis::Trusted))?;
        let passive = optimize_keyrate(&model, Analysis::Passive, distance, &default_grid(&model, Analysis::Passive))?;
        ratios.push(passive.rate / trusted.rate);
    }
    let monotone = ratios.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    let last = *ratios.last().expect("four brightness levels");
    Ok(CheckOutcome {
        name: "untrusted rate converges to the trusted rate for bright sources".into(),
        pass: monotone && last > 0.999 && last <= 1.0 + 1e-12,
        detail: format!(
            "passive/trusted at 20 km for M = 1e6..1e12: {}",
            ratios.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(", ")
        ),
    })
}

pub fn run_suite(level: Level, seed: u64, faults: &FaultInjection) -> Result<Report> {
    let mut checks = sampling_checks(level, seed, faults)?;
    checks.extend(containment_checks(level)?);
    checks.extend(phase_checks(level, seed)?);
    checks.extend(thinning_checks()?);
    checks.push(trusted_limit_check()?);
    Ok(Report { level, seed, checks })
}
