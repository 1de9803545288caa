//! Seeded simulation of the beam-splitter sampling experiment and brute-force
//! oracles for the statistical claims the key-rate analysis relies on.
//!
//! Each input pulse is assigned coding or sampling with a fair coin and split
//! into a U pulse (toward the encoder) and an L pulse (toward the monitor).
//! Monitor readings are the detected L photons plus Gaussian noise, tested
//! against the ς-shrunk window. The U side is scored on the simulator's ground
//! truth: the input photon number thinned by the same virtual attenuation
//! `q' = (1−q)η_IM` that the monitor sees, tested against the raw window.
//!
//! Trial `i` uses ChaCha stream `i` under the configured seed, so results do
//! not depend on scheduling.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::pn_bounds;
use crate::error::{Error, Result};
use crate::estimator::{confidence_bound_active, confidence_bound_passive, AliceApparatus, Scheme, UntaggedWindow};
use crate::photonstats::{binomial_thinning_pmf, PhotonNumberDistribution};

/// Pass slack on empirical violation rates, in binomial standard errors.
pub const SLACK_STANDARD_ERRORS: f64 = 5.0;

/// Largest Fock cutoff accepted by the density-matrix check.
pub const MAX_FOCK_CUTOFF: usize = 8;

/// Largest window centre accepted by the exhaustive photon-number check.
pub const MAX_BRUTEFORCE_CENTER: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Pulses per trial.
    pub k: u64,
    pub trials: u64,
    pub seed: u64,
    pub source: PhotonNumberDistribution,
    pub apparatus: AliceApparatus,
    /// Window in monitor-photon units.
    pub window: UntaggedWindow,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.trials == 0 {
            return Err(Error::Validation("k and trials must be at least 1".into()));
        }
        self.source.validate()?;
        self.apparatus.validate()?;
        self.window.validate()
    }

    /// Monitor detection probability per input photon.
    pub fn virtual_attenuation(&self) -> f64 {
        (1.0 - self.apparatus.q) * self.apparatus.eta_im
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub input_photons: u64,
    pub encoder_photons: u64,
    pub monitor_photons: u64,
    pub detected: u64,
    pub coding: bool,
    /// Monitor reading inside the shrunk window.
    pub l_untagged: bool,
    /// Virtually attenuated input inside the raw window.
    pub u_untagged: bool,
}

/// Untagged counts of one trial, split by pulse role and arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCounts {
    pub k: u64,
    pub sampling_l: u64,
    pub coding_l: u64,
    pub sampling_u: u64,
    pub coding_u: u64,
}

impl SessionCounts {
    pub fn total_u(&self) -> u64 {
        self.sampling_u + self.coding_u
    }

    pub fn total_l(&self) -> u64 {
        self.sampling_l + self.coding_l
    }

    fn add(&mut self, p: &PulseRecord) {
        self.k += 1;
        match (p.coding, p.l_untagged, p.u_untagged) {
            (true, l, u) => {
                self.coding_l += l as u64;
                self.coding_u += u as u64;
            }
            (false, l, u) => {
                self.sampling_l += l as u64;
                self.sampling_u += u as u64;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub counts: SessionCounts,
    pub pulses: Vec<PulseRecord>,
}

/// Draws one photon number.
pub fn sample_photons<R: Rng + ?Sized>(d: &PhotonNumberDistribution, rng: &mut R) -> u64 {
    match d {
        PhotonNumberDistribution::Poisson { mean } => {
            if *mean <= 0.0 {
                0
            } else {
                Poisson::new(*mean).expect("validated mean").sample(rng) as u64
            }
        }
        PhotonNumberDistribution::Gaussian { mean, variance } => {
            let x: f64 = Normal::new(*mean, variance.sqrt()).expect("validated variance").sample(rng);
            x.round().max(0.0) as u64
        }
        PhotonNumberDistribution::DualDelta { low, high, weight_low } => {
            if rng.gen::<f64>() < *weight_low {
                *low
            } else {
                *high
            }
        }
        PhotonNumberDistribution::Empirical(h) => {
            let idx = WeightedIndex::new(h.bins.iter().map(|b| b.1)).expect("validated histogram").sample(rng);
            h.bins[idx].0 + rng.gen_range(0..h.bin_width)
        }
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn simulate_pulse<R: Rng + ?Sized>(cfg: &TrialConfig, rng: &mut R) -> PulseRecord {
    let a = &cfg.apparatus;
    let w = &cfg.window;
    let m = sample_photons(&cfg.source, rng);
    let coding = rng.gen::<bool>();
    let monitor_photons = binomial(m, 1.0 - a.q, rng);
    let detected = binomial(monitor_photons, a.eta_im, rng);
    let noise: f64 = if a.sigma_im > 0.0 { a.sigma_im * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    let reading = detected as f64 + noise;
    let (mlo, mhi) = w.measured_bounds();
    let l_untagged = !w.is_empty() && reading >= mlo && reading <= mhi;
    let virtual_u = binomial(m, cfg.virtual_attenuation(), rng) as f64;
    let raw_lo = (1.0 - w.delta) * w.center;
    let raw_hi = (1.0 + w.delta) * w.center;
    PulseRecord {
        input_photons: m,
        encoder_photons: m - monitor_photons,
        monitor_photons,
        detected,
        coding,
        l_untagged,
        u_untagged: virtual_u >= raw_lo && virtual_u <= raw_hi,
    }
}

/// Full per-pulse record of trial `trial`.
pub fn simulate_session(cfg: &TrialConfig, trial: u64) -> Result<Session> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, trial);
    let mut counts = SessionCounts::default();
    let pulses = (0..cfg.k)
        .map(|_| {
            let p = simulate_pulse(cfg, &mut rng);
            counts.add(&p);
            p
        })
        .collect();
    Ok(Session { counts, pulses })
}

fn session_counts(cfg: &TrialConfig, trial: u64) -> SessionCounts {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut counts = SessionCounts::default();
    for _ in 0..cfg.k {
        counts.add(&simulate_pulse(cfg, &mut rng));
    }
    counts
}

/// Counts of every trial, in trial order.
pub fn run_trials(cfg: &TrialConfig) -> Result<Vec<SessionCounts>> {
    cfg.validate()?;
    Ok((0..cfg.trials).into_par_iter().map(|t| session_counts(cfg, t)).collect())
}

/// Scales applied to the analytic bounds; anything but 1 deliberately breaks a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub active_bound_scale: f64,
    pub passive_bound_scale: f64,
}

impl Default for FaultInjection {
    fn default() -> Self {
        FaultInjection { active_bound_scale: 1.0, passive_bound_scale: 1.0 }
    }
}

impl Scheme {
    /// Name of the sampling inequality the scheme relies on.
    pub fn sampling_claim(self) -> &'static str {
        match self {
            Scheme::Active => "active sampling bound (coding U vs sampling L)",
            Scheme::Passive => "passive cross-estimate bound (all U vs all L)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingCheck {
    pub scheme: Scheme,
    pub k: u64,
    pub epsilon: f64,
    pub trials: u64,
    pub violations: u64,
    pub empirical_rate: f64,
    pub analytic_bound: f64,
    pub pass: bool,
}

fn violates(c: &SessionCounts, scheme: Scheme, epsilon: f64) -> bool {
    let slack = epsilon * c.k as f64;
    match scheme {
        Scheme::Active => (c.coding_u as f64) <= c.sampling_l as f64 - slack,
        Scheme::Passive => (c.total_u() as f64) <= c.total_l() as f64 - slack,
    }
}

/// Empirical rate of the sampling inequality failing, against its analytic bound.
pub fn verify_sampling_bounds(
    counts: &[SessionCounts],
    scheme: Scheme,
    epsilon: f64,
    faults: &FaultInjection,
) -> Result<SamplingCheck> {
    let Some(first) = counts.first() else {
        return Err(Error::Validation("no trials to check".into()));
    };
    let k = first.k;
    let bound = match scheme {
        Scheme::Active => confidence_bound_active(k as f64, epsilon, 0.5)? * faults.active_bound_scale,
        Scheme::Passive => confidence_bound_passive(k as f64, epsilon)? * faults.passive_bound_scale,
    }
    .min(1.0);
    let trials = counts.len() as u64;
    let violations = counts.iter().filter(|c| violates(c, scheme, epsilon)).count() as u64;
    let empirical = violations as f64 / trials as f64;
    let se = (bound * (1.0 - bound) / trials as f64).sqrt();
    Ok(SamplingCheck {
        scheme,
        k,
        epsilon,
        trials,
        violations,
        empirical_rate: empirical,
        analytic_bound: bound,
        pass: empirical <= bound + SLACK_STANDARD_ERRORS * se,
    })
}

/// Largest amount by which any `P(n | m)` with `m` in the window escapes its bounds;
/// `≤ 0` means full containment.
pub fn bruteforce_pn_check(window: &UntaggedWindow, lambda: f64) -> Result<f64> {
    window.validate()?;
    if window.center > MAX_BRUTEFORCE_CENTER {
        return Err(Error::domain(format!(
            "exhaustive check needs centre <= {MAX_BRUTEFORCE_CENTER}, got {}",
            window.center
        )));
    }
    let lo = window.lo_edge().max(0.0) as u64;
    let hi = window.hi_edge() as u64;
    let mut worst = f64::NEG_INFINITY;
    for n in 0..=hi + 1 {
        let b = pn_bounds(window, lambda, n)?;
        for m in lo..=hi {
            let p = binomial_thinning_pmf(m, lambda, n)?;
            worst = worst.max(b.lower - p).max(p - b.upper);
        }
    }
    Ok(worst)
}

/// Reduced Bob–Eve states under phase randomization and under a photon-number
/// measurement, built from the joint amplitudes `b[(m, n)]` of `Σ b_{m,n} |E_n⟩|m⟩`.
/// Basis index is `m·(cutoff+1) + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStates {
    pub randomized: DMatrix<Complex64>,
    pub measured: DMatrix<Complex64>,
    /// Phase average by equispaced rotations, exact for photon-number differences below the point count.
    pub rotated: DMatrix<Complex64>,
}

pub fn phase_randomization_states(b: &DMatrix<Complex64>) -> Result<PhaseStates> {
    let d = b.nrows();
    if d == 0 || b.ncols() != d {
        return Err(Error::domain("amplitude matrix must be square and non-empty"));
    }
    if d > MAX_FOCK_CUTOFF + 1 {
        return Err(Error::domain(format!("Fock cutoff {} exceeds {MAX_FOCK_CUTOFF}", d - 1)));
    }
    let dim = d * d;
    let psi = DMatrix::from_fn(dim, 1, |i, _| b[(i / d, i % d)]);
    let rho = &psi * psi.adjoint();
    let randomized =
        DMatrix::from_fn(dim, dim, |i, j| if i / d == j / d { rho[(i, j)] } else { Complex64::new(0.0, 0.0) });
    let mut measured = DMatrix::zeros(dim, dim);
    for m in 0..d {
        let proj = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j && i / d == m {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        measured += &proj * &rho * &proj;
    }
    let mut rotated = DMatrix::zeros(dim, dim);
    for j in 0..d {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / d as f64;
        let u = DMatrix::from_fn(dim, dim, |r, c| {
            if r == c {
                Complex64::from_polar(1.0, (r / d) as f64 * theta)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        rotated += &u * &rho * u.adjoint();
    }
    rotated /= Complex64::new(d as f64, 0.0);
    Ok(PhaseStates { randomized, measured, rotated })
}

fn eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
    h.clone().symmetric_eigenvalues().iter().copied().collect()
}

/// `½ Σ |eigenvalues(a − b)|` for Hermitian `a`, `b`.
pub fn trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    0.5 * eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCheck {
    pub cutoff: usize,
    pub trace_distance: f64,
    /// Distance between the analytic and the rotation-averaged states.
    pub rotation_distance: f64,
    pub min_eigenvalue: f64,
    pub max_trace_error: f64,
    pub max_hermitian_error: f64,
}

impl PhaseCheck {
    pub fn pass(&self, tol: f64) -> bool {
        self.trace_distance <= tol
            && self.rotation_distance <= tol
            && self.min_eigenvalue >= -tol
            && self.max_trace_error <= tol
            && self.max_hermitian_error <= tol
    }
}

/// Random normalized amplitudes over `m, n ≤ cutoff`.
pub fn random_amplitudes(cutoff: usize, seed: u64) -> Result<DMatrix<Complex64>> {
    if cutoff > MAX_FOCK_CUTOFF {
        return Err(Error::domain(format!("Fock cutoff {cutoff} exceeds {MAX_FOCK_CUTOFF}")));
    }
    let d = cutoff + 1;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut b = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let norm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    b /= Complex64::new(norm, 0.0);
    Ok(b)
}

pub fn verify_phase_randomization(cutoff: usize, seed: u64) -> Result<PhaseCheck> {
    let b = random_amplitudes(cutoff, seed)?;
    let s = phase_randomization_states(&b)?;
    let mut min_eig = f64::INFINITY;
    let mut trace_err: f64 = 0.0;
    let mut herm_err: f64 = 0.0;
    for rho in [&s.randomized, &s.measured] {
        min_eig = min_eig.min(eigenvalues(rho).into_iter().fold(f64::INFINITY, f64::min));
        trace_err = trace_err.max((rho.trace() - Complex64::new(1.0, 0.0)).norm());
        herm_err = herm_err.max((rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(PhaseCheck {
        cutoff,
        trace_distance: trace_distance(&s.randomized, &s.measured),
        rotation_distance: trace_distance(&s.randomized, &s.rotated),
        min_eigenvalue: min_eig,
        max_trace_error: trace_err,
        max_hermitian_error: herm_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{untagged_fraction, MeasuredDistribution};

    fn apparatus(q: f64, eta_im: f64, sigma_im: f64, varsigma: f64) -> AliceApparatus {
        AliceApparatus { q, lambda_signal: 1e-6, lambda_decoy: 5e-7, eta_im, sigma_im, varsigma }
    }

    #[test]
    fn transparent_monitor_counts_the_window_directly() {
        let w = UntaggedWindow::new(100.0, 0.1, 0.0).unwrap();
        let cfg = TrialConfig {
            k: 2000,
            trials: 1,
            seed: 7,
            source: PhotonNumberDistribution::Poisson { mean: 100.0 },
            apparatus: apparatus(1e-12, 1.0, 0.0, 0.0),
            window: w,
        };
        let s = simulate_session(&cfg, 0).unwrap();
        let direct = s.pulses.iter().filter(|p| (90..=110).contains(&p.input_photons)).count() as u64;
        assert_eq!(s.counts.total_l(), direct);
        assert!(s.pulses.iter().all(|p| p.encoder_photons + p.monitor_photons == p.input_photons));
    }

    #[test]
    fn source_inside_window_is_fully_untagged() {
        let cfg = TrialConfig {
            k: 500,
            trials: 1,
            seed: 1,
            source: PhotonNumberDistribution::DualDelta { low: 100, high: 100, weight_low: 0.5 },
            apparatus: apparatus(1e-12, 1.0, 0.0, 0.0),
            window: UntaggedWindow::new(100.0, 0.05, 0.0).unwrap(),
        };
        let s = simulate_session(&cfg, 0).unwrap();
        assert_eq!(s.counts.total_u(), 500);
        assert_eq!(s.counts.total_l(), 500);
    }

    #[test]
    fn sessions_are_reproducible() {
        let cfg = TrialConfig {
            k: 300,
            trials: 4,
            seed: 99,
            source: PhotonNumberDistribution::Poisson { mean: 1e4 },
            apparatus: apparatus(0.5, 0.8, 20.0, 120.0),
            window: UntaggedWindow::new(4e3, 0.05, 120.0).unwrap(),
        };
        assert_eq!(simulate_session(&cfg, 2).unwrap(), simulate_session(&cfg, 2).unwrap());
        assert_eq!(run_trials(&cfg).unwrap(), run_trials(&cfg).unwrap());
        assert_ne!(simulate_session(&cfg, 1).unwrap().counts, simulate_session(&cfg, 2).unwrap().counts);
    }

    #[test]
    fn mean_monitor_fraction_matches_analytic_window_mass() {
        let w = UntaggedWindow::new(5e3, 0.01, 0.0).unwrap();
        let cfg = TrialConfig {
            k: 10_000,
            trials: 1000,
            seed: 2024,
            source: PhotonNumberDistribution::Poisson { mean: 1e4 },
            apparatus: apparatus(0.5, 1.0, 0.0, 0.0),
            window: w,
        };
        let fr: Vec<f64> = run_trials(&cfg).unwrap().iter().map(|c| c.total_l() as f64 / c.k as f64).collect();
        let n = fr.len() as f64;
        let mean = fr.iter().sum::<f64>() / n;
        let sd = (fr.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let measured = MeasuredDistribution::new(PhotonNumberDistribution::Poisson { mean: 5e3 }, 0.0).unwrap();
        let (want, _) = untagged_fraction(&measured, &w);
        assert!((mean - want).abs() < 3.0 * sd / n.sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn huge_epsilon_never_violates() {
        let cfg = TrialConfig {
            k: 200,
            trials: 50,
            seed: 3,
            source: PhotonNumberDistribution::Poisson { mean: 100.0 },
            apparatus: apparatus(0.5, 1.0, 0.0, 0.0),
            window: UntaggedWindow::new(50.0, 0.1, 0.0).unwrap(),
        };
        let counts = run_trials(&cfg).unwrap();
        for scheme in [Scheme::Active, Scheme::Passive] {
            let c = verify_sampling_bounds(&counts, scheme, 1.0, &FaultInjection::default()).unwrap();
            assert_eq!(c.violations, 0);
            assert!(c.analytic_bound < 1e-20);
            assert!(c.pass);
        }
    }

    #[test]
    fn bruteforce_examples() {
        let w = UntaggedWindow::new(20.0, 0.1, 0.0).unwrap();
        assert!(bruteforce_pn_check(&w, 0.03).unwrap() <= 0.0);
        let edge = 1.0 / w.hi_edge() - 1e-6;
        assert!(bruteforce_pn_check(&w, edge).unwrap() <= 0.0);
        let point = UntaggedWindow::new(20.0, 0.0, 0.0).unwrap();
        assert_eq!(bruteforce_pn_check(&point, 0.03).unwrap(), 0.0);
        assert!(bruteforce_pn_check(&w, 0.05).is_err());
        assert!(bruteforce_pn_check(&UntaggedWindow::new(300.0, 0.1, 0.0).unwrap(), 1e-3).is_err());
    }

    #[test]
    fn single_fock_sector_is_left_pure() {
        let mut b = DMatrix::from_element(3, 3, Complex64::new(0.0, 0.0));
        b[(1, 0)] = Complex64::new(0.6, 0.0);
        b[(1, 2)] = Complex64::new(0.0, 0.8);
        let s = phase_randomization_states(&b).unwrap();
        let psi = DMatrix::from_fn(9, 1, |i, _| b[(i / 3, i % 3)]);
        let pure = &psi * psi.adjoint();
        assert!(trace_distance(&s.randomized, &pure) < 1e-15);
        assert!(trace_distance(&s.measured, &pure) < 1e-15);
    }

    #[test]
    fn two_level_case_by_hand() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut b = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        b[(0, 1)] = Complex64::new(h, 0.0);
        b[(1, 0)] = Complex64::new(0.0, h);
        let s = phase_randomization_states(&b).unwrap();
        // |m=0,E_1⟩ and |m=1,E_0⟩ with equal weight: a 50/50 classical mixture.
        let mut want = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        want[(1, 1)] = Complex64::new(0.5, 0.0);
        want[(2, 2)] = Complex64::new(0.5, 0.0);
        assert!(trace_distance(&s.randomized, &want) < 1e-15);
        assert!(trace_distance(&s.measured, &want) < 1e-15);
        let psi = DMatrix::from_fn(4, 1, |i, _| b[(i / 2, i % 2)]);
        assert!((trace_distance(&(&psi * psi.adjoint()), &want) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_states_agree() {
        for seed in 0..5 {
            let c = verify_phase_randomization(4, seed).unwrap();
            assert!(c.pass(1e-12), "{c:?}");
        }
        assert!(verify_phase_randomization(9, 0).is_err());
    }
}
