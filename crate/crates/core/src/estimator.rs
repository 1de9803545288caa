//! Source-estimation schemes: how many of the pulses Alice encodes are
//! untagged, i.e. entered her lab with a photon number inside the window
//! `[(1−δ)M, (1+δ)M]`.
//!
//! In the active scheme an optical switch routes each pulse either to the
//! encoder or to the monitor, and the untagged count of the coding pulses is
//! bounded from the sampling pulses. In the passive scheme a `q : 1−q` beam
//! splitter feeds both arms at once, and the encoder-side count is bounded
//! from the monitor-side count of the same pulses through a cross estimate.
//! The hybrid construction folds monitor inefficiency into an equivalent
//! splitter so both analyses share one set of photon-number bounds.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Condition, Error, Result};
use crate::photonstats::{gaussian_window_complement, normal_cdf, PhotonNumberDistribution};

/// How Alice learns the photon-number statistics of her input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Active,
    Passive,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Active => "active",
            Scheme::Passive => "passive",
        }
    }
}

/// Alice's photon-number analyzer and internal attenuators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliceApparatus {
    /// Beam-splitter transmittance toward the encoder.
    pub q: f64,
    pub lambda_signal: f64,
    pub lambda_decoy: f64,
    /// Intensity-monitor efficiency.
    pub eta_im: f64,
    /// Intensity-monitor noise standard deviation, photons.
    pub sigma_im: f64,
    /// Conservative interval, photons.
    pub varsigma: f64,
}

impl AliceApparatus {
    pub fn validate(&self) -> Result<()> {
        check_open_unit("q", self.q)?;
        check_open_unit("lambda_signal", self.lambda_signal)?;
        check_open_unit("lambda_decoy", self.lambda_decoy)?;
        if !(self.eta_im > 0.0 && self.eta_im <= 1.0) {
            return Err(Error::domain(format!("eta_im = {} is outside (0, 1]", self.eta_im)));
        }
        if !(self.sigma_im >= 0.0) || !(self.varsigma >= 0.0) {
            return Err(Error::domain("monitor noise and conservative interval must be >= 0"));
        }
        hybrid_equivalent(self.q, self.lambda_signal, self.eta_im)?;
        hybrid_equivalent(self.q, self.lambda_decoy, self.eta_im)?;
        Ok(())
    }
}

/// Acceptance band for untagged bits, centred on `center` photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UntaggedWindow {
    pub center: f64,
    pub delta: f64,
    pub varsigma: f64,
}

/// Relative slack absorbing rounding in `(1±δ)M` before floor/ceil.
const EDGE_TOLERANCE: f64 = 1e-9;

impl UntaggedWindow {
    pub fn new(center: f64, delta: f64, varsigma: f64) -> Result<Self> {
        let w = UntaggedWindow { center, delta, varsigma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center >= 1.0 && self.center.is_finite()) {
            return Err(Error::domain(format!("window centre {} must be >= 1", self.center)));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::domain(format!("delta = {} is outside [0, 1)", self.delta)));
        }
        if !(self.varsigma >= 0.0) {
            return Err(Error::domain("conservative interval must be >= 0"));
        }
        Ok(())
    }

    /// Lowest untagged photon number, `floor((1−δ)M)`.
    pub fn lo_edge(&self) -> f64 {
        let x = (1.0 - self.delta) * self.center;
        (x + EDGE_TOLERANCE * x.abs().max(1.0)).floor()
    }

    /// Highest untagged photon number, `ceil((1+δ)M)`.
    pub fn hi_edge(&self) -> f64 {
        let x = (1.0 + self.delta) * self.center;
        (x - EDGE_TOLERANCE * x.abs().max(1.0)).ceil()
    }

    /// Monitor-reading interval `[(1−δ)M+ς, (1+δ)M−ς]` counted as untagged.
    pub fn measured_bounds(&self) -> (f64, f64) {
        let half = self.delta * self.center - self.varsigma;
        (self.center - half, self.center + half)
    }

    pub fn is_empty(&self) -> bool {
        self.varsigma >= self.delta * self.center
    }
}

/// Monitor readings: the actual photon number plus independent `N(0, noise_sd²)` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredDistribution {
    pub actual: PhotonNumberDistribution,
    pub noise_sd: f64,
}

impl MeasuredDistribution {
    pub fn new(actual: PhotonNumberDistribution, noise_sd: f64) -> Result<Self> {
        actual.validate()?;
        if !(noise_sd >= 0.0) {
            return Err(Error::domain("monitor noise must be >= 0"));
        }
        Ok(MeasuredDistribution { actual, noise_sd })
    }

    /// Reading mass inside `[lo, hi]` and outside it, the latter computed without cancellation
    /// where possible.
    pub fn window_split(&self, lo: f64, hi: f64) -> (f64, f64) {
        if !(lo < hi) {
            return (0.0, 1.0);
        }
        let noise_var = self.noise_sd * self.noise_sd;
        match &self.actual {
            PhotonNumberDistribution::Gaussian { mean, variance } => {
                let out = gaussian_window_complement(*mean, variance + noise_var, lo, hi).unwrap_or(1.0);
                (1.0 - out, out)
            }
            d if self.noise_sd == 0.0 => {
                let inside = d.window_mass(lo, hi);
                (inside, (1.0 - inside).max(0.0))
            }
            d => {
                let (slo, shi) = d.support();
                let mut inside = 0.0;
                for m in slo..=shi {
                    let p = d.pmf(m);
                    if p == 0.0 {
                        continue;
                    }
                    let mf = m as f64;
                    let w = normal_cdf((hi - mf) / self.noise_sd) - normal_cdf((lo - mf) / self.noise_sd);
                    inside += p * w.max(0.0);
                }
                let inside = inside.min(1.0);
                (inside, 1.0 - inside)
            }
        }
    }
}

/// Untagged fraction and tagged ratio `Δ` of monitor readings in the ς-shrunk window.
pub fn untagged_fraction(measured: &MeasuredDistribution, window: &UntaggedWindow) -> (f64, f64) {
    if window.is_empty() {
        return (0.0, 1.0);
    }
    let (lo, hi) = window.measured_bounds();
    measured.window_split(lo, hi)
}

/// Equivalent splitter ratio and internal transmittance `(q', λ')` of the virtual setup.
pub fn hybrid_equivalent(q: f64, lambda: f64, eta_im: f64) -> Result<(f64, f64)> {
    check_open_unit("q", q)?;
    check_open_unit("lambda", lambda)?;
    if !(eta_im > 0.0 && eta_im <= 1.0) {
        return Err(Error::domain(format!("eta_im = {eta_im} is outside (0, 1]")));
    }
    let q_prime = (1.0 - q) * eta_im;
    let lambda_prime = q * lambda / q_prime;
    if lambda_prime > 1.0 {
        return Err(Error::infeasible(
            Condition::HybridConstraint,
            format!("q·λ/((1−q)·η_IM) = {lambda_prime} exceeds 1"),
        ));
    }
    Ok((q_prime, lambda_prime))
}

fn check_bound_inputs(k: f64, epsilon: f64) -> Result<()> {
    if !(k >= 1.0) {
        return Err(Error::domain(format!("pulse count {k} must be >= 1")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("deviation {epsilon} must be positive")));
    }
    Ok(())
}

/// Probability that the untagged coding count falls `εk` short of its sampling estimate when
/// each pulse is a coding pulse with probability `gamma`.
pub fn confidence_bound_active(k: f64, epsilon: f64, gamma: f64) -> Result<f64> {
    check_bound_inputs(k, epsilon)?;
    check_open_unit("gamma", gamma)?;
    Ok((-2.0 * k * epsilon * epsilon * gamma * gamma).exp())
}

/// Probability that the encoder-side untagged count falls `εk` below the monitor-side count.
pub fn confidence_bound_passive(k: f64, epsilon: f64) -> Result<f64> {
    check_bound_inputs(k, epsilon)?;
    Ok(2.0 * (-k * epsilon * epsilon / 4.0).exp())
}

/// Cross-estimate failure probability with separate deviations for the two sampling directions.
pub fn confidence_bound_passive_split(k: f64, epsilon1: f64, epsilon2: f64) -> Result<f64> {
    check_bound_inputs(k, epsilon1)?;
    check_bound_inputs(k, epsilon2)?;
    Ok((-k * epsilon1 * epsilon1 / 2.0).exp() + (-k * epsilon2 * epsilon2 / 2.0).exp())
}

/// Smallest `ε` whose failure probability is `1 − tau` (active uses `γ = ½`).
pub fn epsilon_for_confidence(k: f64, tau: f64, scheme: Scheme) -> Result<f64> {
    match scheme {
        Scheme::Active => epsilon_for_confidence_active(k, tau, 0.5),
        Scheme::Passive => {
            check_confidence(k, tau)?;
            Ok((-4.0 * ((1.0 - tau) / 2.0).ln() / k).sqrt())
        }
    }
}

/// Active-scheme `ε` for a general coding probability.
pub fn epsilon_for_confidence_active(k: f64, tau: f64, gamma: f64) -> Result<f64> {
    check_confidence(k, tau)?;
    check_open_unit("gamma", gamma)?;
    Ok((-(1.0 - tau).ln() / (2.0 * k * gamma * gamma)).sqrt())
}

fn check_confidence(k: f64, tau: f64) -> Result<()> {
    if !(k >= 1.0) {
        return Err(Error::domain(format!("pulse count {k} must be >= 1")));
    }
    check_open_unit("tau", tau)
}

/// Pulse count, confidence target and the deviation they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBudget {
    pub k: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub gamma: f64,
}

impl ConfidenceBudget {
    pub fn new(k: f64, tau: f64, scheme: Scheme, gamma: f64) -> Result<Self> {
        let epsilon = match scheme {
            Scheme::Active => epsilon_for_confidence_active(k, tau, gamma)?,
            Scheme::Passive => epsilon_for_confidence(k, tau, scheme)?,
        };
        Ok(ConfidenceBudget { k, tau, epsilon, scheme, gamma })
    }

    /// Infinite data: `ε = 0` with certainty.
    pub fn asymptotic(scheme: Scheme) -> Self {
        ConfidenceBudget { k: f64::INFINITY, tau: 1.0, epsilon: 0.0, scheme, gamma: 0.5 }
    }

    /// Failure probability implied by the stored deviation.
    pub fn failure_probability(&self) -> Result<f64> {
        if self.epsilon == 0.0 {
            return Ok(if self.k.is_infinite() { 0.0 } else { 1.0 });
        }
        match self.scheme {
            Scheme::Active => confidence_bound_active(self.k, self.epsilon, self.gamma),
            Scheme::Passive => confidence_bound_passive(self.k, self.epsilon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_examples() {
        let (qp, lp) = hybrid_equivalent(0.5, 1e-6, 1.0).unwrap();
        assert_eq!((qp, lp), (0.5, 1e-6));
        let (qp, lp) = hybrid_equivalent(0.01, 1e-6, 0.7).unwrap();
        assert!((qp - 0.693).abs() < 1e-15);
        assert!((lp - 1.443001443001443e-8).abs() < 1e-20);
        let err = hybrid_equivalent(0.999, 0.9, 0.5).unwrap_err();
        assert_eq!(err.condition(), Some(Condition::HybridConstraint));
    }

    #[test]
    fn bound_examples() {
        assert!((confidence_bound_active(1e4, 0.03, 0.5).unwrap() - 0.011108996538).abs() < 1e-9);
        let g = confidence_bound_active(1e4, 0.03, 0.9).unwrap();
        assert!((g - (-14.58f64).exp()).abs() < 1e-18);
        assert!((confidence_bound_passive(1e4, 0.03).unwrap() - 0.210798449).abs() < 1e-6);
    }

    #[test]
    fn epsilon_examples() {
        let ea = epsilon_for_confidence(1e12, 1.0 - 1e-10, Scheme::Active).unwrap();
        let ep = epsilon_for_confidence(1e12, 1.0 - 1e-10, Scheme::Passive).unwrap();
        assert!((ea - 6.7862e-6).abs() < 5e-10, "{ea}");
        assert!((ep - 9.7409e-6).abs() < 5e-10, "{ep}");
        assert!(epsilon_for_confidence(1e4, 1.0, Scheme::Passive).is_err());
    }

    #[test]
    fn window_edges_absorb_rounding() {
        let w = UntaggedWindow::new(20.0, 0.1, 0.0).unwrap();
        assert_eq!(w.lo_edge(), 18.0);
        assert_eq!(w.hi_edge(), 22.0);
        let w = UntaggedWindow::new(20.5, 0.1, 0.0).unwrap();
        assert_eq!(w.lo_edge(), 18.0);
        assert_eq!(w.hi_edge(), 23.0);
    }

    #[test]
    fn collapsed_window_is_fully_tagged() {
        let m = 1e6;
        let w = UntaggedWindow::new(m, 0.01, 0.01 * m).unwrap();
        let d = MeasuredDistribution::new(PhotonNumberDistribution::Gaussian { mean: m, variance: m }, 0.0).unwrap();
        assert_eq!(untagged_fraction(&d, &w), (0.0, 1.0));
    }

    #[test]
    fn one_sigma_window() {
        let m = 1e6;
        let sd = (m + 4e6f64).sqrt();
        let w = UntaggedWindow::new(m, 0.01, 0.01 * m - sd).unwrap();
        let d = MeasuredDistribution::new(PhotonNumberDistribution::Gaussian { mean: m, variance: m }, 2e3).unwrap();
        let (f, delta) = untagged_fraction(&d, &w);
        assert!((f - 0.682689492).abs() < 1e-8);
        assert!((delta - 0.317310508).abs() < 1e-8);
    }

    #[test]
    fn dual_delta_window() {
        let d = PhotonNumberDistribution::DualDelta { low: 100, high: 200, weight_low: 0.5 };
        let w = UntaggedWindow::new(100.0, 0.1, 0.0).unwrap();
        let m = MeasuredDistribution::new(d, 0.0).unwrap();
        assert_eq!(untagged_fraction(&m, &w), (0.5, 0.5));
    }
}
