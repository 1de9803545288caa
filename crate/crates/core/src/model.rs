//! End-to-end key-rate evaluation of one system configuration at one distance.
//!
//! Free parameters are expressed as mean output photon numbers rather than
//! raw internal transmittances: `μ = qλM_A` in the passive scheme and `μ = λM_A`
//! in the active scheme, with `M_A` the mean photon number entering Alice's
//! lab. The window is centred on what the monitor actually sees, `q'M_A` for
//! the passive scheme and `η_IM·M_A` for the active one, and the photon-number
//! bounds are taken at the matching equivalent transmittance `λ' = μ / centre`.

use serde::{Deserialize, Serialize};

use crate::bounds::{gain_bounds, pn_bounds};
use crate::error::{check_open_unit, Condition, Error, Result};
use crate::estimator::{
    epsilon_for_confidence, epsilon_for_confidence_active, hybrid_equivalent, untagged_fraction, MeasuredDistribution,
    Scheme, UntaggedWindow,
};
use crate::experiment::{
    apply_fluctuation, fluctuate, input_photons, AdjustedGains, ChannelDetector, DecoyMeasurements, Direction,
    SourceConfig, StateMeasurement,
};
use crate::keyrate::{
    gllp_rate_untrusted, normalize_rate, onedecoy_rate_untrusted, trusted_baseline_rate, wv_rate_untrusted,
    DecoyBoundInputs, ErrorCorrection, KeyRateResult, Normalization, Protocol, StatePortions,
};
use crate::photonstats::{PhotonNumberDistribution, GAUSSIAN_MIN_MEAN};

/// Conservative intervals at least this many noise deviations wide carry no confidence cost.
pub const VARSIGMA_NOISE_MULTIPLE: f64 = 6.0;

/// Which estimate of the source produced a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Passive,
    Active,
    Trusted,
}

impl Analysis {
    pub const ALL: [Analysis; 3] = [Analysis::Passive, Analysis::Active, Analysis::Trusted];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Passive => "passive",
            Analysis::Active => "active",
            Analysis::Trusted => "trusted",
        }
    }

    pub fn scheme(self) -> Option<Scheme> {
        match self {
            Analysis::Passive => Some(Scheme::Passive),
            Analysis::Active => Some(Scheme::Active),
            Analysis::Trusted => None,
        }
    }
}

/// A value known only to lie within `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn exact(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn endpoints(&self) -> Vec<f64> {
        if self.lo == self.hi {
            vec![self.lo]
        } else {
            vec![self.lo, self.hi]
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub eta_im: f64,
    pub sigma_im: f64,
    pub varsigma: f64,
}

impl MonitorConfig {
    pub fn perfect() -> Self {
        MonitorConfig { eta_im: 1.0, sigma_im: 0.0, varsigma: 0.0 }
    }
}

/// How the deviation `ε` is budgeted across intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    /// One `ε` from the total pulse count, shared by every intensity.
    Total,
    /// `ε` from the pulse count of the sparsest intensity, shared by every intensity.
    PerState,
}

/// Finite-data settings; absent means the infinite-data limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSize {
    pub tau: f64,
    /// Standard deviations of statistical fluctuation applied to measured gains.
    pub fluctuation_sd: f64,
    /// Coding probability of the active scheme.
    pub gamma: f64,
    pub epsilon_mode: EpsilonMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub source: SourceConfig,
    pub q: Interval,
    /// Fractional calibration uncertainty of Alice's internal transmittances.
    pub lambda_relative_uncertainty: f64,
    pub monitor: MonitorConfig,
    pub channel: ChannelDetector,
    pub protocol: Protocol,
    pub error_correction: ErrorCorrection,
    pub normalization: Normalization,
    pub finite: Option<FiniteSize>,
    /// Fixed state portions; when absent they are optimized for finite data.
    pub portions: Option<StatePortions>,
}

/// One point of the free-parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub delta: f64,
    pub portions: StatePortions,
}

/// Key-rate result together with the internal quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: KeyRateResult,
    pub lambda_signal: f64,
    pub lambda_decoy: f64,
}

impl SystemModel {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.channel.validate()?;
        self.error_correction.validate()?;
        check_open_unit("q lower end", self.q.lo)?;
        check_open_unit("q upper end", self.q.hi)?;
        if self.q.lo > self.q.hi {
            return Err(Error::Validation(format!("q interval [{}, {}] is reversed", self.q.lo, self.q.hi)));
        }
        if !(self.lambda_relative_uncertainty >= 0.0 && self.lambda_relative_uncertainty < 1.0) {
            return Err(Error::Validation("lambda uncertainty must lie in [0, 1)".into()));
        }
        let m = &self.monitor;
        if !(m.eta_im > 0.0 && m.eta_im <= 1.0) {
            return Err(Error::Validation(format!("eta_im = {} is outside (0, 1]", m.eta_im)));
        }
        if !(m.sigma_im >= 0.0) || !(m.varsigma >= 0.0) {
            return Err(Error::Validation("monitor noise and conservative interval must be >= 0".into()));
        }
        if m.sigma_im > 0.0 && m.varsigma < VARSIGMA_NOISE_MULTIPLE * m.sigma_im * (1.0 - 1e-12) {
            return Err(Error::Validation(format!(
                "conservative interval {} is below {VARSIGMA_NOISE_MULTIPLE}·sigma_im = {}; its confidence cost is not modelled",
                m.varsigma,
                VARSIGMA_NOISE_MULTIPLE * m.sigma_im
            )));
        }
        if let Some(f) = &self.finite {
            if self.source.pulses.is_none() {
                return Err(Error::Validation("finite-size settings need source.pulses".into()));
            }
            check_open_unit("tau", f.tau)?;
            check_open_unit("gamma", f.gamma)?;
            if !(f.fluctuation_sd >= 0.0) {
                return Err(Error::Validation("fluctuation width must be >= 0".into()));
            }
        }
        if let Some(p) = &self.portions {
            p.validate()?;
        }
        Ok(())
    }

    /// Whether the state portions are free parameters.
    pub fn optimizes_portions(&self) -> bool {
        self.protocol.uses_decoys() && self.finite.is_some() && self.portions.is_none()
    }

    pub fn channel_at(&self, distance_km: f64) -> ChannelDetector {
        self.channel.at_distance(distance_km)
    }

    /// Evaluates one parameter point; the most pessimistic corner of the calibration
    /// intervals is reported.
    pub fn evaluate(&self, analysis: Analysis, distance_km: f64, params: &RateParams) -> Result<Evaluation> {
        let ch = self.channel_at(distance_km);
        let Some(scheme) = analysis.scheme() else {
            let rate =
                trusted_baseline_rate(self.protocol, &ch, params.mu_signal, params.mu_decoy, &self.error_correction)?;
            let result = KeyRateResult::baseline(rate);
            let m_a = input_photons(&self.source, &ch);
            return Ok(Evaluation {
                result,
                lambda_signal: params.mu_signal / m_a,
                lambda_decoy: params.mu_decoy / m_a,
            });
        };
        let u = self.lambda_relative_uncertainty;
        let factors: Vec<f64> = if u == 0.0 { vec![1.0] } else { vec![1.0 - u, 1.0 + u] };
        let mut worst: Option<Evaluation> = None;
        for q in self.q.endpoints() {
            for &f in &factors {
                let e = self.evaluate_corner(scheme, &ch, q, f, params)?;
                if worst.as_ref().is_none_or(|w| e.result.rate < w.result.rate) {
                    worst = Some(e);
                }
            }
        }
        Ok(worst.expect("at least one corner"))
    }

    fn epsilon(&self, scheme: Scheme, portions: &StatePortions) -> Result<f64> {
        let Some(fin) = &self.finite else { return Ok(0.0) };
        let k = self.source.pulses.expect("validated");
        let k = match fin.epsilon_mode {
            EpsilonMode::Total => k,
            EpsilonMode::PerState if self.protocol.uses_decoys() => {
                let least = [portions.signal, portions.decoy, portions.vacuum]
                    .into_iter()
                    .filter(|p| *p > 0.0)
                    .fold(1.0, f64::min);
                k * least
            }
            EpsilonMode::PerState => k,
        };
        match scheme {
            Scheme::Passive => epsilon_for_confidence(k, fin.tau, scheme),
            Scheme::Active => epsilon_for_confidence_active(k, fin.tau, fin.gamma),
        }
    }

    fn evaluate_corner(
        &self,
        scheme: Scheme,
        ch: &ChannelDetector,
        q: f64,
        lambda_factor: f64,
        params: &RateParams,
    ) -> Result<Evaluation> {
        let m_a = input_photons(&self.source, ch);
        let mu_s = params.mu_signal * lambda_factor;
        let mu_d = params.mu_decoy * lambda_factor;
        let eta_im = self.monitor.eta_im;
        let (center, lambda_s, lambda_d) = match scheme {
            Scheme::Passive => ((1.0 - q) * eta_im * m_a, mu_s / (q * m_a), mu_d / (q * m_a)),
            Scheme::Active => (eta_im * m_a, mu_s / m_a, mu_d / m_a),
        };
        let portions = if self.protocol.uses_decoys() && self.finite.is_some() {
            params.portions
        } else {
            StatePortions { signal: 1.0, decoy: 0.0, vacuum: 0.0 }
        };
        let epsilon = self.epsilon(scheme, &portions)?;
        let infeasible = |c: Condition, delta: f64| Evaluation {
            result: KeyRateResult::infeasible(c, delta, epsilon),
            lambda_signal: lambda_s,
            lambda_decoy: lambda_d,
        };

        // Equivalent transmittances seen by the photon-number bounds.
        let equivalent = |lambda: f64| -> Result<f64> {
            match scheme {
                Scheme::Passive => Ok(hybrid_equivalent(q, lambda, eta_im)?.1),
                Scheme::Active => {
                    let lp = lambda / eta_im;
                    if lp > 1.0 {
                        Err(Error::infeasible(Condition::HybridConstraint, format!("λ/η_IM = {lp} exceeds 1")))
                    } else {
                        Ok(lp)
                    }
                }
            }
        };
        if !(lambda_s > 0.0 && lambda_s < 1.0) {
            return Ok(infeasible(Condition::HybridConstraint, 1.0));
        }
        let lp_s = match equivalent(lambda_s) {
            Ok(v) => v,
            Err(e) => return Ok(infeasible(e.condition().unwrap_or(Condition::HybridConstraint), 1.0)),
        };
        let lp_d = if self.protocol.uses_decoys() {
            if !(lambda_d > 0.0 && lambda_d < lambda_s) {
                return Ok(infeasible(Condition::Condition2, 1.0));
            }
            match equivalent(lambda_d) {
                Ok(v) => v,
                Err(e) => return Ok(infeasible(e.condition().unwrap_or(Condition::HybridConstraint), 1.0)),
            }
        } else {
            0.0
        };

        let window = UntaggedWindow::new(center, params.delta, self.monitor.varsigma)?;
        let actual = if center >= GAUSSIAN_MIN_MEAN {
            PhotonNumberDistribution::Gaussian { mean: center, variance: center }
        } else {
            PhotonNumberDistribution::Poisson { mean: center }
        };
        let measured = MeasuredDistribution::new(actual, self.monitor.sigma_im)?;
        let (_, delta) = untagged_fraction(&measured, &window);
        if !(delta + epsilon < 1.0) {
            return Ok(infeasible(Condition::UntaggedBits, delta));
        }

        let signal = StateMeasurement::simulate(ch, mu_s)?;
        let pulses = self.source.pulses.unwrap_or(f64::INFINITY);
        let coding = match (scheme, &self.finite) {
            (Scheme::Active, Some(f)) => f.gamma,
            _ => 1.0,
        };
        let u_sd = self.finite.map_or(0.0, |f| f.fluctuation_sd);

        let mut result = match self.protocol {
            Protocol::Gllp => {
                let q_low = fluctuate(signal.gain, pulses * coding, u_sd, Direction::Down);
                let q_lower = match gain_bounds(q_low, delta, epsilon) {
                    Ok(g) => g.lower,
                    Err(e) => return Ok(infeasible(e.condition().unwrap_or(Condition::UntaggedBits), delta)),
                };
                let p0 = pn_bounds(&window, lp_s, 0);
                let p1 = pn_bounds(&window, lp_s, 1);
                let (p0, p1) = match (p0, p1) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => {
                        return Ok(infeasible(e.condition().unwrap_or(Condition::Condition1), delta))
                    }
                };
                let mut r =
                    gllp_rate_untrusted(signal.gain, signal.qber, q_lower, p0.lower, p1.upper, &self.error_correction)?;
                r.pn_bounds = vec![p0, p1];
                r
            }
            Protocol::WeakVacuum | Protocol::OneDecoy => {
                let measured = DecoyMeasurements {
                    signal,
                    decoy: StateMeasurement::simulate(ch, mu_d)?,
                    vacuum: StateMeasurement::simulate(ch, 0.0)?,
                };
                let adjusted = if u_sd > 0.0 && pulses.is_finite() {
                    let n = pulses * coding;
                    let per = [portions.signal * n, portions.decoy * n, portions.vacuum * n];
                    if per.iter().any(|x| *x < 1.0) {
                        return Ok(infeasible(Condition::SinglePhotonGain, delta));
                    }
                    apply_fluctuation(&measured, per, u_sd)?
                } else {
                    AdjustedGains::unadjusted(&measured)
                };
                let inputs = DecoyBoundInputs {
                    measured,
                    adjusted,
                    delta,
                    epsilon,
                    window,
                    lambda_signal: lp_s,
                    lambda_decoy: lp_d,
                };
                if self.protocol == Protocol::WeakVacuum {
                    wv_rate_untrusted(&inputs, &self.error_correction)?
                } else {
                    onedecoy_rate_untrusted(&inputs, &self.error_correction)?
                }
            }
        };
        result.delta = delta;
        result.epsilon = epsilon;
        result.rate = normalize_rate(result.rate, scheme, self.normalization) * portions.signal;
        Ok(Evaluation { result, lambda_signal: lambda_s, lambda_decoy: lambda_d })
    }
}
