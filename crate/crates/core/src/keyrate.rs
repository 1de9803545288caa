//! Secret key rates for untagged bits (GLLP, weak+vacuum, one-decoy) and the trusted-source
//! baselines they are compared against.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    condition1, condition2_check, decoy_correction, eq_bounds, gain_bounds, low_order_bounds, LowOrderBounds, PnBounds,
};
use crate::error::{check_probability, Condition, Error, Result};
use crate::estimator::{Scheme, UntaggedWindow};
use crate::experiment::{simulate_gain_qber, AdjustedGains, ChannelDetector, DecoyMeasurements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Gllp,
    WeakVacuum,
    OneDecoy,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Gllp => "gllp",
            Protocol::WeakVacuum => "weak_vacuum",
            Protocol::OneDecoy => "one_decoy",
        }
    }

    pub fn uses_decoys(self) -> bool {
        self != Protocol::Gllp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerSourcePulse,
    PerAlicePulse,
}

/// Error-correction inefficiency `f(E)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ErrorCorrection {
    Constant {
        f: f64,
    },
    /// Piecewise-linear inefficiency of a practical Cascade implementation.
    CascadeTable,
}

const CASCADE_TABLE: [(f64, f64); 6] =
    [(0.0, 1.16), (0.01, 1.16), (0.05, 1.16), (0.1, 1.22), (0.15, 1.35), (0.5, 1.35)];

impl ErrorCorrection {
    pub fn inefficiency(&self, qber: f64) -> f64 {
        match self {
            ErrorCorrection::Constant { f } => *f,
            ErrorCorrection::CascadeTable => {
                let e = qber.clamp(0.0, 0.5);
                for w in CASCADE_TABLE.windows(2) {
                    let (x0, y0) = w[0];
                    let (x1, y1) = w[1];
                    if e <= x1 {
                        return y0 + (y1 - y0) * (e - x0) / (x1 - x0);
                    }
                }
                CASCADE_TABLE[CASCADE_TABLE.len() - 1].1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ErrorCorrection::Constant { f } = self {
            if !(*f >= 1.0) {
                return Err(Error::domain(format!("error-correction inefficiency {f} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Fraction of pulses assigned to each intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePortions {
    pub signal: f64,
    pub decoy: f64,
    pub vacuum: f64,
}

impl StatePortions {
    pub fn new(signal: f64, decoy: f64, vacuum: f64) -> Result<Self> {
        let p = StatePortions { signal, decoy, vacuum };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("signal", self.signal), ("decoy", self.decoy), ("vacuum", self.vacuum)] {
            check_probability(name, v)?;
        }
        let sum = self.signal + self.decoy + self.vacuum;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("state portions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Rate and diagnostics of one key-rate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub rate: f64,
    pub feasible: bool,
    pub condition1_ok: bool,
    pub condition2_ok: bool,
    pub failed_condition: Option<Condition>,
    pub q1_lower: Option<f64>,
    pub e1_upper: Option<f64>,
    pub pn_bounds: Vec<PnBounds>,
    pub delta: f64,
    pub epsilon: f64,
}

impl KeyRateResult {
    pub fn infeasible(condition: Condition, delta: f64, epsilon: f64) -> Self {
        KeyRateResult {
            rate: 0.0,
            feasible: false,
            condition1_ok: condition != Condition::Condition1,
            condition2_ok: condition != Condition::Condition2,
            failed_condition: Some(condition),
            q1_lower: None,
            e1_upper: None,
            pn_bounds: Vec::new(),
            delta,
            epsilon,
        }
    }

    fn feasible(rate: f64, delta: f64, epsilon: f64) -> Self {
        KeyRateResult {
            rate,
            feasible: true,
            condition1_ok: true,
            condition2_ok: true,
            failed_condition: None,
            q1_lower: None,
            e1_upper: None,
            pn_bounds: Vec::new(),
            delta,
            epsilon,
        }
    }

    /// Result of a trusted-source baseline, which has no conditions of its own.
    pub fn baseline(rate: f64) -> Self {
        let mut r = KeyRateResult::feasible(rate, 0.0, 0.0);
        if rate <= 0.0 {
            r.feasible = false;
            r.failed_condition = Some(Condition::Prefactor);
        }
        r
    }

    /// Turns an infeasibility error into an infeasible result; other errors pass through.
    pub fn from_error(err: Error, delta: f64, epsilon: f64) -> Result<Self> {
        match err.condition() {
            Some(c) => Ok(KeyRateResult::infeasible(c, delta, epsilon)),
            None => Err(err),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.rate *= factor;
        self
    }
}

pub fn binary_entropy(p: f64) -> Result<f64> {
    check_probability("binary entropy argument", p)?;
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// Error-correction leakage `Q·f(E)·H2(E)` of the measured signal.
fn leakage(q_e: f64, e_e: f64, ec: &ErrorCorrection) -> Result<f64> {
    Ok(q_e * ec.inefficiency(e_e) * binary_entropy(e_e)?)
}

pub fn gllp_rate_untrusted(
    q_e: f64,
    e_e: f64,
    q_lower: f64,
    p0_lower: f64,
    p1_upper: f64,
    ec: &ErrorCorrection,
) -> Result<KeyRateResult> {
    for (name, v) in [("Q_e", q_e), ("E_e", e_e), ("Q_lower", q_lower), ("P0_lower", p0_lower), ("P1_upper", p1_upper)]
    {
        check_probability(name, v)?;
    }
    let pre = q_lower + p0_lower + p1_upper - 1.0;
    if !(pre > 0.0) {
        return Ok(KeyRateResult::infeasible(Condition::Prefactor, 0.0, 0.0));
    }
    let phase = q_e * e_e / pre;
    if phase > 0.5 {
        return Ok(KeyRateResult::infeasible(Condition::PhaseError, 0.0, 0.0));
    }
    let raw = 0.5 * (-leakage(q_e, e_e, ec)? + pre * (1.0 - binary_entropy(phase)?));
    let mut r = KeyRateResult::feasible(raw.max(0.0), 0.0, 0.0);
    r.q1_lower = Some(pre);
    r.e1_upper = Some(phase);
    Ok(r)
}

/// Everything the decoy single-photon bounds consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBoundInputs {
    pub measured: DecoyMeasurements,
    pub adjusted: AdjustedGains,
    pub delta: f64,
    pub epsilon: f64,
    pub window: UntaggedWindow,
    /// Internal transmittances the photon-number bounds are evaluated at.
    pub lambda_signal: f64,
    pub lambda_decoy: f64,
}

struct SinglePhoton {
    signal: LowOrderBounds,
    decoy: LowOrderBounds,
    den_bits: f64,
    signal_gain_upper: f64,
    decoy_gain_lower: f64,
    signal_error_upper: f64,
}

fn decoy_common(inp: &DecoyBoundInputs) -> std::result::Result<SinglePhoton, Condition> {
    let w = &inp.window;
    if !condition1(w, inp.lambda_signal) || !condition1(w, inp.lambda_decoy) {
        return Err(Condition::Condition1);
    }
    match condition2_check(inp.lambda_signal, inp.lambda_decoy, w) {
        Ok(true) => {}
        _ => return Err(Condition::Condition2),
    }
    let signal = low_order_bounds(w, inp.lambda_signal).map_err(|_| Condition::Condition1)?;
    let decoy = low_order_bounds(w, inp.lambda_decoy).map_err(|_| Condition::Condition1)?;
    let qs = gain_bounds(inp.adjusted.signal_gain_upper.min(1.0), inp.delta, inp.epsilon)
        .map_err(|e| e.condition().unwrap_or(Condition::UntaggedBits))?;
    let qd = gain_bounds(inp.adjusted.decoy_gain_lower.min(1.0), inp.delta, inp.epsilon)
        .map_err(|e| e.condition().unwrap_or(Condition::UntaggedBits))?;
    let (_, eqs_upper) = eq_bounds(inp.adjusted.signal_error_gain_upper.min(1.0), 1.0, inp.delta, inp.epsilon)
        .map_err(|e| e.condition().unwrap_or(Condition::UntaggedBits))?;
    Ok(SinglePhoton {
        signal,
        decoy,
        den_bits: 1.0 - inp.delta - inp.epsilon,
        signal_gain_upper: qs.upper,
        decoy_gain_lower: qd.lower,
        signal_error_upper: eqs_upper,
    })
}

/// Shared single-photon gain bound given the vacuum-gain term.
fn q1_lower(sp: &SinglePhoton, vacuum_gain: f64, correction: f64) -> Option<f64> {
    let (s, d) = (&sp.signal, &sp.decoy);
    let num = sp.decoy_gain_lower * s.p2.lower - sp.signal_gain_upper * d.p2.upper
        + (s.p0.lower * d.p2.upper - d.p0.upper * s.p2.lower) * vacuum_gain
        - correction * s.p2.lower;
    let den = d.p1.upper * s.p2.lower - s.p1.lower * d.p2.upper;
    if !(den > 0.0) {
        return None;
    }
    let q1 = s.p1.lower * num / den;
    (q1 > 0.0).then_some(q1)
}

fn decoy_rate(
    inp: &DecoyBoundInputs,
    sp: &SinglePhoton,
    q1: f64,
    e1: f64,
    ec: &ErrorCorrection,
) -> Result<KeyRateResult> {
    let pn = vec![sp.signal.p0, sp.signal.p1, sp.signal.p2, sp.decoy.p0, sp.decoy.p1, sp.decoy.p2];
    if !(e1 <= 0.5) {
        let mut r = KeyRateResult::infeasible(Condition::PhaseError, inp.delta, inp.epsilon);
        r.q1_lower = Some(q1);
        r.e1_upper = Some(e1);
        r.pn_bounds = pn;
        return Ok(r);
    }
    let e1 = e1.max(0.0);
    let s = &inp.measured.signal;
    let raw = 0.5 * (-leakage(s.gain, s.qber, ec)? + sp.den_bits * q1 * (1.0 - binary_entropy(e1)?));
    let mut r = KeyRateResult::feasible(raw.max(0.0), inp.delta, inp.epsilon);
    r.q1_lower = Some(q1);
    r.e1_upper = Some(e1);
    r.pn_bounds = pn;
    Ok(r)
}

fn infeasible_for(inp: &DecoyBoundInputs, c: Condition) -> KeyRateResult {
    KeyRateResult::infeasible(c, inp.delta, inp.epsilon)
}

pub fn wv_rate_untrusted(inp: &DecoyBoundInputs, ec: &ErrorCorrection) -> Result<KeyRateResult> {
    let sp = match decoy_common(inp) {
        Ok(sp) => sp,
        Err(c) => return Ok(infeasible_for(inp, c)),
    };
    let qv = match gain_bounds(inp.adjusted.vacuum_gain_upper.min(1.0), inp.delta, inp.epsilon) {
        Ok(g) => g.upper,
        Err(e) => return KeyRateResult::from_error(e, inp.delta, inp.epsilon),
    };
    let (eqv_lower, _) = match eq_bounds(inp.adjusted.vacuum_error_gain_lower.min(1.0), 1.0, inp.delta, inp.epsilon) {
        Ok(b) => b,
        Err(e) => return KeyRateResult::from_error(e, inp.delta, inp.epsilon),
    };
    let corr = decoy_correction(&inp.window, inp.lambda_decoy);
    let Some(q1) = q1_lower(&sp, qv, corr) else {
        return Ok(infeasible_for(inp, Condition::SinglePhotonGain));
    };
    let e1 = (sp.signal_error_upper - sp.signal.p0.lower * eqv_lower) / q1;
    decoy_rate(inp, &sp, q1, e1, ec)
}

/// Vacuum QBER assumed by the one-decoy bound in the asymptotic case.
pub const ONE_DECOY_VACUUM_QBER: f64 = 0.5;

pub fn onedecoy_rate_untrusted(inp: &DecoyBoundInputs, ec: &ErrorCorrection) -> Result<KeyRateResult> {
    let sp = match decoy_common(inp) {
        Ok(sp) => sp,
        Err(c) => return Ok(infeasible_for(inp, c)),
    };
    let qv = sp.signal_error_upper / (sp.signal.p0.lower * ONE_DECOY_VACUUM_QBER);
    let corr = decoy_correction(&inp.window, inp.lambda_decoy);
    let Some(q1) = q1_lower(&sp, qv, corr) else {
        return Ok(infeasible_for(inp, Condition::SinglePhotonGain));
    };
    let e1 = sp.signal_error_upper / q1;
    decoy_rate(inp, &sp, q1, e1, ec)
}

/// Standard trusted-source rate with Poissonian emission of mean `mu_signal` (and `mu_decoy`
/// for one-decoy). Weak+vacuum is taken in its vanishing-decoy limit, where its estimates
/// of the single-photon yield and error are exact.
pub fn trusted_baseline_rate(
    protocol: Protocol,
    channel: &ChannelDetector,
    mu_signal: f64,
    mu_decoy: f64,
    ec: &ErrorCorrection,
) -> Result<f64> {
    if !(mu_signal >= 0.0) {
        return Err(Error::domain(format!("signal mean {mu_signal} must be >= 0")));
    }
    if mu_signal == 0.0 {
        return Ok(0.0);
    }
    let (q, e) = simulate_gain_qber(channel, mu_signal)?;
    let leak = leakage(q, e, ec)?;
    let (q1, e1) = match protocol {
        Protocol::Gllp => {
            let multi = 1.0 - (-mu_signal).exp() * (1.0 + mu_signal);
            let q1 = q - multi;
            if q1 <= 0.0 {
                return Ok(0.0);
            }
            (q1, q * e / q1)
        }
        Protocol::WeakVacuum => {
            let eta = channel.system_transmittance();
            let y1 = channel.y0 + eta;
            let e1 = (channel.e0 * channel.y0 + channel.e_det * eta) / y1;
            (y1 * mu_signal * (-mu_signal).exp(), e1)
        }
        Protocol::OneDecoy => {
            let (mu, nu) = (mu_signal, mu_decoy);
            if !(nu > 0.0 && nu < mu) {
                return Err(Error::domain(format!("decoy mean {nu} must lie in (0, {mu})")));
            }
            let (qd, _) = simulate_gain_qber(channel, nu)?;
            let y0_upper = e * q * mu.exp() / channel.e0;
            let y1 = mu / (mu * nu - nu * nu)
                * (qd * nu.exp() - q * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0_upper);
            if y1 <= 0.0 {
                return Ok(0.0);
            }
            let q1 = y1 * mu * (-mu).exp();
            (q1, e * q / q1)
        }
    };
    if !(e1 <= 0.5) {
        return Ok(0.0);
    }
    Ok((0.5 * (-leak + q1 * (1.0 - binary_entropy(e1.max(0.0))?))).max(0.0))
}

/// Weak+vacuum trusted lower bound on the single-photon yield from measured gains.
pub fn trusted_wv_single_photon_yield(channel: &ChannelDetector, mu: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < mu) {
        return Err(Error::domain(format!("decoy mean {nu} must lie in (0, {mu})")));
    }
    let (q, _) = simulate_gain_qber(channel, mu)?;
    let (qd, _) = simulate_gain_qber(channel, nu)?;
    Ok(mu / (mu * nu - nu * nu)
        * (qd * nu.exp() - q * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * channel.y0))
}

/// Rate per source pulse: the active scheme encodes only the coding half of the pulses.
pub fn normalize_rate(raw_rate: f64, scheme: Scheme, normalization: Normalization) -> f64 {
    match (normalization, scheme) {
        (Normalization::PerSourcePulse, Scheme::Active) => raw_rate * 0.5,
        _ => raw_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.499916).abs() < 5e-7);
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn cascade_table_interpolates() {
        let ec = ErrorCorrection::CascadeTable;
        assert_eq!(ec.inefficiency(0.033), 1.16);
        assert!((ec.inefficiency(0.075) - 1.19).abs() < 1e-12);
        assert_eq!(ec.inefficiency(0.3), 1.35);
    }

    #[test]
    fn gllp_prefactor_clamp() {
        let ec = ErrorCorrection::Constant { f: 1.22 };
        let r = gllp_rate_untrusted(0.01, 0.03, 0.0, 0.2, 0.3, &ec).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.failed_condition, Some(Condition::Prefactor));
    }

    #[test]
    fn gllp_trusted_limit_matches_baseline() {
        let ch = ChannelDetector::gys(20.0);
        let ec = ErrorCorrection::CascadeTable;
        let mu: f64 = 0.01;
        let (q, e) = simulate_gain_qber(&ch, mu).unwrap();
        let r = gllp_rate_untrusted(q, e, q, (-mu).exp(), mu * (-mu).exp(), &ec).unwrap();
        let t = trusted_baseline_rate(Protocol::Gllp, &ch, mu, 0.0, &ec).unwrap();
        assert!(t > 0.0 && (r.rate - t).abs() / t < 1e-9, "{} vs {t}", r.rate);
    }

    #[test]
    fn vanishing_decoy_recovers_exact_yield() {
        let ch = ChannelDetector::gys(50.0);
        let exact = ch.y0 + ch.system_transmittance();
        let y1 = trusted_wv_single_photon_yield(&ch, 0.5, 1e-7).unwrap();
        assert!((y1 - exact).abs() < 1e-9, "{y1} vs {exact}");
        assert!(y1 <= exact);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_rate(1.0, Scheme::Passive, Normalization::PerSourcePulse), 1.0);
        assert_eq!(normalize_rate(1.0, Scheme::Active, Normalization::PerSourcePulse), 0.5);
        assert_eq!(normalize_rate(1.0, Scheme::Active, Normalization::PerAlicePulse), 1.0);
    }

    #[test]
    fn zero_signal_trusted_rate() {
        let ch = ChannelDetector::gys(10.0);
        for p in [Protocol::Gllp, Protocol::WeakVacuum, Protocol::OneDecoy] {
            assert_eq!(trusted_baseline_rate(p, &ch, 0.0, 0.0, &ErrorCorrection::CascadeTable).unwrap(), 0.0);
        }
    }
}
