//! Bounds on untagged bits: output photon-number probabilities, gains, error-weighted gains, and
//! the two feasibility conditions that make the decoy single-photon bound valid.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_open_unit, check_probability, Condition, Error, Result};
use crate::estimator::UntaggedWindow;
use crate::photonstats::{exp_flushed, ln_binomial_thinning_pmf};

/// Bounds on the probability that an untagged pulse leaves Alice with `n` photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnBounds {
    pub n: u64,
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on the gain of untagged bits given the measured overall gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub measured_q_e: f64,
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
    pub epsilon: f64,
}

/// `(1+δ)Mλ < 1` on the widened upper edge.
pub fn condition1(window: &UntaggedWindow, lambda: f64) -> bool {
    window.hi_edge() * lambda < 1.0
}

pub fn pn_bounds(window: &UntaggedWindow, lambda: f64, n: u64) -> Result<PnBounds> {
    window.validate()?;
    check_open_unit("lambda", lambda)?;
    if !condition1(window, lambda) {
        return Err(Error::infeasible(
            Condition::Condition1,
            format!("(1+δ)Mλ = {} is not below 1", window.hi_edge() * lambda),
        ));
    }
    let lo = window.lo_edge();
    let hi = window.hi_edge();
    let (lower, upper) = if n == 0 {
        let l = (-lambda).ln_1p();
        (exp_flushed(hi * l), exp_flushed(lo * l))
    } else {
        let at = |edge: f64| -> Result<f64> {
            if (n as f64) > edge {
                Ok(0.0)
            } else {
                Ok(exp_flushed(ln_binomial_thinning_pmf(edge as u64, lambda, n)?))
            }
        };
        (at(lo)?, at(hi)?)
    };
    Ok(PnBounds { n, lower, upper })
}

/// `P0`, `P1`, `P2` bounds at one internal transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowOrderBounds {
    pub p0: PnBounds,
    pub p1: PnBounds,
    pub p2: PnBounds,
}

pub fn low_order_bounds(window: &UntaggedWindow, lambda: f64) -> Result<LowOrderBounds> {
    Ok(LowOrderBounds {
        p0: pn_bounds(window, lambda, 0)?,
        p1: pn_bounds(window, lambda, 1)?,
        p2: pn_bounds(window, lambda, 2)?,
    })
}

fn untagged_scale(delta: f64, epsilon: f64) -> Result<f64> {
    check_probability("Delta", delta)?;
    if !(epsilon >= 0.0) {
        return Err(Error::domain(format!("epsilon = {epsilon} must be >= 0")));
    }
    let den = 1.0 - delta - epsilon;
    if !(den > 0.0) {
        return Err(Error::infeasible(
            Condition::UntaggedBits,
            format!("Δ + ε = {} leaves no untagged bits", delta + epsilon),
        ));
    }
    Ok(den)
}

pub fn gain_bounds(q_e: f64, delta: f64, epsilon: f64) -> Result<GainBounds> {
    check_probability("Q_e", q_e)?;
    let den = untagged_scale(delta, epsilon)?;
    Ok(GainBounds {
        measured_q_e: q_e,
        lower: ((q_e - delta - epsilon) / den).max(0.0),
        upper: q_e / den,
        delta,
        epsilon,
    })
}

/// Bounds `(lower, upper)` on the error-weighted gain `E·Q` of untagged bits.
pub fn eq_bounds(q_e: f64, e_e: f64, delta: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_probability("Q_e", q_e)?;
    check_probability("E_e", e_e)?;
    let den = untagged_scale(delta, epsilon)?;
    let eq = q_e * e_e;
    Ok((((eq - delta - epsilon) / den).max(0.0), eq / den))
}

/// Natural log of the right-hand side of the signal/decoy ratio requirement.
pub fn condition2_log_rhs(window: &UntaggedWindow) -> Result<f64> {
    window.validate()?;
    let m = window.center;
    let d = window.delta;
    let a = (1.0 + d) * m - 2.0;
    let b = (1.0 - d) * m - 2.0;
    let c = 2.0 * d * m;
    if !(d > 0.0) {
        return Err(Error::domain("condition 2 needs a window of positive width"));
    }
    if !(b > 0.0) {
        return Err(Error::domain(format!("window lower edge {} leaves (1−δ)M − 2 <= 0", (1.0 - d) * m)));
    }
    let ln_ab = (2.0 * d * m / b).ln_1p();
    Ok(ln_ab + (c / b) * (a / c).ln() + (ln_ab + 2.0 - c.ln()) / (2.0 * b))
}

/// Whether `λ_S/λ_D` clears the requirement of the decoy single-photon bound.
pub fn condition2_check(lambda_signal: f64, lambda_decoy: f64, window: &UntaggedWindow) -> Result<bool> {
    check_open_unit("lambda_signal", lambda_signal)?;
    check_open_unit("lambda_decoy", lambda_decoy)?;
    if lambda_signal <= lambda_decoy {
        return Err(Error::domain(format!(
            "decoy transmittance {lambda_decoy} must be below signal transmittance {lambda_signal}"
        )));
    }
    Ok((lambda_signal / lambda_decoy).ln() > condition2_log_rhs(window)?)
}

/// `2δM (1−λ_D)^(2δM−1) / [((1−δ)M+1)!]`, subtracted in the single-photon gain bound.
pub fn decoy_correction(window: &UntaggedWindow, lambda_decoy: f64) -> f64 {
    let m = window.center;
    let d = window.delta;
    let width = 2.0 * d * m;
    exp_flushed(width.ln() + (width - 1.0) * (-lambda_decoy).ln_1p() - ln_gamma((1.0 - d) * m + 2.0))
}
