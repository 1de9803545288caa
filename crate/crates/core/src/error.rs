use std::fmt;

use serde::{Deserialize, Serialize};

/// Feasibility requirement that a key-rate evaluation can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `(1+δ)Mλ < 1`, needed by the output photon-number bounds.
    Condition1,
    /// Signal/decoy transmittance ratio requirement of the decoy single-photon bound.
    Condition2,
    /// `λ' ≤ 1` for the hybrid-equivalent transmittance.
    HybridConstraint,
    /// `Δ + ε < 1`; otherwise no untagged bit is guaranteed.
    UntaggedBits,
    /// GLLP prefactor `Q̲ + P̲0 + P̄1 − 1` must be positive.
    Prefactor,
    /// Single-photon gain lower bound must be positive.
    SinglePhotonGain,
    /// Estimated phase error must not exceed 1/2.
    PhaseError,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Condition1 => "condition1",
            Condition::Condition2 => "condition2",
            Condition::HybridConstraint => "hybrid_constraint",
            Condition::UntaggedBits => "untagged_bits",
            Condition::Prefactor => "prefactor",
            Condition::SinglePhotonGain => "single_photon_gain",
            Condition::PhaseError => "phase_error",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{condition} violated: {detail}")]
    Infeasible { condition: Condition, detail: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn infeasible(condition: Condition, detail: impl Into<String>) -> Self {
        Error::Infeasible { condition, detail: detail.into() }
    }

    /// The violated condition, when this is an infeasibility error.
    pub fn condition(&self) -> Option<Condition> {
        match self {
            Error::Infeasible { condition, .. } => Some(*condition),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {p} is outside [0, 1]")))
    }
}

pub(crate) fn check_open_unit(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {p} is outside (0, 1)")))
    }
}
