//! Scenario files: a flat TOML layout whose keys carry their units, and the
//! checks that turn one into a [`SystemModel`] plus a distance sweep.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pqkd_core::experiment::{
    infer_monitor_noise, source_photons_from_monitor, ChannelDetector, Placement, SourceConfig,
};
use pqkd_core::keyrate::{ErrorCorrection, Normalization, Protocol, StatePortions};
use pqkd_core::model::{Analysis, EpsilonMode, FiniteSize, Interval, MonitorConfig, SystemModel};
use pqkd_core::optimizer::{default_grid, SearchGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub source: SourceSection,
    pub apparatus: ApparatusSection,
    pub monitor: MonitorSection,
    pub channel: ChannelSection,
    pub protocol: ProtocolSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite: Option<FiniteSection>,
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub placement: Placement,
    /// Mean photons per pulse where the source sits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_photons: Option<f64>,
    /// Derive the source mean (and optionally the monitor noise) from a monitor reading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<SourceCalibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceCalibration {
    /// Mean measured by Alice's monitor at `distance_km`.
    pub monitor_mean_photons: f64,
    /// Spread of the measured distribution; sets the monitor noise when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor_std_photons: Option<f64>,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApparatusSection {
    /// Beam-splitter transmittance toward the encoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Calibrated range of `q`, used instead of `q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    #[serde(default)]
    pub lambda_relative_uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    pub eta_im: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_im_photons: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varsigma_photons: Option<f64>,
    /// Conservative interval as a multiple of the monitor noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varsigma_noise_multiple: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub alpha_db_per_km: f64,
    pub eta_bob: f64,
    pub y0: f64,
    pub e_det: f64,
    pub e0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: Protocol,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    /// Fixed signal/decoy/vacuum portions; optimized when absent with finite data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_portions: Option<[f64; 3]>,
    pub error_correction: ErrorCorrection,
}

fn default_normalization() -> Normalization {
    Normalization::PerSourcePulse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSection {
    pub pulses: f64,
    /// `1 − τ`, the allowed failure probability of the sampling estimate.
    pub failure_probability: f64,
    /// Standard deviations of fluctuation applied to measured gains.
    pub fluctuation_sd: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_epsilon_mode")]
    pub epsilon_mode: EpsilonMode,
}

fn default_gamma() -> f64 {
    0.5
}

fn default_epsilon_mode() -> EpsilonMode {
    EpsilonMode::Total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Points on every free axis of the default grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement_rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
}

/// A failure tied to the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<FieldError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub name: String,
    pub model: SystemModel,
    pub distances_km: Vec<f64>,
    /// Quantities computed from calibration data, reported in the CSV header.
    pub derived: Vec<(String, f64)>,
    pub grid_override: Option<GridSection>,
    pub csv_path: Option<String>,
}

impl ResolvedScenario {
    pub fn grid(&self, analysis: Analysis) -> SearchGrid {
        let mut g = default_grid(&self.model, analysis);
        if let Some(o) = &self.grid_override {
            if let Some(n) = o.points_per_axis {
                for a in g.axes.iter_mut().filter(|a| a.points > 1) {
                    a.points = n;
                }
            }
            if let Some(r) = o.refinement_rounds {
                g.refinement_rounds = r;
            }
        }
        g
    }
}

pub fn parse(text: &str) -> Result<Scenario, ValidationErrors> {
    toml::from_str(text).map_err(|e| {
        ValidationErrors(vec![FieldError { field: "toml".into(), message: e.message().trim().to_string() }])
    })
}

pub fn to_toml(s: &Scenario) -> String {
    toml::to_string(s).expect("scenario serializes")
}

pub fn load(path: &Path) -> Result<Scenario, ValidationErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ValidationErrors(vec![FieldError { field: path.display().to_string(), message: e.to_string() }])
    })?;
    parse(&text)
}

/// Sweep distances `start, start+step, …` up to `stop`; empty when `stop < start`.
pub fn sweep_distances(s: &SweepSection) -> Vec<f64> {
    if s.stop_km < s.start_km {
        return Vec::new();
    }
    let n = ((s.stop_km - s.start_km) / s.step_km + 1e-9).floor() as usize + 1;
    (0..n).map(|i| s.start_km + i as f64 * s.step_km).collect()
}

struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(FieldError { field: field.into(), message: message.into() });
    }

    fn check(&mut self, field: &str, ok: bool, message: impl Into<String>) {
        if !ok {
            self.push(field, message);
        }
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

pub fn resolve(s: &Scenario) -> Result<ResolvedScenario, ValidationErrors> {
    let mut e = Errors(Vec::new());
    e.check(
        "name",
        !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'),
        "must be non-empty lowercase letters, digits and underscores",
    );

    let ch = &s.channel;
    e.check("channel.alpha_db_per_km", ch.alpha_db_per_km.is_finite() && ch.alpha_db_per_km > 0.0, "must be positive");
    for (k, v) in
        [("channel.eta_bob", ch.eta_bob), ("channel.y0", ch.y0), ("channel.e_det", ch.e_det), ("channel.e0", ch.e0)]
    {
        e.check(k, unit(v), "must lie in [0, 1]");
    }
    let channel = ChannelDetector {
        alpha_db_per_km: ch.alpha_db_per_km,
        distance_km: 0.0,
        eta_bob: ch.eta_bob,
        y0: ch.y0,
        e_det: ch.e_det,
        e0: ch.e0,
    };

    let q = match (s.apparatus.q, s.apparatus.q_min, s.apparatus.q_max) {
        (Some(q), None, None) => Interval::exact(q),
        (None, Some(lo), Some(hi)) => Interval { lo, hi },
        _ => {
            e.push("apparatus", "give either q or both q_min and q_max");
            Interval::exact(0.5)
        }
    };
    for (k, v) in [("apparatus.q", q.lo), ("apparatus.q", q.hi)] {
        if !(v > 0.0 && v < 1.0) {
            e.push(k, format!("{v} must lie in (0, 1)"));
            break;
        }
    }
    e.check("apparatus.q_min", q.lo <= q.hi, "must not exceed q_max");
    e.check(
        "apparatus.lambda_relative_uncertainty",
        (0.0..1.0).contains(&s.apparatus.lambda_relative_uncertainty),
        "must lie in [0, 1)",
    );

    let mut derived = Vec::new();
    let mut derived_sigma = None;
    let mean_photons = match (&s.source.mean_photons, &s.source.calibration) {
        (Some(m), None) => *m,
        (None, Some(c)) => {
            if let Some(std) = c.monitor_std_photons {
                match infer_monitor_noise(std, c.monitor_mean_photons) {
                    Ok(sig) => {
                        derived.push(("sigma_im_photons".to_string(), sig));
                        derived_sigma = Some(sig);
                    }
                    Err(err) => e.push("source.calibration.monitor_std_photons", err.to_string()),
                }
            }
            let mb = match s.source.placement {
                Placement::AtBob => {
                    let at = channel.at_distance(c.distance_km);
                    source_photons_from_monitor(c.monitor_mean_photons, &at, q.midpoint())
                }
                Placement::AtAlice => Ok(c.monitor_mean_photons),
            };
            match mb {
                Ok(v) => {
                    derived.push(("source_mean_photons".to_string(), v));
                    v
                }
                Err(err) => {
                    e.push("source.calibration", err.to_string());
                    1.0
                }
            }
        }
        _ => {
            e.push("source", "give exactly one of mean_photons or [source.calibration]");
            1.0
        }
    };
    e.check("source.mean_photons", mean_photons.is_finite() && mean_photons >= 1.0, "must be at least 1 photon");

    let m = &s.monitor;
    e.check("monitor.eta_im", m.eta_im > 0.0 && m.eta_im <= 1.0, "must lie in (0, 1]");
    let sigma = match (m.sigma_im_photons, derived_sigma) {
        (Some(v), None) => v,
        (None, Some(v)) => v,
        (None, None) => 0.0,
        (Some(_), Some(_)) => {
            e.push("monitor.sigma_im_photons", "conflicts with source.calibration.monitor_std_photons");
            0.0
        }
    };
    e.check("monitor.sigma_im_photons", finite_nonneg(sigma), "must be >= 0");
    let varsigma = match (m.varsigma_photons, m.varsigma_noise_multiple) {
        (Some(v), None) => v,
        (None, Some(k)) => {
            let v = k * sigma;
            if m.sigma_im_photons.is_none() && derived_sigma.is_some() {
                derived.push(("varsigma_photons".to_string(), v));
            }
            v
        }
        (None, None) => 0.0,
        (Some(_), Some(_)) => {
            e.push("monitor", "give at most one of varsigma_photons and varsigma_noise_multiple");
            0.0
        }
    };
    e.check("monitor.varsigma_photons", finite_nonneg(varsigma), "must be >= 0");

    let ec = &s.protocol.error_correction;
    if let Err(err) = ec.validate() {
        e.push("protocol.error_correction", err.to_string());
    }
    let portions = match s.protocol.state_portions {
        Some([sg, d, v]) => match StatePortions::new(sg, d, v) {
            Ok(p) => Some(p),
            Err(err) => {
                e.push("protocol.state_portions", err.to_string());
                None
            }
        },
        None => None,
    };

    let (pulses, finite) = match &s.finite {
        Some(f) => {
            e.check("finite.pulses", f.pulses.is_finite() && f.pulses >= 1.0, "must be at least 1");
            e.check(
                "finite.failure_probability",
                f.failure_probability > 0.0 && f.failure_probability < 1.0,
                "must lie in (0, 1)",
            );
            e.check("finite.fluctuation_sd", finite_nonneg(f.fluctuation_sd), "must be >= 0");
            e.check("finite.gamma", f.gamma > 0.0 && f.gamma < 1.0, "must lie in (0, 1)");
            (
                Some(f.pulses),
                Some(FiniteSize {
                    tau: 1.0 - f.failure_probability,
                    fluctuation_sd: f.fluctuation_sd,
                    gamma: f.gamma,
                    epsilon_mode: f.epsilon_mode,
                }),
            )
        }
        None => (None, None),
    };

    let sw = &s.sweep;
    e.check("sweep.start_km", sw.start_km.is_finite() && sw.start_km >= 0.0, "must be >= 0");
    e.check("sweep.stop_km", sw.stop_km.is_finite(), "must be finite");
    e.check("sweep.step_km", sw.step_km.is_finite() && sw.step_km > 0.0, "must be positive");
    if let Some(g) = &s.grid {
        e.check("grid.points_per_axis", g.points_per_axis.is_none_or(|n| n >= 2), "must be at least 2");
    }

    if !e.0.is_empty() {
        return Err(ValidationErrors(e.0));
    }
    let model = SystemModel {
        source: SourceConfig { mean_photons, placement: s.source.placement, pulses },
        q,
        lambda_relative_uncertainty: s.apparatus.lambda_relative_uncertainty,
        monitor: MonitorConfig { eta_im: m.eta_im, sigma_im: sigma, varsigma },
        channel,
        protocol: s.protocol.kind,
        error_correction: *ec,
        normalization: s.protocol.normalization,
        finite,
        portions,
    };
    if let Err(err) = model.validate() {
        return Err(ValidationErrors(vec![FieldError { field: "model".into(), message: err.to_string() }]));
    }
    Ok(ResolvedScenario {
        name: s.name.clone(),
        model,
        distances_km: sweep_distances(sw),
        derived,
        grid_override: s.grid.clone(),
        csv_path: s.output.as_ref().and_then(|o| o.csv_path.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[source]
placement = "at_alice"
mean_photons = 1e6
[apparatus]
q = 0.5
[monitor]
eta_im = 1.0
[channel]
alpha_db_per_km = 0.21
eta_bob = 0.045
y0 = 1.7e-6
e_det = 0.033
e0 = 0.5
[protocol]
kind = "gllp"
[protocol.error_correction]
model = "cascade_table"
[sweep]
start_km = 0
stop_km = 10
step_km = 5
"#;

    #[test]
    fn minimal_scenario_resolves() {
        let s = parse(MINIMAL).unwrap();
        let r = resolve(&s).unwrap();
        assert_eq!(r.distances_km, vec![0.0, 5.0, 10.0]);
        assert_eq!(r.model.protocol, Protocol::Gllp);
        assert_eq!(parse(&to_toml(&s)).unwrap(), s);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("eta_bob", "eta_bobb");
        let err = parse(&bad).unwrap_err();
        assert!(err.to_string().contains("eta_bobb"), "{err}");
    }

    #[test]
    fn field_errors_name_the_key() {
        let bad = MINIMAL.replace("q = 0.5", "q = 1.5").replace("step_km = 5", "step_km = 0");
        let err = resolve(&parse(&bad).unwrap()).unwrap_err();
        let fields: Vec<&str> = err.0.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"apparatus.q"));
        assert!(fields.contains(&"sweep.step_km"));
    }

    #[test]
    fn reversed_sweep_is_empty() {
        let s = SweepSection { start_km: 10.0, stop_km: 0.0, step_km: 1.0 };
        assert!(sweep_distances(&s).is_empty());
        let s = SweepSection { start_km: 0.0, stop_km: 0.3, step_km: 0.1 };
        assert_eq!(sweep_distances(&s).len(), 4);
    }
}
