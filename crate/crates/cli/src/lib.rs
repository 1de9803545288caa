//! Command-line front end: scenario files, distance sweeps to CSV, and the
//! self-verification suite.

pub mod run;
pub mod scenario;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use pqkd_core::montecarlo::FaultInjection;

use crate::scenario::{Scenario, ValidationErrors};
use crate::verify::Level;

/// Scenarios shipped with the tool, one per reproduced figure.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig4_gllp_gys", include_str!("../scenarios/fig4_gllp_gys.toml")),
    ("fig5_wv_gys", include_str!("../scenarios/fig5_wv_gys.toml")),
    ("fig6_onedecoy_gys", include_str!("../scenarios/fig6_onedecoy_gys.toml")),
    ("fig6b_wv_biased_splitter", include_str!("../scenarios/fig6b_wv_biased_splitter.toml")),
    ("fig7_wv_pnp", include_str!("../scenarios/fig7_wv_pnp.toml")),
    ("fig8_wv_pnp_bright", include_str!("../scenarios/fig8_wv_pnp_bright.toml")),
    ("fig9_wv_pnp_imperfect_monitor", include_str!("../scenarios/fig9_wv_pnp_imperfect_monitor.toml")),
    ("fig10_wv_pnp_very_bright", include_str!("../scenarios/fig10_wv_pnp_very_bright.toml")),
    ("fig11_wv_unidirectional", include_str!("../scenarios/fig11_wv_unidirectional.toml")),
    ("fig12_wv_finite", include_str!("../scenarios/fig12_wv_finite.toml")),
    ("fig13_pku", include_str!("../scenarios/fig13_pku.toml")),
    ("fig14_wv_finite_very_bright", include_str!("../scenarios/fig14_wv_finite_very_bright.toml")),
    ("fig15_toronto", include_str!("../scenarios/fig15_toronto.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid scenario:\n{m}"),
            CliError::Runtime(m) => write!(f, "computation failed: {m}"),
            CliError::Verification(m) => write!(f, "verification failed:\n{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ValidationErrors> for CliError {
    fn from(e: ValidationErrors) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// A path on disk, or else the name of a bundled scenario.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, CliError> {
    let path = Path::new(name_or_path);
    if path.exists() {
        return Ok(scenario::load(path)?);
    }
    match bundled(name_or_path) {
        Some(text) => Ok(scenario::parse(text)?),
        None => Err(CliError::Validation(format!("{name_or_path}: no such file or bundled scenario"))),
    }
}

/// Runs a sweep and returns the CSV text, plus the file it was written to when `out`
/// or the scenario's own output path is set.
pub fn run_command(name_or_path: &str, out: Option<&Path>, seed: u64) -> Result<(String, Option<PathBuf>), CliError> {
    let sc = scenario::resolve(&load_scenario(name_or_path)?)?;
    let rows = run::compute_rows(&sc).map_err(|e| CliError::Runtime(e.to_string()))?;
    let csv = run::render_csv(&sc, seed, &rows);
    let target: Option<PathBuf> = out.map(Path::to_path_buf).or_else(|| sc.csv_path.as_ref().map(PathBuf::from));
    if let Some(path) = &target {
        run::write_atomic(path, &csv).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok((csv, target))
}

/// Runs the suite; a failing check becomes [`CliError::Verification`] carrying the report.
pub fn verify_command(level: Level, seed: u64, faults: &FaultInjection) -> Result<String, CliError> {
    let report = verify::run_suite(level, seed, faults).map_err(|e| CliError::Runtime(e.to_string()))?;
    let text = report.render();
    if report.passed() {
        Ok(text)
    } else {
        Err(CliError::Verification(text))
    }
}

pub fn list_scenarios() -> String {
    let mut out = String::new();
    for (name, text) in BUNDLED {
        let description = scenario::parse(text).map(|s| s.description).unwrap_or_default();
        out.push_str(&format!("{name}\t{description}\n"));
    }
    out
}
