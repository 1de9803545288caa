//! Distance sweeps and CSV emission.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use pqkd_core::model::Analysis;
use pqkd_core::optimizer::{dominant_failure, optimize_keyrate};
use pqkd_core::{Condition, Result};

use crate::scenario::ResolvedScenario;

pub const COLUMNS: [&str; 10] = [
    "distance_km",
    "scheme",
    "rate_per_source_pulse",
    "ratio_vs_trusted",
    "Delta",
    "epsilon",
    "delta_opt",
    "lambda_opt",
    "feasible",
    "failed_condition",
];

/// One scheme at one distance. Optional fields are empty when no parameter point
/// yields key.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub distance_km: f64,
    pub analysis: Analysis,
    pub rate: f64,
    pub ratio_vs_trusted: f64,
    pub tagged_fraction: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta_opt: Option<f64>,
    pub lambda_opt: Option<f64>,
    /// Optimal signal intensity leaving Alice; not written to the CSV.
    pub mu_signal: Option<f64>,
    pub feasible: bool,
    pub failed_condition: Option<Condition>,
}

fn optimum_row(sc: &ResolvedScenario, analysis: Analysis, d: f64) -> Result<Row> {
    let grid = sc.grid(analysis);
    let opt = optimize_keyrate(&sc.model, analysis, d, &grid)?;
    let untrusted = analysis != Analysis::Trusted;
    let mut row = Row {
        distance_km: d,
        analysis,
        rate: opt.rate,
        ratio_vs_trusted: 0.0,
        tagged_fraction: None,
        epsilon: None,
        delta_opt: None,
        lambda_opt: None,
        mu_signal: None,
        feasible: false,
        failed_condition: None,
    };
    match (&opt.params, &opt.evaluation) {
        (Some(p), Some(e)) => {
            row.feasible = e.result.feasible;
            row.failed_condition = e.result.failed_condition;
            row.lambda_opt = Some(e.lambda_signal);
            row.mu_signal = Some(p.mu_signal);
            if untrusted {
                row.tagged_fraction = Some(e.result.delta);
                row.epsilon = Some(e.result.epsilon);
                row.delta_opt = Some(p.delta);
            }
        }
        _ => {
            row.rate = 0.0;
            row.failed_condition = dominant_failure(&sc.model, analysis, d, &grid)?;
        }
    }
    Ok(row)
}

fn rows_at(sc: &ResolvedScenario, d: f64) -> Result<Vec<Row>> {
    let mut rows = Analysis::ALL.iter().map(|a| optimum_row(sc, *a, d)).collect::<Result<Vec<_>>>()?;
    let trusted = rows.iter().find(|r| r.analysis == Analysis::Trusted).map_or(0.0, |r| r.rate);
    for r in &mut rows {
        r.ratio_vs_trusted = if trusted > 0.0 { r.rate / trusted } else { 0.0 };
    }
    Ok(rows)
}

/// Rows in sweep order, schemes in the order passive, active, trusted.
pub fn compute_rows(sc: &ResolvedScenario) -> Result<Vec<Row>> {
    let per_distance = sc.distances_km.par_iter().map(|d| rows_at(sc, *d)).collect::<Result<Vec<_>>>()?;
    Ok(per_distance.into_iter().flatten().collect())
}

/// Nine significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn render_csv(sc: &ResolvedScenario, seed: u64, rows: &[Row]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# scenario = {}\n", sc.name));
    out.push_str(&format!("# seed = {seed}\n"));
    out.push_str(&format!("# tool_version = {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
    for (k, v) in &sc.derived {
        out.push_str(&format!("# derived {k} = {}\n", format_float(*v)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            format_float(r.distance_km),
            r.analysis.name().to_string(),
            format_float(r.rate),
            format_float(r.ratio_vs_trusted),
            opt_float(r.tagged_fraction),
            opt_float(r.epsilon),
            opt_float(r.delta_opt),
            opt_float(r.lambda_opt),
            r.feasible.to_string(),
            r.failed_condition.map(|c| c.name().to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    let body = w.into_inner().expect("in-memory flush");
    out.push_str(std::str::from_utf8(&body).expect("csv is utf-8"));
    out
}

/// Writes via a sibling temporary file so readers never see a partial CSV.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_nine_significant_digits() {
        assert_eq!(format_float(0.981234567891), "9.81234568e-1");
        assert_eq!(format_float(20.0), "2.00000000e1");
        assert_eq!(format_float(0.0), "0.00000000e0");
    }

    #[test]
    fn atomic_write_leaves_only_the_target() {
        let dir = std::env::temp_dir().join(format!("pqkd-run-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let target = dir.join("out.csv");
        write_atomic(&target, "a,b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&target).unwrap(), "a,b\n");
        let entries: Vec<_> = std::fs::read_dir(&dir).unwrap().collect();
        assert_eq!(entries.len(), 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
