use std::path::Path;
use std::process::{Command, Output};

use pqkd_cli::scenario::{parse, resolve, to_toml};
use pqkd_cli::{bundled, BUNDLED};

fn pqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqkd")).args(args).output().expect("binary runs")
}

fn write_variant(dir: &Path, file: &str, edit: impl Fn(&str) -> String) -> String {
    let text = edit(bundled("fig4_gllp_gys").unwrap());
    let path = dir.join(file);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn every_bundled_scenario_round_trips_and_validates() {
    assert_eq!(BUNDLED.len(), 13);
    for (name, text) in BUNDLED {
        let s = parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&s.name, name);
        let again = parse(&to_toml(&s)).unwrap();
        assert_eq!(again, s, "{name} changed through serialization");
        resolve(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn list_names_every_bundled_scenario() {
    let out = pqkd(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in BUNDLED {
        assert!(text.contains(name));
    }
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_variant(dir.path(), "empty.toml", |t| t.replace("stop_km = 50.0", "stop_km = -1.0"));
    let csv = dir.path().join("out.csv");
    let out = pqkd(&["run", &cfg, "--out", csv.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("# seed = 5"));
    assert!(text.lines().any(|l| l.starts_with("distance_km,scheme,rate_per_source_pulse")));
    assert!(data_rows(&text).is_empty());
}

#[test]
fn invalid_scenario_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let bad_value = write_variant(dir.path(), "bad.toml", |t| t.replace("q = 0.5", "q = 1.5"));
    let out = pqkd(&["run", &bad_value, "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("apparatus.q"));
    assert!(!csv.exists());

    let bad_key = write_variant(dir.path(), "typo.toml", |t| t.replace("eta_bob", "eta_detector"));
    let out = pqkd(&["run", &bad_key, "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta_detector"));
    assert!(!csv.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);

    let out = pqkd(&["run", "no_such_scenario"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_variant(dir.path(), "short.toml", |t| {
        t.replace("start_km = 0.0", "start_km = 10.0").replace("stop_km = 50.0", "stop_km = 20.0")
    });
    let a = pqkd(&["run", &cfg, "--seed", "11"]);
    let b = pqkd(&["run", &cfg, "--seed", "11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(data_rows(&String::from_utf8(a.stdout).unwrap()).len(), 9);
}

#[test]
fn gllp_bundle_reproduces_the_20_km_ratio() {
    let out = pqkd(&["run", "fig4_gllp_gys"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# scenario = fig4_gllp_gys\n# seed = 0\n# tool_version = pqkd "));
    let row =
        data_rows(&text).into_iter().find(|r| r[0] == "2.00000000e1" && r[1] == "passive").expect("20 km passive row");
    let ratio: f64 = row[3].parse().unwrap();
    assert!((ratio - 0.981).abs() <= 0.02, "ratio {ratio}");
    assert_eq!(row[8], "true");
}

#[test]
fn calibrated_bundle_reports_derived_source_and_noise() {
    let out = pqkd(&["run", "fig13_pku"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let prefix = format!("# derived {key} = ");
        text.lines().find_map(|l| l.strip_prefix(&prefix)).expect(key).parse().unwrap()
    };
    assert!((value("source_mean_photons") - 6.411e7).abs() < 0.001e7);
    assert!((value("sigma_im_photons") - 3.097e5).abs() < 0.001e5);
}

#[test]
fn weakened_active_bound_fails_and_is_named() {
    let out = pqkd(&["verify", "--level", "quick", "--seed", "3", "--fault-scale-active", "1e-3"]);
    assert_eq!(out.status.code(), Some(3));
    let report = String::from_utf8(out.stdout).unwrap();
    let failures: Vec<&str> = report.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(!failures.is_empty());
    assert!(failures.iter().all(|l| l.contains("active sampling bound")), "{failures:?}");
}

#[test]
fn quick_verification_is_deterministic_and_passes() {
    let a = pqkd(&["verify", "--level", "quick", "--seed", "42"]);
    let b = pqkd(&["verify", "--level", "quick", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let report = String::from_utf8(a.stdout).unwrap();
    assert!(report.lines().last().unwrap().ends_with(" 0 failed"));
}
