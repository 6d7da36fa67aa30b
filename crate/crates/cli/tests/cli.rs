use std::path::Path;
use std::process::{Command, Output};

use rsma_core::evaluation::{EvalSettings, Mode, RateReport, Scheme};
use rsma_core::experiments::run_single;
use rsma_core::SystemConfig;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsma-sim")).args(args).output().unwrap()
}

fn golden(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name).display().to_string()
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let out = sim(&["single", "--scheme", "ofdma"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ofdma"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(sim(&["sweep", "--bogus"]).status.code(), Some(1));
    assert_eq!(sim(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_config_accepts_and_rejects() {
    let ok = sim(&["validate-config", &golden("tiny.toml")]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("ok:"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "drops = 2\nschemes = []\n[sweep]\nvariable = \"rho_z\"\nvalues = [0.1]\n").unwrap();
    let out = sim(&["validate-config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(&bad, "drops = 2\n[sweep]\nvariable = \"rho_z\"\nvalues = [0.1\n").unwrap();
    let out = sim(&["validate-config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn single_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("single");
    let out = sim(&[
        "single", "--scheme", "rsma-1", "--mode", "nonrobust", "--num-aps", "2", "--num-ues", "3", "--rho-z", "0.3",
        "--seed", "99", "--n-samples", "800", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let from_cli: RateReport = serde_json::from_slice(&out.stdout).unwrap();
    let on_disk: RateReport = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();

    let cfg = SystemConfig { num_aps: 2, num_ues: 3, relative_csi_error: 0.3, ..Default::default() };
    let settings = EvalSettings { n_samples: 800, ..Default::default() };
    let lib = run_single(&cfg, Scheme::RsmaSingle, Mode::Nonrobust, 99, &settings).unwrap();
    let lib: RateReport = serde_json::from_str(&serde_json::to_string(&lib).unwrap()).unwrap();
    assert_eq!(from_cli, lib);
    assert_eq!(on_disk, lib);
}

#[test]
fn sweep_matches_golden_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["sweep", &golden("tiny.toml"), "--out", dir.path().to_str().unwrap(), "--trace"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
    let expected = std::fs::read_to_string(golden("tiny_results.csv")).unwrap();
    assert_eq!(csv, expected);

    let reports = std::fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    // 2 values × 4 schemes × 2 modes × 2 drops
    assert_eq!(reports.lines().count(), 32);
    for line in reports.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("report").is_some());
    }
    assert!(std::fs::metadata(dir.path().join("trace.log")).unwrap().len() > 0);
}

#[test]
fn drops_override_changes_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["sweep", &golden("tiny.toml"), "--drops", "1", "--n-samples", "100", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8_lossy(&out.stdout).to_string();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "variable,value,scheme,mode,mean_min_rate_bound,mean_min_rate_mc,stderr,drops,failures");
    assert!(lines.all(|l| l.ends_with(",1,0")));
}
