use rsma_core::evaluation::{Mode, Scheme};
use rsma_core::experiments::{compute_sweep, run_sweep, SweepSpec, REPORTS_FILE, RESULTS_FILE};

fn spec(text: &str) -> SweepSpec {
    let s = SweepSpec::from_toml(text).unwrap();
    s.validate().unwrap();
    s
}

#[test]
fn min_rate_drops_as_users_are_added() {
    let s = spec(
        r#"
drops = 8
n_samples = 1000
seed = 31
schemes = ["sdma", "rsma-k-1"]
modes = ["robust"]
[sweep]
variable = "K"
values = [2, 4, 6]
[system]
num_aps = 3
relative_csi_error = 0.2
"#,
    );
    let out = compute_sweep(&s).unwrap();
    assert_eq!(out.failures, 0);
    for scheme in [Scheme::Sdma, Scheme::RsmaClustered] {
        let means: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.mode == Mode::Robust)
            .map(|r| r.mean_min_rate_mc)
            .collect();
        assert_eq!(means.len(), 3);
        assert!(means.windows(2).all(|w| w[1] <= w[0]), "{scheme}: {means:?}");
    }
}

#[test]
fn rsma_rows_dominate_sdma_in_the_bound() {
    let s = spec(
        r#"
drops = 4
n_samples = 500
seed = 3
schemes = ["sdma", "rsma-1", "rsma-k-1"]
modes = ["robust"]
[sweep]
variable = "rho_z"
values = [0.0, 0.4]
"#,
    );
    let out = compute_sweep(&s).unwrap();
    for v in [0.0, 0.4] {
        let get = |sc: Scheme| out.rows.iter().find(|r| r.scheme == sc && r.value == v).unwrap().mean_min_rate_bound;
        assert!(get(Scheme::RsmaClustered) >= get(Scheme::RsmaSingle) - 1e-6);
        assert!(get(Scheme::RsmaSingle) >= get(Scheme::Sdma) - 1e-6);
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
drops = 2
n_samples = 200
seed = 11
schemes = ["noma", "rsma-k-1"]
modes = ["robust", "nonrobust"]
[sweep]
variable = "C_fh"
values = [1.0, 10.0]
[system]
num_aps = 2
num_ues = 3
"#;
    let mut a = spec(text);
    a.output = dir.path().join("a");
    let mut b = spec(text);
    b.output = dir.path().join("b");
    run_sweep(&a).unwrap();
    run_sweep(&b).unwrap();
    for f in [RESULTS_FILE, REPORTS_FILE] {
        let x = std::fs::read(a.output.join(f)).unwrap();
        let y = std::fs::read(b.output.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
}
