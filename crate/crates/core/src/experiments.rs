//! Sweep configuration, orchestration and result files.
//!
//! A sweep file is a TOML document:
//!
//! ```toml
//! drops = 20
//! n_samples = 10000
//! seed = 1
//! output = "out/rho"
//! schemes = ["sdma", "rsma-k-1"]
//! modes = ["robust", "nonrobust"]
//!
//! [sweep]
//! variable = "rho_z"          # rho_z | K | M | snr_db | C_fh
//! values = [0.0, 0.2, 0.5]
//!
//! [system]                    # any SystemConfig field; missing ones use defaults
//! num_aps = 3
//! num_ues = 4
//!
//! [solver]                    # optional
//! epsilon = 1e-4
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_drop, run_drops, summarize, DropFailure, DropResult, DropSeeds, EvalSettings, Mode, RateReport, Scheme,
    Summary, DEFAULT_MC_SAMPLES,
};
use crate::model::SystemConfig;
use crate::optimizer::SolverSettings;

/// Minimum fraction of successful drops for a sweep to count as valid.
pub const SUCCESS_THRESHOLD: f64 = 0.95;

pub const RESULTS_FILE: &str = "results.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const TRACE_FILE: &str = "trace.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "rho_z")]
    RelativeCsiError,
    #[serde(rename = "K")]
    NumUes,
    #[serde(rename = "M")]
    NumAps,
    #[serde(rename = "snr_db")]
    SnrDb,
    #[serde(rename = "C_fh")]
    FronthaulCapacity,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::RelativeCsiError => "rho_z",
            SweepVariable::NumUes => "K",
            SweepVariable::NumAps => "M",
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::FronthaulCapacity => "C_fh",
        }
    }

    fn check(self, v: f64) -> Result<()> {
        let ok = match self {
            SweepVariable::RelativeCsiError => (0.0..=1.0).contains(&v),
            SweepVariable::NumUes | SweepVariable::NumAps => v >= 1.0 && v.fract() == 0.0 && v <= 1e6,
            SweepVariable::SnrDb => v.is_finite(),
            SweepVariable::FronthaulCapacity => v.is_finite() && v > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("sweep value {v} is outside the domain of {}", self.name())))
        }
    }

    /// Base configuration with this variable set to `v`.
    pub fn apply(self, base: &SystemConfig, v: f64) -> Result<SystemConfig> {
        self.check(v)?;
        let mut cfg = base.clone();
        match self {
            SweepVariable::RelativeCsiError => cfg.relative_csi_error = v,
            SweepVariable::NumUes => cfg.num_ues = v as usize,
            SweepVariable::NumAps => cfg.num_aps = v as usize,
            SweepVariable::SnrDb => cfg.set_snr_db(v),
            SweepVariable::FronthaulCapacity => cfg.fronthaul_capacity = v,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

fn default_drops() -> usize {
    20
}

fn default_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Robust]
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// One sweep: base system, swept variable, schemes, modes and run sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub system: SystemConfig,
    pub sweep: SweepAxis,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_drops")]
    pub drops: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Also write per-iteration MM traces to `trace.log`.
    #[serde(default)]
    pub trace: bool,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("scheme list is empty".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("mode list is empty".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep has no values".into()));
        }
        if self.drops == 0 {
            return Err(Error::InvalidConfig("drops must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
        }
        self.solver.validate()?;
        self.system.validate()?;
        for &v in &self.sweep.values {
            self.sweep.variable.apply(&self.system, v)?;
        }
        Ok(())
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings { solver: self.solver, n_samples: self.n_samples }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variable: String,
    pub value: f64,
    pub scheme: Scheme,
    pub mode: Mode,
    pub mean_min_rate_bound: f64,
    pub mean_min_rate_mc: f64,
    pub stderr: f64,
    pub drops: usize,
    pub failures: usize,
}

/// One line of `reports.jsonl`: either a report or the failure that replaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub variable: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<RateReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<DropFailure>,
}

/// In-memory result of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReportRecord>,
    pub total: usize,
    pub failures: usize,
}

impl SweepOutcome {
    pub fn success_fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            (self.total - self.failures) as f64 / self.total as f64
        }
    }

    pub fn meets_threshold(&self) -> bool {
        self.success_fraction() >= SUCCESS_THRESHOLD
    }
}

/// Runs all sweep points without touching the file system.
pub fn compute_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let settings = spec.eval_settings();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut total = 0;
    let mut failures = 0;
    let variable = spec.sweep.variable.name().to_string();
    for &value in &spec.sweep.values {
        let cfg = spec.sweep.variable.apply(&spec.system, value)?;
        log::info!("sweep {variable} = {value}: {} drops", spec.drops);
        let per_drop = run_drops(&cfg, spec.seed, spec.drops, &spec.schemes, &spec.modes, &settings);
        // results of a drop are ordered mode-major, scheme-minor
        let slot = |mi: usize, si: usize| mi * spec.schemes.len() + si;
        for (mi, &mode) in spec.modes.iter().enumerate() {
            for (si, &scheme) in spec.schemes.iter().enumerate() {
                let s: Summary = summarize(per_drop.iter().map(|d| &d[slot(mi, si)]));
                rows.push(SummaryRow {
                    variable: variable.clone(),
                    value,
                    scheme,
                    mode,
                    mean_min_rate_bound: s.mean_bound,
                    mean_min_rate_mc: s.mean_mc,
                    stderr: s.stderr,
                    drops: s.drops,
                    failures: s.failures,
                });
                total += s.drops;
                failures += s.failures;
            }
        }
        for drop in per_drop {
            for r in drop {
                records.push(record(&variable, value, r));
            }
        }
    }
    Ok(SweepOutcome { rows, records, total, failures })
}

fn record(variable: &str, value: f64, r: DropResult) -> ReportRecord {
    let (report, failure) = match r {
        Ok(rep) => (Some(rep), None),
        Err(f) => (None, Some(f)),
    };
    ReportRecord { variable: variable.to_string(), value, report, failure }
}

/// Writes `results.csv` and `reports.jsonl` (and `trace.log` if requested) into `dir`.
pub fn write_outputs(outcome: &SweepOutcome, dir: &Path, trace: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = csv::Writer::from_path(dir.join(RESULTS_FILE))?;
    for row in &outcome.rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    let mut jsonl = BufWriter::new(File::create(dir.join(REPORTS_FILE))?);
    for rec in &outcome.records {
        serde_json::to_writer(&mut jsonl, rec)?;
        jsonl.write_all(b"\n")?;
    }
    jsonl.flush()?;
    if trace {
        let mut log = BufWriter::new(File::create(dir.join(TRACE_FILE))?);
        for rec in &outcome.records {
            if let Some(rep) = &rec.report {
                write_trace(&mut log, &rec.variable, rec.value, rep)?;
            }
        }
        log.flush()?;
    }
    Ok(())
}

fn write_trace(out: &mut impl Write, variable: &str, value: f64, rep: &RateReport) -> Result<()> {
    for t in &rep.trace {
        writeln!(
            out,
            "{variable}={value} drop={} scheme={} mode={} iterate={} objective={:.12} surrogate={:.12} newton={} phase1={} solved={}",
            rep.seeds.drop,
            rep.scheme,
            rep.mode,
            t.iterate,
            t.objective,
            t.surrogate_objective,
            t.newton_steps,
            t.phase_one,
            t.converged
        )?;
    }
    Ok(())
}

/// Runs a sweep and writes its files to `spec.output`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    let outcome = compute_sweep(spec)?;
    write_outputs(&outcome, &spec.output, spec.trace)?;
    Ok(outcome)
}

/// One drop of one scheme and mode, with the full report.
pub fn run_single(
    cfg: &SystemConfig,
    scheme: Scheme,
    mode: Mode,
    seed: u64,
    settings: &EvalSettings,
) -> Result<RateReport> {
    evaluate_drop(cfg, DropSeeds::new(seed, 0), scheme, mode, settings)
}

/// Writes a single report as pretty JSON (and its trace if requested).
pub fn write_single(report: &RateReport, dir: &Path, trace: bool) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("report.json");
    let mut f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    if trace {
        let mut log = BufWriter::new(File::create(dir.join(TRACE_FILE))?);
        write_trace(&mut log, "single", 0.0, report)?;
        log.flush()?;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        drops = 2
        n_samples = 200
        seed = 5
        schemes = ["sdma", "rsma-1"]

        [sweep]
        variable = "rho_z"
        values = [0.0, 0.3]

        [system]
        num_aps = 2
        num_ues = 2
    "#;

    #[test]
    fn parses_minimal_file() {
        let s = SweepSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(s.sweep.variable, SweepVariable::RelativeCsiError);
        assert_eq!(s.schemes, vec![Scheme::Sdma, Scheme::RsmaSingle]);
        assert_eq!(s.modes, vec![Mode::Robust]);
        assert_eq!(s.system.fronthaul_capacity, 10.0);
        assert_eq!(s.solver, SolverSettings::default());
    }

    #[test]
    fn empty_scheme_list_is_rejected() {
        let text = MINIMAL.replace(r#"schemes = ["sdma", "rsma-1"]"#, "schemes = []");
        assert!(matches!(SweepSpec::from_toml(&text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = MINIMAL.replace(r#""rsma-1""#, r#""rsma-7""#);
        let msg = SweepSpec::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("line 5"), "{msg}");
        let msg = SweepSpec::from_toml("drops = 2\nbogus = 1\n").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn sweep_values_are_checked() {
        for (var, bad) in [("rho_z", "1.5"), ("K", "2.5"), ("M", "0"), ("C_fh", "0.0")] {
            let text = MINIMAL.replace(r#"variable = "rho_z""#, &format!(r#"variable = "{var}""#))
                .replace("values = [0.0, 0.3]", &format!("values = [{bad}]"));
            assert!(SweepSpec::from_toml(&text).is_err(), "{var} {bad}");
        }
    }

    #[test]
    fn apply_sets_each_variable() {
        let base = SystemConfig::default();
        assert_eq!(SweepVariable::NumUes.apply(&base, 6.0).unwrap().num_ues, 6);
        assert_eq!(SweepVariable::NumAps.apply(&base, 5.0).unwrap().num_aps, 5);
        assert!((SweepVariable::SnrDb.apply(&base, 30.0).unwrap().tx_power - 1000.0).abs() < 1e-9);
        assert_eq!(SweepVariable::FronthaulCapacity.apply(&base, 2.0).unwrap().fronthaul_capacity, 2.0);
    }

    #[test]
    fn sweep_writes_files_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SweepSpec::from_toml(MINIMAL).unwrap();
        s.output = dir.path().to_path_buf();
        s.trace = true;
        let out = run_sweep(&s).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert_eq!(out.records.len(), 8);
        assert_eq!(out.total, 8);
        assert!(out.meets_threshold());
        let csv = fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "variable,value,scheme,mode,mean_min_rate_bound,mean_min_rate_mc,stderr,drops,failures"
        );
        assert_eq!(fs::read_to_string(dir.path().join(REPORTS_FILE)).unwrap().lines().count(), 8);
        assert!(fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap().contains("iterate=2"));
    }

    #[test]
    fn single_is_deterministic() {
        let cfg = SystemConfig { num_aps: 2, num_ues: 3, ..Default::default() };
        let settings = EvalSettings { n_samples: 300, ..Default::default() };
        let a = run_single(&cfg, Scheme::RsmaClustered, Mode::Robust, 4, &settings).unwrap();
        let b = run_single(&cfg, Scheme::RsmaClustered, Mode::Robust, 4, &settings).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.subsets.len(), 2);
        assert!(a.mm_history.len() >= 2);
    }
}
