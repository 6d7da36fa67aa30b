use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsma_core::evaluation::{EvalSettings, Mode, Scheme};
use rsma_core::experiments::{run_single, run_sweep, write_single, SweepSpec, RESULTS_FILE, SUCCESS_THRESHOLD};
use rsma_core::{Error, SystemConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_THRESHOLD: u8 = 2;

/// Robust SDMA/NOMA/RSMA design for cell-free MIMO with limited fronthaul.
#[derive(Debug, Parser)]
#[command(name = "rsma-sim", version)]
struct Cli {
    /// Log verbosity on stderr (-v info, -vv debug with MM traces).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design and evaluate one drop for one scheme and mode.
    Single(SingleArgs),
    /// Run a sweep described by a config file.
    Sweep(SweepArgs),
    /// Parse and validate a sweep config file.
    ValidateConfig {
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Write per-iteration MM traces to trace.log.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct SingleArgs {
    /// Sweep-format config whose [system], [solver], n_samples, seed and output are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "rsma-k-1")]
    scheme: String,
    #[arg(long, default_value = "robust")]
    mode: String,
    #[arg(long)]
    num_aps: Option<usize>,
    #[arg(long)]
    num_ues: Option<usize>,
    #[arg(long)]
    rho_z: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    c_fh: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long)]
    drops: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::ValidateConfig { config } => {
            let spec = SweepSpec::from_file(&config)?;
            println!(
                "ok: {} = {:?}, schemes {:?}, modes {:?}, {} drops",
                spec.sweep.variable,
                spec.sweep.values,
                spec.schemes.iter().map(|s| s.name()).collect::<Vec<_>>(),
                spec.modes.iter().map(|m| m.name()).collect::<Vec<_>>(),
                spec.drops
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Single(args) => single(args),
        Command::Sweep(args) => sweep(args),
    }
}

fn single(args: SingleArgs) -> Result<ExitCode, Error> {
    let scheme: Scheme = args.scheme.parse()?;
    let mode: Mode = args.mode.parse()?;
    let (mut cfg, mut settings, mut seed, mut out) = match &args.config {
        Some(path) => {
            let spec = SweepSpec::from_file(path)?;
            (spec.system.clone(), spec.eval_settings(), spec.seed, spec.output)
        }
        None => (SystemConfig::default(), EvalSettings::default(), 0, PathBuf::from("results")),
    };
    if let Some(m) = args.num_aps {
        cfg.num_aps = m;
    }
    if let Some(k) = args.num_ues {
        cfg.num_ues = k;
    }
    if let Some(r) = args.rho_z {
        cfg.relative_csi_error = r;
    }
    if let Some(s) = args.snr_db {
        cfg.set_snr_db(s);
    }
    if let Some(c) = args.c_fh {
        cfg.fronthaul_capacity = c;
    }
    apply_overrides(&args.overrides, &mut seed, &mut out, &mut settings);
    cfg.validate()?;
    let report = run_single(&cfg, scheme, mode, seed, &settings)?;
    let path = write_single(&report, &out, args.overrides.trace)?;
    log::info!("report written to {}", path.display());
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &report)?;
    writeln!(stdout)?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let mut spec = SweepSpec::from_file(&args.config)?;
    if let Some(d) = args.drops {
        spec.drops = d;
    }
    let mut settings = spec.eval_settings();
    apply_overrides(&args.overrides, &mut spec.seed, &mut spec.output, &mut settings);
    spec.n_samples = settings.n_samples;
    spec.trace |= args.overrides.trace;
    spec.validate()?;
    let outcome = run_sweep(&spec)?;
    let csv = std::fs::read_to_string(spec.output.join(RESULTS_FILE))?;
    std::io::stdout().lock().write_all(csv.as_bytes())?;
    if !outcome.meets_threshold() {
        eprintln!(
            "error: only {:.1}% of drops succeeded ({} of {} failed); at least {:.0}% required",
            100.0 * outcome.success_fraction(),
            outcome.failures,
            outcome.total,
            100.0 * SUCCESS_THRESHOLD
        );
        return Ok(ExitCode::from(EXIT_THRESHOLD));
    }
    Ok(ExitCode::SUCCESS)
}

fn apply_overrides(o: &Overrides, seed: &mut u64, out: &mut PathBuf, settings: &mut EvalSettings) {
    if let Some(s) = o.seed {
        *seed = s;
    }
    if let Some(p) = &o.out {
        *out = p.clone();
    }
    if let Some(n) = o.n_samples {
        settings.n_samples = n;
    }
}
