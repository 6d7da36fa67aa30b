//! Monte Carlo rate oracle, the per-drop design pipeline and the paired
//! robust/non-robust and scheme-vs-scheme comparisons.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    assemble_scheme_values, quad_form, scheme_bounds, scheme_terms, BeamDesign, SchemeBounds, SchemeKind,
    SchemeSpec, TermRole, DENOMINATOR_FLOOR,
};
use crate::clustering::cluster_subsets;
use crate::error::{Error, Result};
use crate::model::{sample_channels, sample_cn, sample_topology, ChannelSet, SystemConfig};
use crate::optimizer::{
    allocate_from_bounds, embed_design, init_design, mm_optimize_from, noma_decoding_order, rank1_project,
    IterationTrace, MmState, PowerModel, RateAllocation, SolverSettings,
};

pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// The four scheme variants that are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "sdma")]
    Sdma,
    #[serde(rename = "noma")]
    Noma,
    /// RSMA with one common signal decoded by all UEs.
    #[serde(rename = "rsma-1")]
    RsmaSingle,
    /// RSMA with the `K−1` clustered common signals.
    #[serde(rename = "rsma-k-1")]
    RsmaClustered,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Sdma, Scheme::Noma, Scheme::RsmaSingle, Scheme::RsmaClustered];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sdma => "sdma",
            Scheme::Noma => "noma",
            Scheme::RsmaSingle => "rsma-1",
            Scheme::RsmaClustered => "rsma-k-1",
        }
    }

    /// Scheme structure for one channel realization.
    pub fn spec(self, channels: &ChannelSet) -> Result<SchemeSpec> {
        let k = channels.num_ues();
        match self {
            Scheme::Sdma => Ok(SchemeSpec::sdma(k)),
            Scheme::Noma => SchemeSpec::noma(noma_decoding_order(channels)),
            // a single UE has nobody to share a common signal with
            Scheme::RsmaSingle | Scheme::RsmaClustered if k < 2 => SchemeSpec::rsma(k, Vec::new()),
            Scheme::RsmaSingle => SchemeSpec::rsma_single_common(k),
            Scheme::RsmaClustered => cluster_subsets(channels),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme `{s}` (expected sdma, noma, rsma-1 or rsma-k-1)")))
    }
}

/// Whether the design accounts for the CSI error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Robust,
    /// Designed as if the estimates were exact (`z = 0`).
    Nonrobust,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Robust => "robust",
            Mode::Nonrobust => "nonrobust",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(Mode::Robust),
            "nonrobust" => Ok(Mode::Nonrobust),
            _ => Err(Error::Parse(format!("unknown mode `{s}` (expected robust or nonrobust)"))),
        }
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Welford running mean and variance.
#[derive(Default)]
struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn estimate(&self) -> Estimate {
        let n = self.n as f64;
        let var = if self.n > 1 { self.m2.max(0.0) / (n - 1.0) } else { 0.0 };
        Estimate { mean: self.mean, stderr: (var / n).sqrt() }
    }
}

/// Monte Carlo expected rates of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRates {
    /// Per-UE expected rate (allocation applied for RSMA).
    pub per_ue: Vec<Estimate>,
    pub min_rate: Estimate,
    /// Per-term expectations grouped like the closed-form bounds.
    pub terms: SchemeBounds,
    /// Allocation after clipping the common rates to the MC budgets.
    pub allocation: RateAllocation,
    pub n_samples: usize,
}

/// Expected value of `log₂(1+γ)` for every rate term of the scheme. Each UE
/// draws its own `n_samples` errors `e ~ CN(0, diag z_k)`, shared by all terms
/// that UE decodes.
pub fn mc_term_rates(
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(TermRole, Estimate)>> {
    if n_samples < 1 {
        return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
    }
    if design.num_streams() != spec.num_streams() || design.num_aps() != channels.num_aps() {
        return Err(Error::Dimension("design does not match scheme/channels".into()));
    }
    let terms = scheme_terms(spec);
    let m = channels.num_aps();
    let s_n = design.num_streams();
    let mut out: Vec<Option<(TermRole, Estimate)>> = vec![None; terms.len()];
    let mut acc: Vec<Accumulator> = Vec::new();
    let mut h = DVector::<Complex64>::zeros(m);
    let mut e = DVector::<Complex64>::zeros(m);
    let mut through = vec![0.0; s_n];
    let mut leak = vec![0.0; s_n];
    for k in 0..channels.num_ues() {
        let mine: Vec<usize> = (0..terms.len()).filter(|&t| terms[t].1.decoder == k).collect();
        if mine.is_empty() {
            continue;
        }
        let h_hat = channels.estimate(k);
        let z = channels.error_variances(k);
        let signal: Vec<f64> = design.covariances.iter().map(|v| quad_form(&h_hat, v).max(0.0)).collect();
        acc.clear();
        acc.resize_with(mine.len(), Accumulator::default);
        for _ in 0..n_samples {
            for i in 0..m {
                e[i] = sample_cn(z[i], rng);
                h[i] = h_hat[i] + e[i];
            }
            let mut base = noise_power;
            for i in 0..m {
                base += h[i].norm_sqr() * design.quant_noise[i];
            }
            for s in 0..s_n {
                through[s] = quad_form(&h, &design.covariances[s]);
                leak[s] = quad_form(&e, &design.covariances[s]);
            }
            for (a, &t) in acc.iter_mut().zip(&mine) {
                let term = &terms[t].1;
                let den = base + leak[term.signal] + term.interferers.iter().map(|&s| through[s]).sum::<f64>();
                let sinr = signal[term.signal] / den.max(DENOMINATOR_FLOOR);
                a.push(sinr.ln_1p() / std::f64::consts::LN_2);
            }
        }
        for (a, &t) in acc.iter().zip(&mine) {
            out[t] = Some((terms[t].0, a.estimate()));
        }
    }
    Ok(out.into_iter().map(|o| o.expect("every term has a decoder")).collect())
}

/// Per-UE MC expected rates assembled with the scheme's min/sum structure.
/// For RSMA the given allocation's common rates are scaled down wherever they
/// exceed the MC budget of their common signal; without an allocation the
/// max-min allocation of the MC values is used.
pub fn mc_expected_rates(
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
    allocation: Option<&RateAllocation>,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<McRates> {
    let estimates = mc_term_rates(design, channels, spec, noise_power, n_samples, rng)?;
    let k_n = spec.num_ues;
    // standard error of each grouped value, kept alongside the means
    let terms = assemble_scheme_values(spec, estimates.iter().map(|(r, e)| (*r, e.mean)));
    let se_of = |pred: &dyn Fn(&TermRole) -> bool, mean: f64| {
        estimates
            .iter()
            .filter(|(r, e)| pred(r) && e.mean == mean)
            .map(|(_, e)| e.stderr)
            .fold(0.0, f64::max)
    };
    let private_se: Vec<f64> = (0..k_n)
        .map(|k| {
            se_of(
                &|r| match *r {
                    TermRole::Sdma { ue } | TermRole::Private { ue } => ue == k,
                    TermRole::Noma { k: kk, .. } => spec.noma_order[kk] == k,
                    TermRole::Common { .. } => false,
                },
                terms.private[k],
            )
        })
        .collect();
    let budget_se: Vec<f64> = (0..spec.num_common())
        .map(|l| se_of(&|r| matches!(*r, TermRole::Common { l: ll, .. } if ll == l), terms.common_budget(l)))
        .collect();

    let allocation = match (spec.kind, allocation) {
        (SchemeKind::Rsma, Some(a)) => clip_to_budgets(spec, a, &terms),
        _ => allocate_from_bounds(spec, &terms),
    };
    let mut per_ue: Vec<Estimate> = (0..k_n)
        .map(|k| Estimate { mean: terms.private[k].max(0.0), stderr: private_se[k] })
        .collect();
    if spec.kind == SchemeKind::Rsma {
        let budgets: Vec<f64> = (0..spec.num_common()).map(|l| terms.common_budget(l)).collect();
        for (l, members) in allocation.common.iter().enumerate() {
            let used: f64 = members.iter().map(|(_, r)| r).sum();
            let binding = used >= budgets[l] * (1.0 - 1e-12) && used > 0.0;
            for &(k, r) in members {
                per_ue[k].mean += r;
                if binding {
                    let share = r / used;
                    per_ue[k].stderr = per_ue[k].stderr.hypot(share * budget_se[l]);
                }
            }
        }
    }
    let min_rate = per_ue
        .iter()
        .copied()
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
        .unwrap_or_default();
    Ok(McRates { per_ue, min_rate, terms, allocation, n_samples })
}

fn clip_to_budgets(spec: &SchemeSpec, alloc: &RateAllocation, terms: &SchemeBounds) -> RateAllocation {
    let mut common = alloc.common.clone();
    for (l, members) in common.iter_mut().enumerate().take(spec.num_common()) {
        let budget = terms.common_budget(l).max(0.0);
        let used: f64 = members.iter().map(|(_, r)| r).sum();
        if used > budget {
            let scale = if used > 0.0 { budget / used } else { 0.0 };
            for m in members.iter_mut() {
                m.1 *= scale;
            }
        }
    }
    let private = terms.private.iter().map(|a| a.max(0.0)).collect();
    RateAllocation { private, common }
}

/// Seeds of one drop. Channels and MC draws use separate ChaCha8 streams of
/// the master seed, so every scheme and mode of a drop sees the same channel
/// realization and the same error samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSeeds {
    pub master: u64,
    pub drop: u64,
}

impl DropSeeds {
    pub fn new(master: u64, drop: u64) -> Self {
        Self { master, drop }
    }

    pub fn channel_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(2 * self.drop);
        rng
    }

    pub fn mc_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(2 * self.drop + 1);
        rng
    }
}

/// Samples the topology and channels of a drop.
pub fn sample_drop(cfg: &SystemConfig, seeds: DropSeeds) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = seeds.channel_rng();
    let topo = sample_topology(cfg, &mut rng);
    sample_channels(&topo, cfg.relative_csi_error, &mut rng)
}

/// Evaluation settings shared by every drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub solver: SolverSettings,
    pub n_samples: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { solver: SolverSettings::default(), n_samples: DEFAULT_MC_SAMPLES }
    }
}

/// Everything recorded about one scheme/mode on one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scheme: Scheme,
    pub mode: Mode,
    pub seeds: DropSeeds,
    /// Common-signal subsets (empty for SDMA/NOMA).
    pub subsets: Vec<Vec<usize>>,
    /// NOMA decoding order (empty otherwise).
    pub decoding_order: Vec<usize>,
    /// Per-UE closed-form bounds of the projected design, under the true error statistics.
    pub bound_rates: Vec<f64>,
    pub mc_rates: Vec<Estimate>,
    pub min_rate_bound: f64,
    pub min_rate_mc: Estimate,
    /// MM objective of the relaxed design (before projection).
    pub relaxed_objective: f64,
    pub allocation: RateAllocation,
    pub mc_allocation: RateAllocation,
    pub ap_powers: Vec<f64>,
    pub quant_noise: Vec<f64>,
    pub power_feasible: bool,
    pub fronthaul_feasible: bool,
    pub n_samples: usize,
    pub mm_iterations: usize,
    pub mm_converged: bool,
    pub mm_history: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<IterationTrace>,
    #[serde(skip)]
    pub relaxed_design: Option<BeamDesign>,
}

/// A drop-level failure, kept in the output instead of being skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropFailure {
    pub scheme: Scheme,
    pub mode: Mode,
    pub seeds: DropSeeds,
    pub error: String,
}

pub type DropResult = std::result::Result<RateReport, DropFailure>;

const FEASIBILITY_CHECK_TOL: f64 = 1e-7;

/// Relaxed MM solutions of one drop for one mode, with the SDMA → RSMA-1 →
/// RSMA-(K−1) warm-start chain computed on demand.
pub struct DropDesigner<'a> {
    pub cfg: &'a SystemConfig,
    pub mode: Mode,
    /// True channel statistics of the drop.
    pub channels: &'a ChannelSet,
    /// Channels the design sees (errors zeroed in non-robust mode).
    pub design_channels: ChannelSet,
    pub settings: SolverSettings,
    power: PowerModel,
    solved: Vec<(Scheme, SchemeSpec, MmState)>,
}

impl<'a> DropDesigner<'a> {
    pub fn new(cfg: &'a SystemConfig, channels: &'a ChannelSet, mode: Mode, settings: SolverSettings) -> Result<Self> {
        let design_channels = match mode {
            Mode::Robust => channels.clone(),
            Mode::Nonrobust => channels.without_errors(),
        };
        Ok(Self {
            cfg,
            mode,
            channels,
            design_channels,
            settings,
            power: PowerModel::from_config(cfg)?,
            solved: Vec::new(),
        })
    }

    /// Solves `scheme`, projects to beams and evaluates under the true
    /// statistics. MC rates use the allocation the design model would pick
    /// (clipped to the MC budgets); the reported bound uses the true `z`.
    pub fn report(&mut self, scheme: Scheme, seeds: DropSeeds, n_samples: usize) -> Result<RateReport> {
        let (spec, state) = self.solve(scheme)?;
        let cfg = self.cfg;
        let beta = self.power.beta;
        let (_, projected) = rank1_project(&state.design, beta)?;
        let bounds = scheme_bounds(&spec, &projected, self.channels, cfg.noise_power)?;
        let allocation = allocate_from_bounds(&spec, &bounds);
        let planned = match self.mode {
            Mode::Robust => allocation.clone(),
            Mode::Nonrobust => {
                allocate_from_bounds(&spec, &scheme_bounds(&spec, &projected, &self.design_channels, cfg.noise_power)?)
            }
        };
        let mut rng = seeds.mc_rng();
        let mc = mc_expected_rates(&projected, self.channels, &spec, cfg.noise_power, Some(&planned), n_samples, &mut rng)?;
        Ok(RateReport {
            scheme,
            mode: self.mode,
            seeds,
            subsets: if spec.kind == SchemeKind::Rsma { spec.subsets.clone() } else { Vec::new() },
            decoding_order: spec.noma_order.clone(),
            bound_rates: allocation.ue_rates(),
            min_rate_bound: allocation.min_rate(),
            min_rate_mc: mc.min_rate,
            mc_rates: mc.per_ue,
            relaxed_objective: state.objective,
            allocation,
            mc_allocation: mc.allocation,
            ap_powers: projected.ap_powers(),
            quant_noise: projected.quant_noise.clone(),
            power_feasible: projected.power_feasible(cfg.tx_power, FEASIBILITY_CHECK_TOL),
            fronthaul_feasible: projected.fronthaul_feasible(beta, FEASIBILITY_CHECK_TOL),
            n_samples,
            mm_iterations: state.iterations,
            mm_converged: state.converged,
            mm_history: state.history,
            trace: state.trace,
            relaxed_design: Some(state.design),
        })
    }

    /// Warm-start predecessor in the chain, if any.
    fn predecessor(scheme: Scheme) -> Option<Scheme> {
        match scheme {
            Scheme::RsmaSingle => Some(Scheme::Sdma),
            Scheme::RsmaClustered => Some(Scheme::RsmaSingle),
            _ => None,
        }
    }

    pub fn solve(&mut self, scheme: Scheme) -> Result<(SchemeSpec, MmState)> {
        if let Some((_, spec, st)) = self.solved.iter().find(|(s, _, _)| *s == scheme) {
            return Ok((spec.clone(), st.clone()));
        }
        let spec = scheme.spec(&self.design_channels)?;
        let start = match Self::predecessor(scheme) {
            Some(prev) => {
                let (prev_spec, prev_state) = self.solve(prev)?;
                embed_design(&prev_state.design, &prev_spec, &spec)?
            }
            None => init_design(&spec, &self.design_channels, &self.power),
        };
        let state = mm_optimize_from(&spec, &self.design_channels, &self.power, &self.settings, start)?;
        self.solved.push((scheme, spec.clone(), state.clone()));
        Ok((spec, state))
    }
}

/// Designs and evaluates one scheme and mode on one drop.
pub fn evaluate_drop(
    cfg: &SystemConfig,
    seeds: DropSeeds,
    scheme: Scheme,
    mode: Mode,
    settings: &EvalSettings,
) -> Result<RateReport> {
    let channels = sample_drop(cfg, seeds)?;
    DropDesigner::new(cfg, &channels, mode, settings.solver)?.report(scheme, seeds, settings.n_samples)
}

/// Runs every requested scheme and mode on one drop.
pub fn run_drop(
    cfg: &SystemConfig,
    seeds: DropSeeds,
    schemes: &[Scheme],
    modes: &[Mode],
    settings: &EvalSettings,
) -> Vec<DropResult> {
    let channels = match sample_drop(cfg, seeds) {
        Ok(c) => c,
        Err(e) => {
            let error = e.to_string();
            return modes
                .iter()
                .flat_map(|&mode| schemes.iter().map(move |&scheme| (scheme, mode)))
                .map(|(scheme, mode)| Err(DropFailure { scheme, mode, seeds, error: error.clone() }))
                .collect();
        }
    };
    let mut out = Vec::with_capacity(schemes.len() * modes.len());
    for &mode in modes {
        let designer = DropDesigner::new(cfg, &channels, mode, settings.solver);
        let mut designer = match designer {
            Ok(d) => d,
            Err(e) => {
                out.extend(schemes.iter().map(|&scheme| Err(DropFailure { scheme, mode, seeds, error: e.to_string() })));
                continue;
            }
        };
        for &scheme in schemes {
            let res = designer.report(scheme, seeds, settings.n_samples);
            match &res {
                Ok(r) => log::info!(
                    "drop {} {} {}: bound {:.4} mc {:.4} iters {}",
                    seeds.drop,
                    scheme,
                    mode,
                    r.min_rate_bound,
                    r.min_rate_mc.mean,
                    r.mm_iterations
                ),
                Err(e) => log::warn!("drop {} {} {} failed: {}", seeds.drop, scheme, mode, e),
            }
            out.push(res.map_err(|e| DropFailure { scheme, mode, seeds, error: e.to_string() }));
        }
    }
    out
}

/// Runs drops `0..drops` concurrently; results are returned in drop order.
pub fn run_drops(
    cfg: &SystemConfig,
    master_seed: u64,
    drops: usize,
    schemes: &[Scheme],
    modes: &[Mode],
    settings: &EvalSettings,
) -> Vec<Vec<DropResult>> {
    (0..drops as u64)
        .into_par_iter()
        .map(|d| run_drop(cfg, DropSeeds::new(master_seed, d), schemes, modes, settings))
        .collect()
}

/// Mean, standard error and failure count over a set of drop results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_bound: f64,
    pub mean_mc: f64,
    /// Standard error of `mean_mc` across drops.
    pub stderr: f64,
    pub drops: usize,
    pub failures: usize,
}

pub fn summarize<'a>(results: impl IntoIterator<Item = &'a DropResult>) -> Summary {
    let mut bound = Accumulator::default();
    let mut mc = Accumulator::default();
    let mut failures = 0;
    let mut drops = 0;
    for r in results {
        drops += 1;
        match r {
            Ok(rep) => {
                bound.push(rep.min_rate_bound);
                mc.push(rep.min_rate_mc.mean);
            }
            Err(_) => failures += 1,
        }
    }
    let (mean_bound, mean_mc, stderr) = if mc.n > 0 {
        let m = mc.estimate();
        (bound.estimate().mean, m.mean, m.stderr)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Summary { mean_bound, mean_mc, stderr, drops, failures }
}

/// One drop of the robust/non-robust comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDrop {
    pub seeds: DropSeeds,
    pub robust: f64,
    pub nonrobust: f64,
    /// Whether both relaxed designs coincide entrywise (within 1e-12 relative).
    pub identical_designs: bool,
}

/// Paired robust vs non-robust min-rates (MC under the true statistics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub pairs: Vec<PairedDrop>,
    pub failures: Vec<DropFailure>,
    pub mean_robust: f64,
    pub mean_nonrobust: f64,
    pub mean_gap: f64,
    /// Standard error of the mean paired gap.
    pub gap_stderr: f64,
}

fn designs_identical(a: &BeamDesign, b: &BeamDesign) -> bool {
    let scale = a.ap_powers().into_iter().fold(1.0, f64::max);
    a.covariances.len() == b.covariances.len()
        && a.covariances.iter().zip(&b.covariances).all(|(x, y)| (x - y).iter().all(|d| d.norm() <= 1e-12 * scale))
        && a.quant_noise.iter().zip(&b.quant_noise).all(|(x, y)| (x - y).abs() <= 1e-12 * scale)
}

pub fn compare_robust_nonrobust(
    cfg: &SystemConfig,
    scheme: Scheme,
    drops: usize,
    master_seed: u64,
    settings: &EvalSettings,
) -> Result<PairedComparison> {
    if drops < 1 {
        return Err(Error::InvalidConfig("drops must be at least 1".into()));
    }
    let all = run_drops(cfg, master_seed, drops, &[scheme], &[Mode::Robust, Mode::Nonrobust], settings);
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    let mut gap = Accumulator::default();
    let (mut sr, mut sn) = (0.0, 0.0);
    for drop in all {
        let mut it = drop.into_iter();
        let (r, n) = (it.next().expect("robust result"), it.next().expect("non-robust result"));
        match (r, n) {
            (Ok(r), Ok(n)) => {
                let identical = match (&r.relaxed_design, &n.relaxed_design) {
                    (Some(a), Some(b)) => designs_identical(a, b),
                    _ => false,
                };
                gap.push(r.min_rate_mc.mean - n.min_rate_mc.mean);
                sr += r.min_rate_mc.mean;
                sn += n.min_rate_mc.mean;
                pairs.push(PairedDrop {
                    seeds: r.seeds,
                    robust: r.min_rate_mc.mean,
                    nonrobust: n.min_rate_mc.mean,
                    identical_designs: identical,
                });
            }
            (r, n) => failures.extend(r.err().into_iter().chain(n.err())),
        }
    }
    let n = pairs.len().max(1) as f64;
    let g = if pairs.is_empty() { Estimate { mean: f64::NAN, stderr: f64::NAN } } else { gap.estimate() };
    Ok(PairedComparison {
        mean_robust: sr / n,
        mean_nonrobust: sn / n,
        mean_gap: g.mean,
        gap_stderr: g.stderr,
        pairs,
        failures,
    })
}

/// Per-scheme results of every drop, all schemes sharing each drop's channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub schemes: Vec<Scheme>,
    /// `per_drop[d][s]` for scheme `schemes[s]`.
    pub per_drop: Vec<Vec<DropResult>>,
    pub summaries: Vec<Summary>,
}

pub fn compare_schemes(
    cfg: &SystemConfig,
    drops: usize,
    master_seed: u64,
    settings: &EvalSettings,
) -> Result<SchemeComparison> {
    if drops < 1 {
        return Err(Error::InvalidConfig("drops must be at least 1".into()));
    }
    let schemes = Scheme::ALL.to_vec();
    let per_drop = run_drops(cfg, master_seed, drops, &schemes, &[Mode::Robust], settings);
    let summaries = (0..schemes.len()).map(|s| summarize(per_drop.iter().map(|d| &d[s]))).collect();
    Ok(SchemeComparison { schemes, per_drop, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::term_sinr_instant;

    fn drop_instance(m: usize, k: usize, rho: f64, seed: u64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig { num_aps: m, num_ues: k, relative_csi_error: rho, ..Default::default() };
        let ch = sample_drop(&cfg, DropSeeds::new(seed, 0)).unwrap();
        (cfg, ch)
    }

    fn some_design(spec: &SchemeSpec, ch: &ChannelSet, cfg: &SystemConfig) -> BeamDesign {
        init_design(spec, ch, &PowerModel::from_config(cfg).unwrap())
    }

    #[test]
    fn zero_error_mc_equals_bound() {
        let (cfg, ch) = drop_instance(3, 4, 0.0, 3);
        for scheme in Scheme::ALL {
            let spec = scheme.spec(&ch).unwrap();
            let d = some_design(&spec, &ch, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mc = mc_term_rates(&d, &ch, &spec, 1.0, 50, &mut rng).unwrap();
            let b = scheme_bounds(&spec, &d, &ch, 1.0).unwrap();
            let a = assemble_scheme_values(&spec, mc.iter().map(|(r, e)| (*r, e.mean)));
            for (x, y) in a.private.iter().zip(&b.private) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(mc.iter().all(|(_, e)| e.stderr == 0.0));
        }
    }

    #[test]
    fn zero_beams_give_zero_rates() {
        let (_, ch) = drop_instance(2, 3, 0.3, 1);
        let spec = SchemeSpec::rsma_single_common(3).unwrap();
        let d = BeamDesign::zeros(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mc = mc_expected_rates(&d, &ch, &spec, 1.0, None, 100, &mut rng).unwrap();
        assert!(mc.per_ue.iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn rejects_zero_samples() {
        let (_, ch) = drop_instance(2, 2, 0.3, 1);
        let spec = SchemeSpec::sdma(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mc_term_rates(&BeamDesign::zeros(2, 2), &ch, &spec, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn fast_path_matches_instantaneous_sinr() {
        let (cfg, ch) = drop_instance(3, 3, 0.4, 5);
        let spec = cluster_subsets(&ch).unwrap();
        let d = some_design(&spec, &ch, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fast = mc_term_rates(&d, &ch, &spec, 1.0, 200, &mut rng).unwrap();
        // replay the same draws through the reference per-term formula
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let terms = scheme_terms(&spec);
        let mut sums = vec![0.0; terms.len()];
        for k in 0..3 {
            let z = ch.error_variances(k);
            let h = ch.estimate(k);
            for _ in 0..200 {
                let e = DVector::from_fn(3, |i, _| sample_cn(z[i], &mut rng));
                for (t, (_, term)) in terms.iter().enumerate() {
                    if term.decoder == k {
                        sums[t] += (1.0 + term_sinr_instant(term, &d, &h, &e, 1.0).unwrap()).log2();
                    }
                }
            }
        }
        for (t, (_, est)) in fast.iter().enumerate() {
            assert!((est.mean - sums[t] / 200.0).abs() < 1e-10, "{t}");
        }
    }

    #[test]
    fn independent_runs_agree_within_three_sigma() {
        let (cfg, ch) = drop_instance(2, 2, 0.5, 11);
        let spec = SchemeSpec::sdma(2);
        let d = some_design(&spec, &ch, &cfg);
        let a = mc_expected_rates(&d, &ch, &spec, 1.0, None, 4000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = mc_expected_rates(&d, &ch, &spec, 1.0, None, 4000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (x, y) in a.per_ue.iter().zip(&b.per_ue) {
            assert!((x.mean - y.mean).abs() <= 3.0 * x.stderr.hypot(y.stderr), "{x:?} {y:?}");
        }
    }

    #[test]
    fn stderr_scales_with_sample_count() {
        let (cfg, ch) = drop_instance(2, 2, 0.5, 4);
        let spec = SchemeSpec::sdma(2);
        let d = some_design(&spec, &ch, &cfg);
        let a = mc_expected_rates(&d, &ch, &spec, 1.0, None, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = mc_expected_rates(&d, &ch, &spec, 1.0, None, 10000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (x, y) in a.per_ue.iter().zip(&b.per_ue) {
            let ratio = x.stderr / y.stderr;
            let expect = 10f64.sqrt();
            assert!(ratio > expect / 2.0 && ratio < expect * 2.0, "{ratio}");
        }
    }

    #[test]
    fn clipping_scales_common_rates() {
        let spec = SchemeSpec::rsma_single_common(2).unwrap();
        let alloc = RateAllocation { private: vec![1.0, 1.0], common: vec![vec![(0, 0.6), (1, 0.4)]] };
        let terms = SchemeBounds { private: vec![0.9, 1.1], common: vec![vec![(0, 0.5), (1, 0.7)]] };
        let c = clip_to_budgets(&spec, &alloc, &terms);
        assert!((c.common[0][0].1 - 0.3).abs() < 1e-12 && (c.common[0][1].1 - 0.2).abs() < 1e-12);
        assert_eq!(c.private, vec![0.9, 1.1]);
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("rsma".parse::<Scheme>().is_err());
        assert_eq!("nonrobust".parse::<Mode>().unwrap(), Mode::Nonrobust);
    }

    #[test]
    fn drop_seeds_are_reproducible_and_distinct() {
        let cfg = SystemConfig::default();
        let a = sample_drop(&cfg, DropSeeds::new(7, 3)).unwrap();
        let b = sample_drop(&cfg, DropSeeds::new(7, 3)).unwrap();
        let c = sample_drop(&cfg, DropSeeds::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.estimated, c.estimated);
    }

    #[test]
    fn single_ue_schemes_coincide() {
        let cfg = SystemConfig { num_aps: 2, num_ues: 1, ..Default::default() };
        let res = run_drop(&cfg, DropSeeds::new(1, 0), &Scheme::ALL, &[Mode::Robust], &EvalSettings {
            n_samples: 200,
            ..Default::default()
        });
        let first = res[0].as_ref().unwrap().min_rate_bound;
        for r in &res {
            let v = r.as_ref().unwrap().min_rate_bound;
            // same problem; warm-started variants only run MM further
            assert!(v >= first - 1e-6 && v - first < 1e-3, "{v} vs {first}");
        }
    }

    #[test]
    fn full_csi_error_gives_zero_rates() {
        let cfg = SystemConfig { relative_csi_error: 1.0, ..Default::default() };
        let cmp = compare_robust_nonrobust(&cfg, Scheme::Sdma, 2, 3, &EvalSettings {
            n_samples: 100,
            ..Default::default()
        })
        .unwrap();
        assert!(cmp.pairs.iter().all(|p| p.identical_designs && p.robust == 0.0 && p.nonrobust == 0.0));
    }
}
