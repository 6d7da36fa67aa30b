//! Closed-form Jensen lower bounds on the expected rates and the instantaneous
//! SINRs they bound, for SDMA, NOMA and RSMA.
//!
//! Every rate expression has the same shape: a decoding UE, the stream it is
//! decoding, and the set of streams it still treats as interference. The
//! closed-form bound replaces the random error terms by their means,
//!
//! ```text
//! σ² + Σ_i z_{k,i} (ω_i + Σ_s V_s[i,i]) + ĥ_kᴴ (Ω + Σ_{s ∈ interferers} V_s) ĥ_k,
//! ```
//!
//! while the instantaneous SINR keeps the self-interference `e_kᴴ V_sig e_k`
//! and evaluates the interference on `h_k = ĥ_k + e_k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChannelSet;

/// Floor applied to interference-plus-noise denominators.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;
const HERMITIAN_TOL: f64 = 1e-9;
const PSD_TOL: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Sdma,
    Noma,
    Rsma,
}

/// Multiple-access scheme together with its decoding structure.
///
/// Streams are indexed `0..K` for the private (or single-layer) streams and
/// `K + l` for common stream `l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub num_ues: usize,
    /// NOMA decoding order: position → UE.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noma_order: Vec<usize>,
    /// RSMA common-signal subsets, each sorted ascending.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsets: Vec<Vec<usize>>,
    /// RSMA per-UE SIC order over the common signals containing that UE.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decoding_orders: Vec<Vec<usize>>,
}

impl SchemeSpec {
    pub fn sdma(num_ues: usize) -> Self {
        Self {
            kind: SchemeKind::Sdma,
            num_ues,
            noma_order: Vec::new(),
            subsets: Vec::new(),
            decoding_orders: Vec::new(),
        }
    }

    pub fn noma(order: Vec<usize>) -> Result<Self> {
        let spec = Self {
            kind: SchemeKind::Noma,
            num_ues: order.len(),
            noma_order: order,
            subsets: Vec::new(),
            decoding_orders: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// RSMA with the given common subsets; per-UE decoding orders sort the
    /// subsets containing each UE by non-increasing cardinality, ties by
    /// ascending subset index.
    pub fn rsma(num_ues: usize, subsets: Vec<Vec<usize>>) -> Result<Self> {
        let subsets: Vec<Vec<usize>> = subsets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect();
        let decoding_orders = (0..num_ues)
            .map(|k| {
                let mut ls: Vec<usize> =
                    (0..subsets.len()).filter(|&l| subsets[l].contains(&k)).collect();
                ls.sort_by(|&a, &b| subsets[b].len().cmp(&subsets[a].len()).then(a.cmp(&b)));
                ls
            })
            .collect();
        let spec = Self {
            kind: SchemeKind::Rsma,
            num_ues,
            noma_order: Vec::new(),
            subsets,
            decoding_orders,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// RSMA with one common signal decoded by every UE.
    pub fn rsma_single_common(num_ues: usize) -> Result<Self> {
        Self::rsma(num_ues, vec![(0..num_ues).collect()])
    }

    pub fn num_common(&self) -> usize {
        match self.kind {
            SchemeKind::Rsma => self.subsets.len(),
            _ => 0,
        }
    }

    pub fn num_streams(&self) -> usize {
        self.num_ues + self.num_common()
    }

    pub fn common_stream(&self, l: usize) -> usize {
        self.num_ues + l
    }

    /// UE set served by each stream (private streams serve their own UE).
    pub fn stream_users(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.num_ues).map(|k| vec![k]).collect();
        out.extend(self.subsets.iter().take(self.num_common()).cloned());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let k_n = self.num_ues;
        if k_n == 0 {
            return Err(Error::InvalidConfig("scheme needs at least one UE".into()));
        }
        match self.kind {
            SchemeKind::Sdma => Ok(()),
            SchemeKind::Noma => {
                let mut seen = vec![false; k_n];
                if self.noma_order.len() != k_n {
                    return Err(Error::InvalidConfig("NOMA order must list every UE".into()));
                }
                for &u in &self.noma_order {
                    if u >= k_n || seen[u] {
                        return Err(Error::InvalidConfig("NOMA order is not a permutation".into()));
                    }
                    seen[u] = true;
                }
                Ok(())
            }
            SchemeKind::Rsma => {
                for (l, s) in self.subsets.iter().enumerate() {
                    if s.len() < 2 {
                        return Err(Error::InvalidConfig(format!("common subset {l} has fewer than 2 UEs")));
                    }
                    if s.iter().any(|&k| k >= k_n) || s.windows(2).any(|w| w[0] == w[1]) {
                        return Err(Error::InvalidConfig(format!("common subset {l} is malformed")));
                    }
                    if self.subsets[..l].contains(s) {
                        return Err(Error::InvalidConfig(format!("common subset {l} is duplicated")));
                    }
                }
                if self.decoding_orders.len() != k_n {
                    return Err(Error::InvalidConfig("one decoding order per UE required".into()));
                }
                for (k, order) in self.decoding_orders.iter().enumerate() {
                    let mut expected: Vec<usize> =
                        (0..self.subsets.len()).filter(|&l| self.subsets[l].contains(&k)).collect();
                    let mut got = order.clone();
                    got.sort_unstable();
                    expected.sort_unstable();
                    if got != expected {
                        return Err(Error::InvalidConfig(format!("decoding order of UE {k} does not cover L_k")));
                    }
                    if order.windows(2).any(|w| self.subsets[w[0]].len() < self.subsets[w[1]].len()) {
                        return Err(Error::InvalidConfig(format!(
                            "decoding order of UE {k} is not cardinality non-increasing"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Per-stream transmit covariances plus per-AP quantization noise powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamDesign {
    pub covariances: Vec<DMatrix<Complex64>>,
    pub quant_noise: Vec<f64>,
}

impl BeamDesign {
    /// Symmetrizes each covariance and checks it is PSD within tolerance.
    pub fn new(covariances: Vec<DMatrix<Complex64>>, quant_noise: Vec<f64>) -> Result<Self> {
        let m = quant_noise.len();
        let mut out = Vec::with_capacity(covariances.len());
        for v in covariances {
            if v.shape() != (m, m) {
                return Err(Error::Dimension(format!("covariance {:?} for {m} APs", v.shape())));
            }
            let asym = (&v - v.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
            let scale = v.iter().map(|c| c.norm()).fold(1.0, f64::max);
            if asym > HERMITIAN_TOL * scale {
                return Err(Error::InvalidConfig(format!("covariance not Hermitian (asymmetry {asym:e})")));
            }
            let v = hermitian_part(&v);
            let min_eig = min_eigenvalue(&v);
            if min_eig < PSD_TOL * scale {
                return Err(Error::NotPsd(min_eig));
            }
            out.push(v);
        }
        if quant_noise.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig("quantization noise powers must be nonnegative".into()));
        }
        Ok(Self { covariances: out, quant_noise })
    }

    /// Rank-1 design `V_s = v_s v_sᴴ`.
    pub fn from_beams(beams: &[DVector<Complex64>], quant_noise: Vec<f64>) -> Result<Self> {
        let covs = beams.iter().map(|v| v * v.adjoint()).collect();
        Self::new(covs, quant_noise)
    }

    pub fn zeros(num_streams: usize, num_aps: usize) -> Self {
        Self {
            covariances: vec![DMatrix::zeros(num_aps, num_aps); num_streams],
            quant_noise: vec![0.0; num_aps],
        }
    }

    pub fn num_streams(&self) -> usize {
        self.covariances.len()
    }

    pub fn num_aps(&self) -> usize {
        self.quant_noise.len()
    }

    /// Beamformed signal power `Σ_s V_s[i,i]` at AP `i`.
    pub fn signal_power(&self, ap: usize) -> f64 {
        self.covariances.iter().map(|v| v[(ap, ap)].re).sum()
    }

    pub fn signal_powers(&self) -> Vec<f64> {
        (0..self.num_aps()).map(|i| self.signal_power(i)).collect()
    }

    /// Total per-AP power `Σ_s V_s[i,i] + ω_i`.
    pub fn ap_powers(&self) -> Vec<f64> {
        (0..self.num_aps()).map(|i| self.signal_power(i) + self.quant_noise[i]).collect()
    }

    pub fn power_feasible(&self, tx_power: f64, tol: f64) -> bool {
        self.ap_powers().iter().all(|p| *p <= tx_power + tol)
    }

    pub fn fronthaul_feasible(&self, beta: f64, tol: f64) -> bool {
        (0..self.num_aps()).all(|i| self.quant_noise[i] >= beta * self.signal_power(i) - tol)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.covariances.iter().all(|v| min_eigenvalue(v) >= -tol)
    }
}

pub(crate) fn hermitian_part(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (v + v.adjoint()).scale(0.5)
}

pub fn min_eigenvalue(v: &DMatrix<Complex64>) -> f64 {
    if v.nrows() == 0 {
        return 0.0;
    }
    v.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `Re(hᴴ V h)`.
pub fn quad_form(h: &DVector<Complex64>, v: &DMatrix<Complex64>) -> f64 {
    let vh = v * h;
    h.iter().zip(vh.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// One rate expression: the UE doing the decoding, the stream being decoded
/// and the streams that remain as interference at that point of the SIC chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateTerm {
    pub decoder: usize,
    pub signal: usize,
    pub interferers: Vec<usize>,
}

/// What a [`RateTerm`] is used for inside its scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermRole {
    /// SDMA rate of UE `k`.
    Sdma { ue: usize },
    /// NOMA: decoder at position `l` decoding the stream at position `k`.
    Noma { l: usize, k: usize },
    /// RSMA: UE `ue` decoding common signal `l`.
    Common { ue: usize, l: usize },
    /// RSMA: UE `ue` decoding its private stream.
    Private { ue: usize },
}

pub fn sdma_term(num_ues: usize, k: usize) -> RateTerm {
    RateTerm { decoder: k, signal: k, interferers: (0..num_ues).filter(|&m| m != k).collect() }
}

pub fn noma_term(spec: &SchemeSpec, l: usize, k: usize) -> Result<RateTerm> {
    let k_n = spec.num_ues;
    if spec.kind != SchemeKind::Noma || k > l || l >= k_n {
        return Err(Error::InvalidIndex(format!("NOMA pair (l = {l}, k = {k}) with K = {k_n}")));
    }
    let pi = &spec.noma_order;
    Ok(RateTerm { decoder: pi[l], signal: pi[k], interferers: pi[k + 1..].to_vec() })
}

/// Common signals UE `k` has not yet decoded when decoding common signal `l`.
pub fn undecoded_after(spec: &SchemeSpec, k: usize, l: usize) -> Result<Vec<usize>> {
    let order = &spec.decoding_orders[k];
    let pos = order
        .iter()
        .position(|&x| x == l)
        .ok_or_else(|| Error::InvalidIndex(format!("UE {k} is not in common subset {l}")))?;
    Ok(order[pos + 1..].to_vec())
}

pub fn rsma_common_term(spec: &SchemeSpec, k: usize, l: usize) -> Result<RateTerm> {
    if spec.kind != SchemeKind::Rsma || k >= spec.num_ues || l >= spec.num_common() {
        return Err(Error::InvalidIndex(format!("RSMA common term (k = {k}, l = {l})")));
    }
    let q = undecoded_after(spec, k, l)?;
    let mut interferers: Vec<usize> = (0..spec.num_ues).collect();
    for j in 0..spec.num_common() {
        if !spec.subsets[j].contains(&k) || q.contains(&j) {
            interferers.push(spec.common_stream(j));
        }
    }
    Ok(RateTerm { decoder: k, signal: spec.common_stream(l), interferers })
}

pub fn rsma_private_term(spec: &SchemeSpec, k: usize) -> Result<RateTerm> {
    if spec.kind != SchemeKind::Rsma || k >= spec.num_ues {
        return Err(Error::InvalidIndex(format!("RSMA private term (k = {k})")));
    }
    let mut interferers: Vec<usize> = (0..spec.num_ues).filter(|&m| m != k).collect();
    for j in 0..spec.num_common() {
        if !spec.subsets[j].contains(&k) {
            interferers.push(spec.common_stream(j));
        }
    }
    Ok(RateTerm { decoder: k, signal: k, interferers })
}

/// Every rate expression the scheme's max-min problem constrains.
pub fn scheme_terms(spec: &SchemeSpec) -> Vec<(TermRole, RateTerm)> {
    let k_n = spec.num_ues;
    let mut out = Vec::new();
    match spec.kind {
        SchemeKind::Sdma => {
            for k in 0..k_n {
                out.push((TermRole::Sdma { ue: k }, sdma_term(k_n, k)));
            }
        }
        SchemeKind::Noma => {
            for k in 0..k_n {
                for l in k..k_n {
                    out.push((TermRole::Noma { l, k }, noma_term(spec, l, k).expect("valid pair")));
                }
            }
        }
        SchemeKind::Rsma => {
            for l in 0..spec.num_common() {
                for &k in &spec.subsets[l] {
                    out.push((TermRole::Common { ue: k, l }, rsma_common_term(spec, k, l).expect("k in S_l")));
                }
            }
            for k in 0..k_n {
                out.push((TermRole::Private { ue: k }, rsma_private_term(spec, k).expect("valid UE")));
            }
        }
    }
    out
}

fn check_dims(term: &RateTerm, design: &BeamDesign, channels: &ChannelSet) -> Result<()> {
    if design.num_aps() != channels.num_aps() {
        return Err(Error::Dimension(format!(
            "design has {} APs, channels {}",
            design.num_aps(),
            channels.num_aps()
        )));
    }
    if term.decoder >= channels.num_ues() {
        return Err(Error::InvalidIndex(format!("UE {}", term.decoder)));
    }
    let s_n = design.num_streams();
    if term.signal >= s_n || term.interferers.iter().any(|&s| s >= s_n) {
        return Err(Error::Dimension(format!("term references stream beyond {s_n}")));
    }
    Ok(())
}

/// Mean interference-plus-noise power of a term (the bound's denominator).
pub fn mean_interference(
    term: &RateTerm,
    design: &BeamDesign,
    channels: &ChannelSet,
    noise_power: f64,
) -> Result<f64> {
    check_dims(term, design, channels)?;
    let k = term.decoder;
    let h = channels.estimate(k);
    let mut total = noise_power;
    for i in 0..design.num_aps() {
        let z = channels.error_variance[(k, i)];
        total += z * (design.quant_noise[i] + design.signal_power(i));
        total += h[i].norm_sqr() * design.quant_noise[i];
    }
    for &s in &term.interferers {
        total += quad_form(&h, &design.covariances[s]);
    }
    Ok(total)
}

fn log2_rate(signal: f64, denominator: f64) -> Result<f64> {
    if denominator < -1e-9 {
        return Err(Error::NegativeDenominator(denominator));
    }
    let sinr = signal.max(0.0) / denominator.max(DENOMINATOR_FLOOR);
    Ok(sinr.ln_1p() / std::f64::consts::LN_2)
}

/// Closed-form lower bound (bits/s/Hz) of one rate term.
pub fn term_bound(
    term: &RateTerm,
    design: &BeamDesign,
    channels: &ChannelSet,
    noise_power: f64,
) -> Result<f64> {
    let den = mean_interference(term, design, channels, noise_power)?;
    let sig = quad_form(&channels.estimate(term.decoder), &design.covariances[term.signal]);
    log2_rate(sig, den)
}

/// Instantaneous SINR of one rate term for a single error realization.
pub fn term_sinr_instant(
    term: &RateTerm,
    design: &BeamDesign,
    h_hat: &DVector<Complex64>,
    error: &DVector<Complex64>,
    noise_power: f64,
) -> Result<f64> {
    let m = design.num_aps();
    if h_hat.len() != m || error.len() != m {
        return Err(Error::Dimension(format!("channel vectors must have {m} entries")));
    }
    let h = h_hat + error;
    let sig = quad_form(h_hat, &design.covariances[term.signal]);
    let mut den = noise_power + quad_form(error, &design.covariances[term.signal]);
    for i in 0..m {
        den += h[i].norm_sqr() * design.quant_noise[i];
    }
    for &s in &term.interferers {
        den += quad_form(&h, &design.covariances[s]);
    }
    if den < -1e-9 {
        return Err(Error::NegativeDenominator(den));
    }
    Ok(sig.max(0.0) / den.max(DENOMINATOR_FLOOR))
}

pub fn sdma_rate_lb(k: usize, design: &BeamDesign, channels: &ChannelSet, noise_power: f64) -> Result<f64> {
    if k >= channels.num_ues() || design.num_streams() != channels.num_ues() {
        return Err(Error::Dimension("SDMA needs one stream per UE".into()));
    }
    term_bound(&sdma_term(channels.num_ues(), k), design, channels, noise_power)
}

pub fn sdma_sinr_instant(
    k: usize,
    design: &BeamDesign,
    h_hat: &DVector<Complex64>,
    error: &DVector<Complex64>,
    noise_power: f64,
) -> Result<f64> {
    let k_n = design.num_streams();
    if k >= k_n {
        return Err(Error::InvalidIndex(format!("UE {k}")));
    }
    term_sinr_instant(&sdma_term(k_n, k), design, h_hat, error, noise_power)
}

/// `f_{l,k}` with `l`, `k` zero-based positions in the NOMA order.
pub fn noma_rate_lb(
    l: usize,
    k: usize,
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<f64> {
    term_bound(&noma_term(spec, l, k)?, design, channels, noise_power)
}

pub fn noma_sinr_instant(
    l: usize,
    k: usize,
    design: &BeamDesign,
    h_hat: &DVector<Complex64>,
    error: &DVector<Complex64>,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<f64> {
    term_sinr_instant(&noma_term(spec, l, k)?, design, h_hat, error, noise_power)
}

pub fn rsma_common_lb(
    k: usize,
    l: usize,
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<f64> {
    term_bound(&rsma_common_term(spec, k, l)?, design, channels, noise_power)
}

pub fn rsma_private_lb(
    k: usize,
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<f64> {
    term_bound(&rsma_private_term(spec, k)?, design, channels, noise_power)
}

pub fn rsma_sinr_instant_common(
    k: usize,
    l: usize,
    design: &BeamDesign,
    h_hat: &DVector<Complex64>,
    error: &DVector<Complex64>,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<f64> {
    term_sinr_instant(&rsma_common_term(spec, k, l)?, design, h_hat, error, noise_power)
}

pub fn rsma_sinr_instant_private(
    k: usize,
    design: &BeamDesign,
    h_hat: &DVector<Complex64>,
    error: &DVector<Complex64>,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<f64> {
    term_sinr_instant(&rsma_private_term(spec, k)?, design, h_hat, error, noise_power)
}

/// All closed-form bounds of a scheme, grouped the way its rate constraints use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeBounds {
    /// SDMA: `f_k`. NOMA: per-UE `min_l f_{l,k}`. RSMA: private `f_{p,k}`.
    pub private: Vec<f64>,
    /// RSMA only: per common signal, `(ue, f_{c,ue,l})` for each member.
    pub common: Vec<Vec<(usize, f64)>>,
}

impl SchemeBounds {
    /// Common-rate budget `min_{k ∈ S_l} f_{c,k,l}`.
    pub fn common_budget(&self, l: usize) -> f64 {
        self.common[l].iter().map(|(_, f)| *f).fold(f64::INFINITY, f64::min)
    }
}

/// Assembles per-role values (bounds or expectations) into the scheme's rate structure.
pub fn assemble_scheme_values(
    spec: &SchemeSpec,
    values: impl IntoIterator<Item = (TermRole, f64)>,
) -> SchemeBounds {
    let mut private = vec![f64::INFINITY; spec.num_ues];
    let mut common: Vec<Vec<(usize, f64)>> = vec![Vec::new(); spec.num_common()];
    for (role, v) in values {
        match role {
            TermRole::Sdma { ue } | TermRole::Private { ue } => private[ue] = v,
            TermRole::Noma { k, .. } => {
                let ue = spec.noma_order[k];
                private[ue] = private[ue].min(v);
            }
            TermRole::Common { ue, l } => common[l].push((ue, v)),
        }
    }
    SchemeBounds { private, common }
}

pub fn scheme_bounds(
    spec: &SchemeSpec,
    design: &BeamDesign,
    channels: &ChannelSet,
    noise_power: f64,
) -> Result<SchemeBounds> {
    let mut vals = Vec::new();
    for (role, term) in scheme_terms(spec) {
        vals.push((role, term_bound(&term, design, channels, noise_power)?));
    }
    Ok(assemble_scheme_values(spec, vals))
}
