//! Majorization-minimization design of beamforming covariances and
//! quantization noise for the max-min rate problems.

pub mod allocation;
pub mod barrier;
pub mod layout;
pub mod projection;
pub mod subproblem;
pub mod surrogate;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use allocation::{allocate_from_bounds, allocate_rates_postprojection, max_min_allocation, RateAllocation};
pub use projection::rank1_project;
pub use subproblem::{solve_subproblem, SubproblemSolution};
pub use surrogate::{linearize_constraints, IterationTrace, LinearizedTerm, PowerModel, Subproblem};

use crate::bounds::{scheme_bounds, BeamDesign, SchemeSpec};
use crate::error::{Error, Result};
use crate::model::{ChannelSet, SystemConfig};
use barrier::BarrierSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// MM stops once the objective moves by at most this (bits/s/Hz).
    pub epsilon: f64,
    pub max_iters: usize,
    /// Duality-gap target of each convex subproblem.
    pub gap_tolerance: f64,
    pub feasibility_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iters: 100, gap_tolerance: 1e-9, feasibility_tolerance: 1e-7 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.gap_tolerance > 0.0 && self.feasibility_tolerance > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig("solver tolerances must be positive and max_iters ≥ 1".into()));
        }
        Ok(())
    }

    fn barrier(&self) -> BarrierSettings {
        BarrierSettings { gap_tolerance: self.gap_tolerance, ..Default::default() }
    }
}

impl PowerModel {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        Ok(Self { noise_power: cfg.noise_power, tx_power: cfg.tx_power, beta: cfg.beta()? })
    }
}

/// Final state of an MM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmState {
    /// Index of the last iterate (the initial point is iterate 1).
    pub iterations: usize,
    pub design: BeamDesign,
    /// Max-min allocation of the closed-form bounds at `design`.
    pub rates: RateAllocation,
    pub objective: f64,
    /// Objective of every iterate, starting with the initial point.
    pub history: Vec<f64>,
    pub converged: bool,
    pub trace: Vec<IterationTrace>,
}

/// NOMA decoding order: ascending estimated gain `‖ĥ_k‖²`, ties by UE index.
pub fn noma_decoding_order(channels: &ChannelSet) -> Vec<usize> {
    let gains: Vec<f64> = (0..channels.num_ues()).map(|k| channels.gain(k)).collect();
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[a].total_cmp(&gains[b]).then(a.cmp(&b)));
    order
}

/// Matched-filter initial point scaled so the most loaded AP spends
/// `P_tx/(1+β)` on signal, with `ω_i = β · signal_i` at every AP.
pub fn init_design(spec: &SchemeSpec, channels: &ChannelSet, power: &PowerModel) -> BeamDesign {
    let m = channels.num_aps();
    let mut covariances: Vec<DMatrix<Complex64>> = spec
        .stream_users()
        .iter()
        .map(|users| {
            let mut g = DVector::<Complex64>::zeros(m);
            for &k in users {
                let h = channels.estimate(k);
                let n = h.norm();
                if n > 0.0 {
                    g += h.unscale(n);
                }
            }
            let n = g.norm();
            if n > 1e-12 {
                let g = g.unscale(n);
                &g * g.adjoint()
            } else {
                DMatrix::identity(m, m).unscale(m as f64)
            }
        })
        .collect();
    let load = (0..m)
        .map(|i| covariances.iter().map(|v| v[(i, i)].re).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = power.tx_power / ((1.0 + power.beta) * load);
    for v in &mut covariances {
        *v *= Complex64::new(scale, 0.0);
    }
    let mut design = BeamDesign { covariances, quant_noise: vec![0.0; m] };
    for i in 0..m {
        design.quant_noise[i] = power.beta * design.signal_power(i);
    }
    design
}

/// Carries a design over to another scheme: private streams are copied, common
/// streams are copied when the target has the same subset and zero otherwise.
pub fn embed_design(source: &BeamDesign, from: &SchemeSpec, to: &SchemeSpec) -> Result<BeamDesign> {
    if from.num_ues != to.num_ues || source.num_streams() != from.num_streams() {
        return Err(Error::Dimension("warm start between incompatible schemes".into()));
    }
    let m = source.num_aps();
    let mut covariances = source.covariances[..to.num_ues].to_vec();
    for l in 0..to.num_common() {
        let found = (0..from.num_common()).find(|&j| from.subsets[j] == to.subsets[l]);
        covariances.push(match found {
            Some(j) => source.covariances[from.common_stream(j)].clone(),
            None => DMatrix::zeros(m, m),
        });
    }
    Ok(BeamDesign { covariances, quant_noise: source.quant_noise.clone() })
}

/// Max-min objective and allocation of the closed-form bounds at a design.
pub fn evaluate_objective(
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<(f64, RateAllocation)> {
    let bounds = scheme_bounds(spec, design, channels, noise_power)?;
    let alloc = allocate_from_bounds(spec, &bounds);
    Ok((alloc.min_rate(), alloc))
}

/// True when some UE's estimated channel is too weak to carry any rate, in
/// which case every design has max-min objective (numerically) zero.
fn has_degenerate_ue(channels: &ChannelSet, power: &PowerModel) -> bool {
    (0..channels.num_ues()).any(|k| channels.gain(k) * power.tx_power < 1e-12 * power.noise_power)
}

/// MM from the matched-filter initial point.
pub fn mm_optimize(
    spec: &SchemeSpec,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    settings: &SolverSettings,
) -> Result<MmState> {
    let power = PowerModel::from_config(cfg)?;
    let start = init_design(spec, channels, &power);
    mm_optimize_from(spec, channels, &power, settings, start)
}

/// MM from a given feasible design.
pub fn mm_optimize_from(
    spec: &SchemeSpec,
    channels: &ChannelSet,
    power: &PowerModel,
    settings: &SolverSettings,
    start: BeamDesign,
) -> Result<MmState> {
    spec.validate()?;
    settings.validate()?;
    if spec.num_ues != channels.num_ues() {
        return Err(Error::Dimension(format!("scheme has {} UEs, channels {}", spec.num_ues, channels.num_ues())));
    }
    let barrier = settings.barrier();
    let (objective, rates) = evaluate_objective(&start, channels, spec, power.noise_power)?;
    let mut state = MmState {
        iterations: 1,
        design: start,
        rates,
        objective,
        history: vec![objective],
        converged: false,
        trace: Vec::new(),
    };
    if has_degenerate_ue(channels, power) {
        state.converged = true;
        return Ok(state);
    }
    while state.iterations <= settings.max_iters {
        let iterate = state.iterations + 1;
        let sub = linearize_constraints(&state.design, channels, spec, power, settings.feasibility_tolerance)?;
        let sol = solve_subproblem(&sub, &barrier, iterate)?;
        let (objective, rates) = evaluate_objective(&sol.design, channels, spec, power.noise_power)?;
        let trace = IterationTrace {
            iterate,
            objective,
            surrogate_objective: sol.objective,
            newton_steps: sol.newton_steps,
            phase_one: sol.phase_one,
            converged: sol.converged,
        };
        log::debug!(
            "mm iterate={} objective={:.9} surrogate={:.9} newton={} phase1={} status={}",
            iterate,
            objective,
            sol.objective,
            sol.newton_steps,
            sol.phase_one,
            if sol.converged { "ok" } else { "stalled" }
        );
        let delta = (objective - state.objective).abs();
        state.trace.push(trace);
        state.history.push(objective);
        state.iterations = iterate;
        state.design = sol.design;
        state.rates = rates;
        state.objective = objective;
        if delta <= settings.epsilon {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn noma_order_examples() {
        let est = DMatrix::from_row_slice(3, 1, &[c(3f64.sqrt(), 0.0), c(1.0, 0.0), c(0.0, 2f64.sqrt())]);
        let ch = ChannelSet::new(est, DMatrix::zeros(3, 1)).unwrap();
        assert_eq!(noma_decoding_order(&ch), vec![1, 2, 0]);
        let est = DMatrix::from_element(3, 2, c(1.0, 0.0));
        let ch = ChannelSet::new(est, DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(noma_decoding_order(&ch), vec![0, 1, 2]);
    }

    #[test]
    fn init_scalar_case() {
        let ch = ChannelSet::new(DMatrix::from_element(1, 1, c(0.5, 0.2)), DMatrix::zeros(1, 1)).unwrap();
        let power = PowerModel { noise_power: 1.0, tx_power: 10.0, beta: 1.0 / 3.0 };
        let d = init_design(&SchemeSpec::sdma(1), &ch, &power);
        assert!((d.covariances[0][(0, 0)].re - 10.0 / (4.0 / 3.0)).abs() < 1e-12);
        assert!((d.quant_noise[0] - (1.0 / 3.0) * 10.0 / (4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn init_splits_power_evenly_at_beta_one() {
        let est = DMatrix::from_row_slice(2, 3, &[c(1.0, 0.0), c(0.2, 0.1), c(0.0, 0.5), c(0.3, 0.0), c(1.0, -1.0), c(0.1, 0.0)]);
        let ch = ChannelSet::new(est, DMatrix::zeros(2, 3)).unwrap();
        let power = PowerModel { noise_power: 1.0, tx_power: 8.0, beta: 1.0 };
        let d = init_design(&SchemeSpec::sdma(2), &ch, &power);
        let sig = d.signal_powers();
        let max = sig.iter().cloned().fold(0.0, f64::max);
        assert!((max - 4.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((d.quant_noise[i] - sig[i]).abs() < 1e-12);
        }
        assert!(d.power_feasible(8.0, 1e-12));
    }

    #[test]
    fn init_zero_channels_falls_back_to_identity() {
        let ch = ChannelSet::new(DMatrix::zeros(2, 2), DMatrix::from_element(2, 2, 1.0)).unwrap();
        let power = PowerModel { noise_power: 1.0, tx_power: 2.0, beta: 1.0 };
        let d = init_design(&SchemeSpec::sdma(2), &ch, &power);
        for v in &d.covariances {
            assert!((v - DMatrix::identity(2, 2).scale(0.5).map(|x| c(x, 0.0))).iter().all(|x| x.norm() < 1e-12));
        }
    }

    #[test]
    fn embedding_copies_matching_subsets() {
        let from = SchemeSpec::rsma_single_common(3).unwrap();
        let to = SchemeSpec::rsma(3, vec![vec![0, 1], vec![0, 1, 2]]).unwrap();
        let mut src = BeamDesign::zeros(4, 2);
        src.covariances[3] = DMatrix::identity(2, 2).map(|x| c(x, 0.0));
        let out = embed_design(&src, &from, &to).unwrap();
        assert_eq!(out.num_streams(), 5);
        assert_eq!(out.covariances[4], src.covariances[3]);
        assert!(out.covariances[3].iter().all(|x| x.norm() == 0.0));
    }
}
