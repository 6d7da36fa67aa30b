//! Affine forms of the rate expressions over the design vector and their
//! first-order (MM) minorants.
//!
//! Each rate is `log₂(I + S) − log₂(I)` with `I` (interference plus noise) and
//! `S` (signal) affine in `(V, ω)`. The surrogate keeps the concave first log
//! and replaces the second by its tangent at the reference `I⁰`:
//!
//! ```text
//! f̃ = log₂(I + S) − log₂(I⁰) − (I − I⁰) / (ln2 · I⁰)
//! ```

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::barrier::{Affine, LogConstraint};
use super::layout::{quad_coefficients, DesignLayout};
use crate::bounds::{scheme_terms, BeamDesign, RateTerm, SchemeSpec, TermRole};
use crate::error::{Error, Result};
use crate::model::ChannelSet;

/// Affine signal and interference-plus-noise powers of one rate term.
pub fn term_affine(
    term: &RateTerm,
    layout: &DesignLayout,
    channels: &ChannelSet,
    noise_power: f64,
) -> (Affine, Affine) {
    let k = term.decoder;
    let m = layout.num_aps;
    let h = channels.estimate(k);
    let q = quad_coefficients(&h);
    let block = layout.block_len();

    let mut signal = Affine::default();
    for (p, c) in q.iter().enumerate() {
        signal.add_term(layout.stream_offset(term.signal) + p, *c);
    }

    let mut interference = Affine::constant(noise_power);
    for i in 0..m {
        let z = channels.error_variance[(k, i)];
        interference.add_term(layout.omega(i), z + h[i].norm_sqr());
        for s in 0..layout.num_streams {
            interference.add_term(layout.diag(s, i), z);
        }
    }
    for &s in &term.interferers {
        for p in 0..block {
            interference.add_term(layout.stream_offset(s) + p, q[p]);
        }
    }
    (signal, interference)
}

#[derive(Debug, Clone)]
pub struct LinearizedTerm {
    pub role: TermRole,
    pub signal: Affine,
    pub interference: Affine,
    /// Interference-plus-noise `I⁰` at the reference point.
    pub ref_interference: f64,
}

impl LinearizedTerm {
    /// The exact bound `f` in bits/s/Hz.
    pub fn original(&self, x: &[f64]) -> f64 {
        let i = self.interference.eval(x);
        let s = self.signal.eval(x);
        ((i + s) / i).ln() / LN_2
    }

    pub fn surrogate(&self, x: &[f64]) -> f64 {
        let i = self.interference.eval(x);
        let s = self.signal.eval(x);
        let i0 = self.ref_interference;
        ((i + s).ln() - i0.ln() - (i - i0) / i0) / LN_2
    }

    pub fn surrogate_gradient(&self, x: &[f64], len: usize) -> Vec<f64> {
        let i = self.interference.eval(x);
        let s = self.signal.eval(x);
        let i0 = self.ref_interference;
        let mut g = vec![0.0; len];
        for (idx, c) in &self.interference.terms {
            g[*idx] += c * (1.0 / (i + s) - 1.0 / i0) / LN_2;
        }
        for (idx, c) in &self.signal.terms {
            g[*idx] += c / ((i + s) * LN_2);
        }
        g
    }

    /// Constraint `f̃(x) + rates(x) ≥ 0` in the barrier solver's form.
    pub fn to_log_constraint(&self, rates: &Affine) -> LogConstraint {
        let mut arg = self.interference.clone();
        arg.add_scaled(&self.signal, 1.0);
        let i0 = self.ref_interference;
        let mut lin = self.interference.scaled(-1.0 / (LN_2 * i0));
        lin.constant += 1.0 / LN_2 - i0.ln() / LN_2;
        lin.add_scaled(rates, 1.0);
        LogConstraint { weight: 1.0 / LN_2, arg, lin }
    }
}

/// Convex subproblem of one MM iteration.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub layout: DesignLayout,
    pub spec: SchemeSpec,
    pub terms: Vec<LinearizedTerm>,
    pub tx_power: f64,
    pub beta: f64,
    /// Reference design as a vector.
    pub reference: Vec<f64>,
}

/// Scenario data the subproblem needs beyond the design.
#[derive(Debug, Clone, Copy)]
pub struct PowerModel {
    pub noise_power: f64,
    pub tx_power: f64,
    pub beta: f64,
}

pub fn check_feasible(design: &BeamDesign, power: &PowerModel, tol: f64) -> Result<()> {
    if !design.power_feasible(power.tx_power, tol) {
        return Err(Error::InvalidConfig(format!(
            "design violates per-AP power: {:?} > {}",
            design.ap_powers(),
            power.tx_power
        )));
    }
    if !design.fronthaul_feasible(power.beta, tol) {
        return Err(Error::InvalidConfig("design violates fronthaul constraint".into()));
    }
    if !design.is_psd(1e-8) {
        return Err(Error::NotPsd(
            design.covariances.iter().map(crate::bounds::min_eigenvalue).fold(f64::INFINITY, f64::min),
        ));
    }
    Ok(())
}

/// Builds the surrogate rate constraints around a feasible reference design.
pub fn linearize_constraints(
    reference: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    power: &PowerModel,
    feasibility_tolerance: f64,
) -> Result<Subproblem> {
    if reference.num_streams() != spec.num_streams() || reference.num_aps() != channels.num_aps() {
        return Err(Error::Dimension(format!(
            "reference has {} streams / {} APs; scheme needs {} / {}",
            reference.num_streams(),
            reference.num_aps(),
            spec.num_streams(),
            channels.num_aps()
        )));
    }
    check_feasible(reference, power, feasibility_tolerance)?;
    let layout = DesignLayout::new(spec.num_streams(), channels.num_aps());
    let x0 = layout.to_vector(reference);
    let terms = scheme_terms(spec)
        .into_iter()
        .map(|(role, term)| {
            let (signal, interference) = term_affine(&term, &layout, channels, power.noise_power);
            let ref_interference = interference.eval(&x0);
            LinearizedTerm { role, signal, interference, ref_interference }
        })
        .collect();
    Ok(Subproblem {
        layout,
        spec: spec.clone(),
        terms,
        tx_power: power.tx_power,
        beta: power.beta,
        reference: x0,
    })
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iterate: usize,
    pub objective: f64,
    pub surrogate_objective: f64,
    pub newton_steps: usize,
    pub phase_one: bool,
    pub converged: bool,
}
