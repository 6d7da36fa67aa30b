//! Log-barrier interior-point method for the convex MM subproblems.
//!
//! Problems have the form
//!
//! ```text
//! maximize   cᵀx
//! subject to aⱼᵀx + bⱼ ≥ 0                       (linear)
//!            wⱼ·ln(pⱼᵀx + p₀ⱼ) + qⱼᵀx + q₀ⱼ ≥ 0     (concave log, wⱼ > 0)
//!            V_b(x) ≻ 0                            (Hermitian PSD blocks)
//! ```
//!
//! and are solved by damped Newton centering along the central path with a
//! duality-gap bound of `m/τ`. Strict feasibility of the start is required;
//! [`find_interior`] produces one by a phase-I problem when necessary.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use super::layout::{read_hermitian, sandwich_basis, trace_against_basis};

/// Cholesky factor `L` of a Hermitian positive definite matrix. Unlike the
/// generic complex factorization, pivots are checked to be real and positive.
struct HermitianCholesky {
    l: DMatrix<Complex64>,
}

impl HermitianCholesky {
    fn new(a: &DMatrix<Complex64>) -> Option<Self> {
        let n = a.nrows();
        let mut l = DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = Complex64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l })
    }

    fn logdet(&self) -> f64 {
        2.0 * (0..self.l.nrows()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    fn inverse(&self) -> DMatrix<Complex64> {
        let n = self.l.nrows();
        let linv = self
            .l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("positive pivots");
        linv.adjoint() * linv
    }
}

/// Sparse affine function `Σ coeffs + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn from_dense(coeffs: &[f64], constant: f64) -> Self {
        let terms = coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(i, c)| (i, *c)).collect();
        Self { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(i, c)| c * x[*i]).sum::<f64>() + self.constant
    }

    pub fn add_term(&mut self, idx: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == idx) {
            t.1 += c;
        } else {
            self.terms.push((idx, c));
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { terms: self.terms.iter().map(|(i, c)| (*i, c * s)).collect(), constant: self.constant * s }
    }

    /// `self + s·other`.
    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        for (i, c) in &other.terms {
            self.add_term(*i, c * s);
        }
        self.constant += s * other.constant;
    }
}

/// `weight·ln(arg(x)) + lin(x) ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogConstraint {
    pub weight: f64,
    pub arg: Affine,
    pub lin: Affine,
}

impl LogConstraint {
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        let a = self.arg.eval(x);
        if a > 0.0 {
            Some(self.weight * a.ln() + self.lin.eval(x))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsdBlock {
    pub offset: usize,
    pub dim: usize,
    /// Optional variable `s` making the constraint `V + s·I ≻ 0` (phase I).
    pub shift: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub num_vars: usize,
    /// Maximized linear objective.
    pub objective: Affine,
    pub linear: Vec<Affine>,
    pub concave: Vec<LogConstraint>,
    pub psd: Vec<PsdBlock>,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierSettings {
    /// Stop once the duality-gap bound `m/τ` is below this.
    pub gap_tolerance: f64,
    pub initial_tau: f64,
    pub tau_growth: f64,
    pub newton_tolerance: f64,
    pub max_newton_per_center: usize,
    pub max_total_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-9,
            initial_tau: 1.0,
            tau_growth: 20.0,
            newton_tolerance: 1e-10,
            max_newton_per_center: 80,
            max_total_newton: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub gap_bound: f64,
    pub newton_steps: usize,
    /// False when centering stalled before reaching the requested gap.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierError {
    InfeasibleStart,
    NoInterior { best_shift: f64 },
    Numerical(String),
}

impl std::fmt::Display for BarrierError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BarrierError::InfeasibleStart => write!(f, "starting point is not strictly feasible"),
            BarrierError::NoInterior { best_shift } => {
                write!(f, "no strictly feasible point found (phase-I shift {best_shift:e})")
            }
            BarrierError::Numerical(s) => write!(f, "numerical failure: {s}"),
        }
    }
}

impl Program {
    /// Total barrier degree `m` (one per scalar constraint, `dim` per PSD block).
    pub fn degree(&self) -> f64 {
        (self.linear.len() + self.concave.len() + self.psd.iter().map(|b| b.dim).sum::<usize>()) as f64
    }

    fn psd_matrix(&self, block: &PsdBlock, x: &[f64]) -> DMatrix<Complex64> {
        let mut v = read_hermitian(&x[block.offset..block.offset + block.dim * block.dim], block.dim);
        if let Some(s) = block.shift {
            for i in 0..block.dim {
                v[(i, i)] += Complex64::new(x[s], 0.0);
            }
        }
        v
    }

    /// Smallest slack over the scalar constraints and whether every PSD block is positive definite.
    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.linear.iter().all(|a| a.eval(x) > 0.0)
            && self.concave.iter().all(|c| c.eval(x).is_some_and(|v| v > 0.0))
            && self.psd.iter().all(|b| HermitianCholesky::new(&self.psd_matrix(b, x)).is_some())
    }

    /// Barrier value `-Σ ln(slacks) - Σ ln det V_b`, or `None` outside the domain.
    fn barrier_value(&self, x: &[f64]) -> Option<f64> {
        let mut phi = 0.0;
        for a in &self.linear {
            let v = a.eval(x);
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
        }
        for c in &self.concave {
            let v = c.eval(x)?;
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
        }
        for b in &self.psd {
            phi -= HermitianCholesky::new(&self.psd_matrix(b, x))?.logdet();
        }
        phi.is_finite().then_some(phi)
    }

    /// Gradient and Hessian of the barrier at a strictly feasible point.
    fn barrier_derivatives(&self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.num_vars;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for a in &self.linear {
            let v = a.eval(x);
            for &(i, ci) in &a.terms {
                g[i] -= ci / v;
                for &(j, cj) in &a.terms {
                    h[(i, j)] += ci * cj / (v * v);
                }
            }
        }
        let mut grad_c: Vec<(usize, f64)> = Vec::new();
        for c in &self.concave {
            let p = c.arg.eval(x);
            let v = c.eval(x)?;
            // ∇g = (w/p)·∇arg + ∇lin
            grad_c.clear();
            for &(i, ci) in &c.arg.terms {
                grad_c.push((i, c.weight * ci / p));
            }
            for &(i, ci) in &c.lin.terms {
                if let Some(t) = grad_c.iter_mut().find(|t| t.0 == i) {
                    t.1 += ci;
                } else {
                    grad_c.push((i, ci));
                }
            }
            for &(i, gi) in &grad_c {
                g[i] -= gi / v;
                for &(j, gj) in &grad_c {
                    h[(i, j)] += gi * gj / (v * v);
                }
            }
            let curv = c.weight / (p * p * v);
            for &(i, ci) in &c.arg.terms {
                for &(j, cj) in &c.arg.terms {
                    h[(i, j)] += curv * ci * cj;
                }
            }
        }
        for b in &self.psd {
            let d = b.dim;
            let len = d * d;
            let w = HermitianCholesky::new(&self.psd_matrix(b, x))?.inverse();
            let mut tr = vec![0.0; len];
            trace_against_basis(&w, &mut tr);
            for p in 0..len {
                g[b.offset + p] -= tr[p];
            }
            let mut row = vec![0.0; len];
            let mut shift_col = vec![0.0; len];
            for p in 0..len {
                let xp = sandwich_basis(&w, p);
                trace_against_basis(&xp, &mut row);
                for q in 0..len {
                    h[(b.offset + p, b.offset + q)] += row[q];
                }
                if b.shift.is_some() {
                    shift_col[p] = (0..d).map(|i| xp[(i, i)].re).sum();
                }
            }
            if let Some(s) = b.shift {
                let trw: f64 = (0..d).map(|i| w[(i, i)].re).sum();
                g[s] -= trw;
                let ww = &w * &w;
                h[(s, s)] += (0..d).map(|i| ww[(i, i)].re).sum::<f64>();
                for p in 0..len {
                    h[(b.offset + p, s)] += shift_col[p];
                    h[(s, b.offset + p)] += shift_col[p];
                }
            }
        }
        Some((g, h))
    }
}

fn solve_newton(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        if reg > 0.0 {
            for i in 0..n {
                m[(i, i)] += reg * scale;
            }
        }
        if let Some(chol) = Cholesky::<f64, Dyn>::new(m) {
            let d = chol.solve(rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    None
}

/// Newton centering at fixed `τ` on `-τ·cᵀx + φ(x)`. Returns the step count and
/// whether the Newton decrement reached tolerance.
fn center(
    prog: &Program,
    x: &mut Vec<f64>,
    tau: f64,
    settings: &BarrierSettings,
    budget: usize,
    stop: &mut dyn FnMut(&[f64]) -> bool,
) -> Result<(usize, bool, bool), BarrierError> {
    let merit = |x: &[f64]| prog.barrier_value(x).map(|phi| phi - tau * prog.objective.eval(x));
    let mut f = merit(x).ok_or(BarrierError::InfeasibleStart)?;
    let mut steps = 0;
    for _ in 0..settings.max_newton_per_center.min(budget.max(1)) {
        let (mut g, h) = prog
            .barrier_derivatives(x)
            .ok_or_else(|| BarrierError::Numerical("derivatives outside domain".into()))?;
        for &(i, c) in &prog.objective.terms {
            g[i] -= tau * c;
        }
        let d = solve_newton(&h, &(-&g)).ok_or_else(|| BarrierError::Numerical("singular Newton system".into()))?;
        let decrement = -g.dot(&d);
        if !(decrement.is_finite()) {
            return Err(BarrierError::Numerical("non-finite Newton decrement".into()));
        }
        // at large τ the merit carries round-off of order eps·|f|, below which
        // Newton cannot make further progress
        let floor = settings.newton_tolerance.max(1e3 * f64::EPSILON * f.abs());
        if decrement / 2.0 <= floor {
            return Ok((steps, true, false));
        }
        let mut t = 1.0;
        let slope = g.dot(&d);
        let mut accepted = false;
        while t > 1e-14 {
            let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            if let Some(ft) = merit(&trial) {
                if ft <= f + 0.25 * t * slope {
                    *x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        steps += 1;
        if !accepted {
            return Ok((steps, false, false));
        }
        if stop(x) {
            return Ok((steps, true, true));
        }
    }
    Ok((steps, false, false))
}

fn run_barrier(
    prog: &Program,
    x0: &[f64],
    settings: &BarrierSettings,
    stop: &mut dyn FnMut(&[f64]) -> bool,
) -> Result<(BarrierResult, bool), BarrierError> {
    if !prog.is_strictly_feasible(x0) {
        return Err(BarrierError::InfeasibleStart);
    }
    let m = prog.degree().max(1.0);
    let mut x = x0.to_vec();
    let mut tau = settings.initial_tau;
    let mut total = 0;
    let mut converged = true;
    loop {
        let (steps, centered, stopped) =
            center(prog, &mut x, tau, settings, settings.max_total_newton - total, stop)?;
        total += steps;
        if stopped {
            let objective = prog.objective.eval(&x);
            return Ok((BarrierResult { x, objective, gap_bound: m / tau, newton_steps: total, converged }, true));
        }
        if !centered {
            converged = false;
        }
        if m / tau <= settings.gap_tolerance || total >= settings.max_total_newton {
            if total >= settings.max_total_newton {
                converged = false;
            }
            break;
        }
        tau *= settings.tau_growth;
    }
    let objective = prog.objective.eval(&x);
    Ok((BarrierResult { x, objective, gap_bound: m / tau, newton_steps: total, converged }, false))
}

/// Maximizes the program from a strictly feasible start.
pub fn solve(prog: &Program, x0: &[f64], settings: &BarrierSettings) -> Result<BarrierResult, BarrierError> {
    run_barrier(prog, x0, settings, &mut |_| false).map(|(r, _)| r)
}

/// Finds a strictly feasible point near `x0` by minimizing a common slack `s`
/// added to every constraint (and to the PSD blocks' diagonals).
pub fn find_interior(prog: &Program, x0: &[f64], settings: &BarrierSettings) -> Result<Vec<f64>, BarrierError> {
    if prog.is_strictly_feasible(x0) {
        return Ok(x0.to_vec());
    }
    let n = prog.num_vars;
    let s_idx = n;
    let mut aug = Program {
        num_vars: n + 1,
        objective: Affine { terms: vec![(s_idx, -1.0)], constant: 0.0 },
        linear: Vec::with_capacity(prog.linear.len() + 1),
        concave: Vec::with_capacity(prog.concave.len()),
        psd: Vec::with_capacity(prog.psd.len()),
    };
    let mut worst: f64 = 0.0;
    for a in &prog.linear {
        let mut a2 = a.clone();
        a2.add_term(s_idx, 1.0);
        worst = worst.max(-a.eval(x0));
        aug.linear.push(a2);
    }
    for c in &prog.concave {
        let mut c2 = c.clone();
        c2.lin.add_term(s_idx, 1.0);
        let v = c.eval(x0).ok_or(BarrierError::InfeasibleStart)?;
        worst = worst.max(-v);
        aug.concave.push(c2);
    }
    for b in &prog.psd {
        let v = prog.psd_matrix(b, x0);
        worst = worst.max(-crate::bounds::min_eigenvalue(&v));
        aug.psd.push(PsdBlock { shift: Some(s_idx), ..*b });
    }
    let s0 = worst.abs() + 1.0;
    // keeps phase I bounded below
    aug.linear.push(Affine { terms: vec![(s_idx, 1.0)], constant: s0 });
    let mut start = x0.to_vec();
    start.push(s0);
    let margin = 1e-9 * (1.0 + s0);
    let mut stop = |x: &[f64]| x[s_idx] < -margin && prog.is_strictly_feasible(&x[..n]);
    let phase1 = BarrierSettings { gap_tolerance: settings.gap_tolerance.min(1e-10), ..*settings };
    let (res, _) = run_barrier(&aug, &start, &phase1, &mut stop)?;
    let x = res.x[..n].to_vec();
    if res.x[s_idx] < 0.0 && prog.is_strictly_feasible(&x) {
        Ok(x)
    } else {
        Err(BarrierError::NoInterior { best_shift: res.x[s_idx] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(terms: &[(usize, f64)], c: f64) -> Affine {
        Affine { terms: terms.to_vec(), constant: c }
    }

    #[test]
    fn small_linear_program() {
        // max x + y s.t. x ≥ 0, y ≥ 0, 1 - x - 2y ≥ 0, 1 - 2x - y ≥ 0 → x = y = 1/3
        let prog = Program {
            num_vars: 2,
            objective: lin(&[(0, 1.0), (1, 1.0)], 0.0),
            linear: vec![
                lin(&[(0, 1.0)], 0.0),
                lin(&[(1, 1.0)], 0.0),
                lin(&[(0, -1.0), (1, -2.0)], 1.0),
                lin(&[(0, -2.0), (1, -1.0)], 1.0),
            ],
            ..Default::default()
        };
        let r = solve(&prog, &[0.1, 0.1], &BarrierSettings::default()).unwrap();
        assert!(r.converged);
        assert!((r.objective - 2.0 / 3.0).abs() < 1e-8, "{}", r.objective);
    }

    #[test]
    fn log_constraint_matches_closed_form() {
        // max t s.t. ln(1 + x) - t ≥ 0, 2 - x ≥ 0 → t = ln 3
        let prog = Program {
            num_vars: 2,
            objective: lin(&[(1, 1.0)], 0.0),
            linear: vec![lin(&[(0, -1.0)], 2.0)],
            concave: vec![LogConstraint { weight: 1.0, arg: lin(&[(0, 1.0)], 1.0), lin: lin(&[(1, -1.0)], 0.0) }],
            psd: vec![],
        };
        let r = solve(&prog, &[0.5, -1.0], &BarrierSettings::default()).unwrap();
        assert!((r.objective - 3f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn psd_block_trace_maximization() {
        // max Re(hᴴVh) s.t. tr V ≤ 1, V ⪰ 0 → largest eigenvalue of hhᴴ = ‖h‖²
        use super::super::layout::quad_coefficients;
        use nalgebra::DVector;
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8)]);
        let q = quad_coefficients(&h);
        let prog = Program {
            num_vars: 4,
            objective: Affine::from_dense(&q, 0.0),
            linear: vec![lin(&[(0, -1.0), (3, -1.0)], 1.0)],
            concave: vec![],
            psd: vec![PsdBlock { offset: 0, dim: 2, shift: None }],
        };
        let r = solve(&prog, &[0.25, 0.0, 0.0, 0.25], &BarrierSettings::default()).unwrap();
        assert!((r.objective - h.norm_squared()).abs() < 1e-7, "{} vs {}", r.objective, h.norm_squared());
    }

    #[test]
    fn phase_one_finds_interior_point() {
        let prog = Program {
            num_vars: 2,
            objective: lin(&[(0, 1.0)], 0.0),
            linear: vec![lin(&[(0, 1.0)], -1.0), lin(&[(1, 1.0)], -2.0), lin(&[(0, -1.0), (1, -1.0)], 4.0)],
            ..Default::default()
        };
        let x = find_interior(&prog, &[0.0, 0.0], &BarrierSettings::default()).unwrap();
        assert!(prog.is_strictly_feasible(&x));
        let empty = Program {
            num_vars: 1,
            objective: lin(&[(0, 1.0)], 0.0),
            linear: vec![lin(&[(0, 1.0)], -1.0), lin(&[(0, -1.0)], 1.0)],
            ..Default::default()
        };
        assert!(matches!(
            find_interior(&empty, &[0.0], &BarrierSettings::default()),
            Err(BarrierError::NoInterior { .. })
        ));
    }

    #[test]
    fn hermitian_cholesky_rejects_indefinite() {
        let c = |re, im| Complex64::new(re, im);
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)]);
        assert!(HermitianCholesky::new(&bad).is_none());
        let good = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let f = HermitianCholesky::new(&good).unwrap();
        assert!((f.logdet() - 3f64.ln()).abs() < 1e-14);
        let eye = &good * f.inverse();
        assert!((eye - DMatrix::identity(2, 2)).iter().all(|z| z.norm() < 1e-14));
    }
}
