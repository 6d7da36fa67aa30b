use super::allocation::RateAllocation;
use super::barrier::{self, Affine, BarrierSettings, Program, PsdBlock};
use super::surrogate::Subproblem;
use crate::bounds::{BeamDesign, SchemeKind, TermRole};
use crate::error::{Error, Result};

/// Variable layout of the subproblem: design block, RSMA common rates, then `t`.
struct RateVars {
    /// `common[l][j]` is the variable of `R_{c, S_l[j], l}`.
    common: Vec<Vec<usize>>,
    t: usize,
    len: usize,
}

impl RateVars {
    fn new(sub: &Subproblem) -> Self {
        let mut next = sub.layout.len();
        let common = sub
            .spec
            .subsets
            .iter()
            .take(sub.spec.num_common())
            .map(|s| {
                s.iter()
                    .map(|_| {
                        next += 1;
                        next - 1
                    })
                    .collect()
            })
            .collect();
        Self { common, t: next, len: next + 1 }
    }

    /// Rate combination that must not exceed the surrogate of `role`.
    fn demand(&self, sub: &Subproblem, role: TermRole) -> Affine {
        let mut a = Affine::default();
        match role {
            TermRole::Sdma { .. } | TermRole::Noma { .. } => a.add_term(self.t, -1.0),
            TermRole::Private { ue } => {
                a.add_term(self.t, -1.0);
                for (l, members) in sub.spec.subsets.iter().enumerate() {
                    if let Some(j) = members.iter().position(|&k| k == ue) {
                        a.add_term(self.common[l][j], 1.0);
                    }
                }
            }
            TermRole::Common { l, .. } => {
                for &v in &self.common[l] {
                    a.add_term(v, -1.0);
                }
            }
        }
        a
    }
}

fn build_program(sub: &Subproblem, vars: &RateVars) -> Program {
    let layout = &sub.layout;
    let mut prog = Program {
        num_vars: vars.len,
        objective: Affine { terms: vec![(vars.t, 1.0)], constant: 0.0 },
        ..Default::default()
    };
    for i in 0..layout.num_aps {
        let mut power = Affine::constant(sub.tx_power);
        let mut fronthaul = Affine::default();
        for s in 0..layout.num_streams {
            power.add_term(layout.diag(s, i), -1.0);
            fronthaul.add_term(layout.diag(s, i), -sub.beta);
        }
        power.add_term(layout.omega(i), -1.0);
        fronthaul.add_term(layout.omega(i), 1.0);
        prog.linear.push(power);
        prog.linear.push(fronthaul);
    }
    for v in vars.common.iter().flatten() {
        prog.linear.push(Affine { terms: vec![(*v, 1.0)], constant: 0.0 });
    }
    for term in &sub.terms {
        prog.concave.push(term.to_log_constraint(&vars.demand(sub, term.role)));
    }
    for s in 0..layout.num_streams {
        prog.psd.push(PsdBlock { offset: layout.stream_offset(s), dim: layout.num_aps, shift: None });
    }
    prog
}

/// Strictly interior design obtained by mixing in a little of a centered design.
fn blended_start(sub: &Subproblem, weight: f64) -> Vec<f64> {
    let layout = &sub.layout;
    let s_n = layout.num_streams as f64;
    let c = sub.tx_power / (2.0 * s_n * (1.0 + sub.beta));
    let mut center = vec![0.0; layout.len()];
    for s in 0..layout.num_streams {
        for i in 0..layout.num_aps {
            center[layout.diag(s, i)] = c;
        }
    }
    for i in 0..layout.num_aps {
        center[layout.omega(i)] = sub.beta * s_n * c + 0.25 * sub.tx_power;
    }
    sub.reference.iter().zip(&center).map(|(r, c)| (1.0 - weight) * r + weight * c).collect()
}

/// Fills the rate variables and `t` so that the rate constraints hold strictly when possible.
fn with_rates(sub: &Subproblem, vars: &RateVars, design: &[f64]) -> Vec<f64> {
    let mut x = design.to_vec();
    x.resize(vars.len, 0.0);
    for (l, members) in vars.common.iter().enumerate() {
        let budget = sub
            .terms
            .iter()
            .filter(|t| matches!(t.role, TermRole::Common { l: tl, .. } if tl == l))
            .map(|t| t.surrogate(design))
            .fold(f64::INFINITY, f64::min);
        let share = if budget > 0.0 { budget / (2.0 * members.len() as f64) } else { 0.0 };
        for &v in members {
            x[v] = share;
        }
    }
    reset_t(sub, vars, x)
}

/// Sets `t` one unit below its tightest private constraint, keeping the common rates.
fn reset_t(sub: &Subproblem, vars: &RateVars, mut x: Vec<f64>) -> Vec<f64> {
    let design = &x[..sub.layout.len()];
    let mut t = f64::INFINITY;
    for term in &sub.terms {
        if matches!(term.role, TermRole::Common { .. }) {
            continue;
        }
        let mut demand = vars.demand(sub, term.role);
        demand.terms.retain(|(i, _)| *i != vars.t);
        t = t.min(term.surrogate(design) + demand.eval(&x));
    }
    x[vars.t] = t - 1.0;
    x
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub design: BeamDesign,
    /// Rates as carried by the subproblem's variables (surrogate level).
    pub rates: RateAllocation,
    pub objective: f64,
    pub gap_bound: f64,
    pub newton_steps: usize,
    pub phase_one: bool,
    pub converged: bool,
}

/// Solves one convexified max-min problem over relaxed (rank-free) covariances.
pub fn solve_subproblem(sub: &Subproblem, settings: &BarrierSettings, iterate: usize) -> Result<SubproblemSolution> {
    let vars = RateVars::new(sub);
    let prog = build_program(sub, &vars);
    let fail = |reason: String| Error::Solver { iterate, reason };

    let mut start = None;
    for weight in [1e-4, 1e-2, 0.1] {
        let x = with_rates(sub, &vars, &blended_start(sub, weight));
        if prog.is_strictly_feasible(&x) {
            start = Some(x);
            break;
        }
    }
    let phase_one = start.is_none();
    let start = match start {
        Some(x) => x,
        None => {
            let x = with_rates(sub, &vars, &blended_start(sub, 1e-2));
            let x = barrier::find_interior(&prog, &x, settings).map_err(|e| fail(e.to_string()))?;
            // phase I leaves `t` unbounded below; re-derive it from the interior design
            reset_t(sub, &vars, x)
        }
    };
    let res = barrier::solve(&prog, &start, settings).map_err(|e| fail(e.to_string()))?;

    let x = &res.x;
    let design = sub.layout.to_design(&x[..sub.layout.len()]);
    let k_n = sub.spec.num_ues;
    let mut private = vec![f64::INFINITY; k_n];
    for term in &sub.terms {
        let v = term.surrogate(&x[..sub.layout.len()]);
        match term.role {
            TermRole::Sdma { ue } | TermRole::Private { ue } => private[ue] = private[ue].min(v),
            TermRole::Noma { k, .. } => {
                let ue = sub.spec.noma_order[k];
                private[ue] = private[ue].min(v);
            }
            TermRole::Common { .. } => {}
        }
    }
    let private = private.into_iter().map(|v| v.max(0.0)).collect();
    let common = match sub.spec.kind {
        SchemeKind::Rsma => sub
            .spec
            .subsets
            .iter()
            .zip(&vars.common)
            .map(|(members, idx)| members.iter().zip(idx).map(|(&k, &v)| (k, x[v].max(0.0))).collect())
            .collect(),
        _ => Vec::new(),
    };
    Ok(SubproblemSolution {
        design,
        rates: RateAllocation { private, common },
        objective: res.objective,
        gap_bound: res.gap_bound,
        newton_steps: res.newton_steps,
        phase_one,
        converged: res.converged,
    })
}
