//! Max-min rate allocation for fixed rate bounds.
//!
//! For RSMA the allocation linear program
//!
//! ```text
//! max t  s.t.  R_{p,k} + Σ_{l∈L_k} R_{c,k,l} ≥ t,  R_{p,k} ≤ a_k,
//!              Σ_{k∈S_l} R_{c,k,l} ≤ b_l,  R ≥ 0
//! ```
//!
//! is a bipartite transportation problem: for a candidate `t`, UE `k` needs
//! `max(0, t − a_k)` from the common signals it decodes, which is feasible
//! iff a max-flow saturates all demands. The optimum `t` is found by
//! bisection and the common rates are read off the final flow.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bounds::{scheme_bounds, BeamDesign, SchemeBounds, SchemeKind, SchemeSpec};
use crate::error::Result;
use crate::model::ChannelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    /// `R_{p,k}` (RSMA) or `R_k` (SDMA/NOMA).
    pub private: Vec<f64>,
    /// Per common signal `l`: `(k, R_{c,k,l})` for each `k ∈ S_l`.
    pub common: Vec<Vec<(usize, f64)>>,
}

impl RateAllocation {
    pub fn ue_rates(&self) -> Vec<f64> {
        let mut r = self.private.clone();
        for members in &self.common {
            for &(k, rate) in members {
                r[k] += rate;
            }
        }
        r
    }

    pub fn min_rate(&self) -> f64 {
        self.ue_rates().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Dense Edmonds–Karp max-flow; returns the flow value and the flow matrix.
fn max_flow(cap: &[Vec<f64>], source: usize, sink: usize) -> (f64, Vec<Vec<f64>>) {
    let n = cap.len();
    let mut flow = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    let scale = cap.iter().flatten().filter(|c| c.is_finite()).fold(0.0f64, |a, b| a.max(*b));
    let eps = 1e-15 * scale.max(1e-300);
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && cap[u][v] - flow[u][v] > eps {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            push = push.min(cap[u][v] - flow[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            flow[u][v] += push;
            flow[v][u] -= push;
            v = u;
        }
        total += push;
    }
    (total, flow)
}

struct FlowNetwork<'a> {
    private_caps: &'a [f64],
    subsets: &'a [Vec<usize>],
    budgets: &'a [f64],
}

impl FlowNetwork<'_> {
    fn solve(&self, t: f64) -> (bool, Vec<Vec<(usize, f64)>>) {
        let l_n = self.subsets.len();
        let k_n = self.private_caps.len();
        let n = l_n + k_n + 2;
        let (src, sink) = (0, n - 1);
        let mut cap = vec![vec![0.0; n]; n];
        let mut demand = 0.0;
        for (l, members) in self.subsets.iter().enumerate() {
            cap[src][1 + l] = self.budgets[l].max(0.0);
            for &k in members {
                cap[1 + l][1 + l_n + k] = f64::INFINITY;
            }
        }
        for k in 0..k_n {
            let d = (t - self.private_caps[k]).max(0.0);
            cap[1 + l_n + k][sink] = d;
            demand += d;
        }
        let (value, flow) = max_flow(&cap, src, sink);
        let feasible = value >= demand - 1e-12 * (1.0 + demand);
        let common = self
            .subsets
            .iter()
            .enumerate()
            .map(|(l, members)| members.iter().map(|&k| (k, flow[1 + l][1 + l_n + k].max(0.0))).collect())
            .collect();
        (feasible, common)
    }
}

/// Max-min allocation given private caps `a_k` and common budgets `b_l`.
/// Private rates are set to their caps; common rates cover the remaining deficits.
pub fn max_min_allocation(private_caps: &[f64], subsets: &[Vec<usize>], budgets: &[f64]) -> RateAllocation {
    let caps: Vec<f64> = private_caps.iter().map(|a| a.max(0.0)).collect();
    let net = FlowNetwork { private_caps: &caps, subsets, budgets };
    let mut lo = caps.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = (0..caps.len())
        .map(|k| {
            caps[k]
                + subsets
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.contains(&k))
                    .map(|(l, _)| budgets[l].max(0.0))
                    .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    if subsets.is_empty() || hi <= lo {
        let common = subsets.iter().map(|s| s.iter().map(|&k| (k, 0.0)).collect()).collect();
        return RateAllocation { private: caps, common };
    }
    if net.solve(hi).0 {
        lo = hi;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if net.solve(mid).0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (_, common) = net.solve(lo);
    RateAllocation { private: caps, common }
}

/// Rate allocation from a set of scheme bounds.
pub fn allocate_from_bounds(spec: &SchemeSpec, bounds: &SchemeBounds) -> RateAllocation {
    match spec.kind {
        SchemeKind::Sdma | SchemeKind::Noma => {
            RateAllocation { private: bounds.private.iter().map(|a| a.max(0.0)).collect(), common: Vec::new() }
        }
        SchemeKind::Rsma => {
            let budgets: Vec<f64> = (0..spec.num_common()).map(|l| bounds.common_budget(l)).collect();
            max_min_allocation(&bounds.private, &spec.subsets, &budgets)
        }
    }
}

/// Re-derives achievable rates for a (projected) design from its closed-form bounds.
pub fn allocate_rates_postprojection(
    design: &BeamDesign,
    channels: &ChannelSet,
    spec: &SchemeSpec,
    noise_power: f64,
) -> Result<RateAllocation> {
    let bounds = scheme_bounds(spec, design, channels, noise_power)?;
    Ok(allocate_from_bounds(spec, &bounds))
}
