//! Exhaustive placement oracle: enumerates every controller pattern and
//! prices each one with a bound-encoded range program, independent of the
//! production binary-coupled formulation.

use super::oracle_realizable;
use flowctl_core::net::Network;
use flowctl_core::opt::{lp_solve, CscMatrix, LinearProgram, LpOutcome};

const FLOOR: f64 = 1e-4;

/// Minimum total range for one fixed placement, or `None` if infeasible.
/// Encodes the placement through variable bounds alone: unselected lines
/// are pinned to nominal, selected lines range freely. This is a
/// different encoding from the production program, which couples ranges
/// to binaries through inequality rows.
pub fn placement_lp(net: &Network, flows: &[Vec<f64>], x0: &[f64], d: &[bool]) -> Option<f64> {
    let e = net.n_branches();
    let n = net.n_buses();
    let s_count = flows.len();
    let nv = 2 * e + s_count * (e + n);
    let idx_lo = |i: usize| i;
    let idx_hi = |i: usize| e + i;
    let idx_xs = |s: usize, i: usize| 2 * e + s * (e + n) + i;
    let idx_th = |s: usize, b: usize| 2 * e + s * (e + n) + e + b;

    let mut lp = LinearProgram::new(nv);
    for i in 0..e {
        lp.objective[idx_lo(i)] = -1.0;
        lp.objective[idx_hi(i)] = 1.0;
        if d[i] {
            lp.lower[idx_lo(i)] = 0.0;
            lp.upper[idx_lo(i)] = x0[i];
            lp.lower[idx_hi(i)] = x0[i];
            lp.upper[idx_hi(i)] = 2.0 * x0[i];
        } else {
            lp.lower[idx_lo(i)] = x0[i];
            lp.upper[idx_lo(i)] = x0[i];
            lp.lower[idx_hi(i)] = x0[i];
            lp.upper[idx_hi(i)] = x0[i];
        }
        for s in 0..s_count {
            if d[i] {
                lp.lower[idx_xs(s, i)] = FLOOR.min(x0[i]);
                lp.upper[idx_xs(s, i)] = 2.0 * x0[i];
            } else {
                lp.lower[idx_xs(s, i)] = x0[i];
                lp.upper[idx_xs(s, i)] = x0[i];
            }
        }
    }

    let mut eq = Vec::new();
    let mut ub = Vec::new();
    let mut b_ub = Vec::new();
    for s in 0..s_count {
        for (i, br) in net.branches.iter().enumerate() {
            let row = s * e + i;
            if flows[s][i] != 0.0 {
                eq.push((row, idx_xs(s, i), flows[s][i]));
            }
            eq.push((row, idx_th(s, br.from), -1.0));
            eq.push((row, idx_th(s, br.to), 1.0));

            let r = b_ub.len();
            ub.push((r, idx_lo(i), 1.0));
            ub.push((r, idx_xs(s, i), -1.0));
            b_ub.push(0.0);
            let r = b_ub.len();
            ub.push((r, idx_xs(s, i), 1.0));
            ub.push((r, idx_hi(i), -1.0));
            b_ub.push(0.0);
        }
    }
    lp.a_eq = CscMatrix::from_triplets(s_count * e, nv, &eq);
    lp.b_eq = vec![0.0; s_count * e];
    lp.a_ub = CscMatrix::from_triplets(b_ub.len(), nv, &ub);
    lp.b_ub = b_ub;

    match lp_solve(&lp).unwrap() {
        LpOutcome::Optimal(sol) => Some(sol.objective),
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => panic!("placement LP is box-bounded"),
    }
}

/// Best objective over every placement within budget, by enumeration.
pub fn oracle_best(net: &Network, flows: &[Vec<f64>], x0: &[f64], k: usize) -> Option<f64> {
    let e = net.n_branches();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << e) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let d: Vec<bool> = (0..e).map(|i| mask >> i & 1 == 1).collect();
        if let Some(obj) = placement_lp(net, flows, x0, &d) {
            if best.is_none_or(|b| obj < b) {
                best = Some(obj);
            }
        }
    }
    best
}

/// Flow patterns that are realizable within ±100% by construction:
/// solve the flow model at a perturbed reactance vector.
pub fn realizable_flows(
    r: &mut rand_chacha::ChaCha8Rng,
    net: &Network,
    count: usize,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let x_true: Vec<f64> = net
                .branches
                .iter()
                .map(|br| br.x_nominal * r.gen_range(0.5..1.5))
                .collect();
            let p = balanced_injections(r, net.n_buses());
            laplacian_flows(net, &x_true, &p, 0.0).0
        })
        .collect()
}
