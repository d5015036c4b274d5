//! Linearized (lossless) power flow and flow-pattern analysis.
//!
//! The flow model couples branch flows `f`, bus angles `θ`, and branch
//! reactances `x` through `diag(x) f = A θ` and `Aᵀ f = p`, where `A` is
//! the signed incidence matrix. Everything in this module treats `x` as
//! data or as an unknown:
//!
//! - [`solve_dcpf`] solves for `(f, θ)` given `x` and injections.
//! - [`check_uniqueness`] decides whether that solution is unique.
//! - [`check_realizability`] decides whether a target flow pattern can
//!   be produced by any positive reactance vector, and produces a
//!   circulation witness when it cannot.
//! - [`solve_reactance_for_target`] recovers a positive reactance vector
//!   that realizes a target pattern, staying close to nominal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::opt::{lp_solve, CscMatrix, LinearProgram, LpOutcome, INF};

/// Flows below this magnitude are treated as zero when orienting edges.
pub const FLOW_ZERO_TOL: f64 = 1e-9;
/// Required balance of the injection vector.
pub const BALANCE_TOL: f64 = 1e-9;
/// Relative singular-value threshold for uniqueness.
pub const SINGULARITY_TOL: f64 = 1e-10;
/// Smallest reactance produced by recovery.
pub const REACTANCE_FLOOR: f64 = 1e-4;

/// A solved flow state.
#[derive(Debug, Clone)]
pub struct DcSolution {
    pub flows: Vec<f64>,
    pub angles: Vec<f64>,
}

/// Solves `diag(x) f = A θ`, `Aᵀ f = p` for `(f, θ)` with the slack
/// angle pinned to `ref_angle`. Reactances must be nonnegative; zero
/// entries are permitted as long as the solution stays unique.
pub fn solve_dcpf(net: &Network, x: &[f64], p: &[f64], ref_angle: f64) -> Result<DcSolution> {
    let e = net.n_branches();
    let n = net.n_buses();
    assert_eq!(x.len(), e);
    assert_eq!(p.len(), n);
    if let Some(bad) = x.iter().position(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidNetwork(format!(
            "reactance {bad} is {}, expected nonnegative",
            x[bad]
        )));
    }
    let imbalance: f64 = p.iter().sum();
    if imbalance.abs() > BALANCE_TOL {
        return Err(Error::UnbalancedInjections { sum: imbalance });
    }
    if !check_uniqueness(net, x) {
        return Err(Error::SingularSystem);
    }

    // Unknowns: f (E entries) then θ (N entries). The slack balance row
    // is redundant given 1ᵀp = 0 and is replaced by the angle pin.
    let slack = net.slack();
    let dim = e + n;
    let mut m = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (idx, br) in net.branches.iter().enumerate() {
        m[(idx, idx)] = x[idx];
        m[(idx, e + br.from)] -= 1.0;
        m[(idx, e + br.to)] += 1.0;
    }
    for (idx, br) in net.branches.iter().enumerate() {
        if br.from != slack {
            m[(e + br.from, idx)] += 1.0;
        }
        if br.to != slack {
            m[(e + br.to, idx)] -= 1.0;
        }
    }
    for k in 0..n {
        if k != slack {
            rhs[e + k] = p[k];
        }
    }
    m[(e + slack, e + slack)] = 1.0;
    rhs[e + slack] = ref_angle;

    let lu = m.lu();
    let sol = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok(DcSolution {
        flows: (0..e).map(|i| sol[i]).collect(),
        angles: (0..n).map(|k| sol[e + k]).collect(),
    })
}

/// Whether the flow state for reactances `x` is unique: true when the
/// network is radial or when the cycle gram matrix `Nᵀ diag(x) N` is
/// invertible, judged by its relative smallest singular value.
pub fn check_uniqueness(net: &Network, x: &[f64]) -> bool {
    if net.is_radial() {
        return true;
    }
    let basis = net.cycle_basis();
    let gram = basis.weighted_gram(x);
    let svd = gram.svd(false, false);
    let mut smin = INF;
    let mut smax = 0.0f64;
    for s in svd.singular_values.iter() {
        smin = smin.min(*s);
        smax = smax.max(*s);
    }
    if smax == 0.0 {
        return false;
    }
    smin / smax > SINGULARITY_TOL
}

/// Verdict of [`check_realizability`].
#[derive(Debug, Clone)]
pub enum RealizabilityVerdict {
    Realizable,
    /// The target supports a circulation: `witness` is a vector
    /// `s = f ∘ n` for some cycle-space `n`, entrywise nonnegative with
    /// entries summing to one.
    NotRealizable { witness: Vec<f64> },
}

impl RealizabilityVerdict {
    pub fn is_realizable(&self) -> bool {
        matches!(self, RealizabilityVerdict::Realizable)
    }
}

/// Decides whether some positive reactance vector realizes the flow
/// pattern `f`.
///
/// Edges carrying less than [`FLOW_ZERO_TOL`] are contracted, the rest
/// are oriented along their flow, and the pattern is realizable exactly
/// when the contracted digraph is acyclic. When a cycle exists, a
/// feasibility program over cycle-space coefficients recovers a
/// normalized circulation witness.
pub fn check_realizability(net: &Network, f: &[f64]) -> Result<RealizabilityVerdict> {
    let e = net.n_branches();
    let n = net.n_buses();
    assert_eq!(f.len(), e);

    // Contract near-zero-flow edges with union-find.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (idx, br) in net.branches.iter().enumerate() {
        if f[idx].abs() <= FLOW_ZERO_TOL {
            let (a, b) = (find(&mut parent, br.from), find(&mut parent, br.to));
            if a != b {
                parent[a] = b;
            }
        }
    }

    // Directed edges between contracted components, oriented by flow.
    let mut arcs = Vec::new();
    for (idx, br) in net.branches.iter().enumerate() {
        if f[idx].abs() <= FLOW_ZERO_TOL {
            continue;
        }
        let (mut u, mut v) = (find(&mut parent, br.from), find(&mut parent, br.to));
        if f[idx] < 0.0 {
            std::mem::swap(&mut u, &mut v);
        }
        if u == v {
            // A self-loop is already a directed cycle.
            return not_realizable_with_witness(net, f);
        }
        arcs.push((u, v));
    }

    // Kahn's algorithm: a leftover node with incoming arcs means a cycle.
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in &arcs {
        indegree[v] += 1;
        out[u].push(v);
    }
    let mut queue: Vec<usize> = (0..n).filter(|&k| indegree[k] == 0).collect();
    let mut seen = 0;
    while let Some(u) = queue.pop() {
        seen += 1;
        for &v in &out[u] {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push(v);
            }
        }
    }
    if seen == n {
        Ok(RealizabilityVerdict::Realizable)
    } else {
        not_realizable_with_witness(net, f)
    }
}

/// Finds a normalized circulation witness by a feasibility program over
/// cycle coefficients `c`: the profile `s = f ∘ (N c)` must be
/// entrywise nonnegative with entries summing to one.
fn not_realizable_with_witness(net: &Network, f: &[f64]) -> Result<RealizabilityVerdict> {
    let e = net.n_branches();
    let basis = net.cycle_basis();
    let c = basis.n_cycles();

    // Row e of N scaled by f_e, as a CSC over cycle variables.
    let mut triplets = Vec::new();
    for cyc in 0..c {
        for (edge, &entry) in basis.column(cyc).iter().enumerate() {
            if entry != 0 && f[edge] != 0.0 {
                triplets.push((edge, cyc, f[edge] * entry as f64));
            }
        }
    }
    let fn_mat = CscMatrix::from_triplets(e, c, &triplets);

    // -s <= 0 rowwise, 1ᵀs = 1.
    let mut neg = Vec::new();
    for cyc in 0..c {
        let (rows, vals) = fn_mat.col(cyc);
        for (r, v) in rows.iter().zip(vals) {
            neg.push((*r, cyc, -v));
        }
    }
    let mut lp = LinearProgram::new(c);
    lp.a_ub = CscMatrix::from_triplets(e, c, &neg);
    lp.b_ub = vec![0.0; e];
    let mut sum_row = vec![0.0; c];
    for cyc in 0..c {
        let (rows, vals) = fn_mat.col(cyc);
        sum_row[cyc] = rows.iter().zip(vals).map(|(_, v)| *v).sum();
    }
    lp.a_eq = CscMatrix::from_triplets(
        1,
        c,
        &sum_row
            .iter()
            .enumerate()
            .map(|(cyc, v)| (0, cyc, *v))
            .collect::<Vec<_>>(),
    );
    lp.b_eq = vec![1.0];

    match lp_solve(&lp)? {
        LpOutcome::Optimal(sol) => {
            let s = fn_mat.mul_vec(&sol.x);
            Ok(RealizabilityVerdict::NotRealizable { witness: s })
        }
        other => Err(Error::SolverFault(format!(
            "circulation detected but witness program returned {other:?}"
        ))),
    }
}

/// Result of [`solve_reactance_for_target`].
#[derive(Debug, Clone)]
pub struct ReactanceRecovery {
    pub x: Vec<f64>,
    pub angles: Vec<f64>,
    /// `‖x - x°‖₁`, the objective of the recovery program.
    pub deviation_l1: f64,
}

/// Recovers reactances `x >= REACTANCE_FLOOR` realizing the target
/// pattern `f` while minimizing `‖x - x°‖₁`. Fails with
/// [`Error::NotRealizable`] when no such vector exists.
pub fn solve_reactance_for_target(net: &Network, f: &[f64]) -> Result<ReactanceRecovery> {
    let e = net.n_branches();
    let n = net.n_buses();
    assert_eq!(f.len(), e);
    let x0 = net.x_nominal();
    let slack = net.slack();

    // Variables: x (E), θ (N), t (E) with t >= |x - x°|.
    let nv = 2 * e + n;
    let mut lp = LinearProgram::new(nv);
    for i in 0..e {
        lp.objective[e + n + i] = 1.0;
        lp.lower[i] = REACTANCE_FLOOR;
        lp.upper[i] = INF;
        lp.lower[e + n + i] = 0.0;
        lp.upper[e + n + i] = INF;
    }
    // θ free except the slack pin.
    lp.lower[e + slack] = 0.0;
    lp.upper[e + slack] = 0.0;

    // diag(f) x - A θ = 0.
    let mut eq = Vec::new();
    for (idx, br) in net.branches.iter().enumerate() {
        if f[idx] != 0.0 {
            eq.push((idx, idx, f[idx]));
        }
        eq.push((idx, e + br.from, -1.0));
        eq.push((idx, e + br.to, 1.0));
    }
    lp.a_eq = CscMatrix::from_triplets(e, nv, &eq);
    lp.b_eq = vec![0.0; e];

    // x - t <= x° and -x - t <= -x°.
    let mut ub = Vec::new();
    let mut b_ub = Vec::new();
    for i in 0..e {
        ub.push((2 * i, i, 1.0));
        ub.push((2 * i, e + n + i, -1.0));
        b_ub.push(x0[i]);
        ub.push((2 * i + 1, i, -1.0));
        ub.push((2 * i + 1, e + n + i, -1.0));
        b_ub.push(-x0[i]);
    }
    lp.a_ub = CscMatrix::from_triplets(2 * e, nv, &ub);
    lp.b_ub = b_ub;

    match lp_solve(&lp)? {
        LpOutcome::Optimal(sol) => Ok(ReactanceRecovery {
            x: sol.x[..e].to_vec(),
            angles: sol.x[e..e + n].to_vec(),
            deviation_l1: sol.objective,
        }),
        LpOutcome::Infeasible => Err(Error::NotRealizable),
        LpOutcome::Unbounded => Err(Error::SolverFault(
            "reactance recovery program is unbounded".into(),
        )),
    }
}

/// Squared Euclidean distance between a target pattern and a reference,
/// used to rank scenarios by how far they sit from nominal conditions.
pub fn difficulty(f_target: &[f64], f_reference: &[f64]) -> f64 {
    assert_eq!(f_target.len(), f_reference.len());
    f_target
        .iter()
        .zip(f_reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Flow state at nominal reactances and the case dispatch, with the
/// slack unit absorbing any active-power imbalance.
pub fn nominal_dc_flows(net: &Network) -> Result<DcSolution> {
    let (p_demand, _) = net.nominal_demand();
    let p_gen: Vec<f64> = net.generators.iter().map(|g| g.p_nominal).collect();
    let mut p = net.injections(&p_gen, &p_demand);
    let imbalance: f64 = p.iter().sum();
    p[net.slack()] -= imbalance;
    solve_dcpf(net, &net.x_nominal(), &p, 0.0)
}
