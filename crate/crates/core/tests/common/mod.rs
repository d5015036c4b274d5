//! Shared fixtures and independent reference implementations used by the
//! integration suites. Everything here deliberately avoids the library's
//! own solution paths: flows come from a reduced Laplacian solve,
//! uniqueness from dense SVD of the full block system, and realizability
//! from a feasibility program in (x, θ) space.

#![allow(dead_code)]

pub mod ac_oracle;
pub mod siting_oracle;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowctl_core::net::{Branch, Bus, BusKind, Generator, Network};
use flowctl_core::opt::{lp_solve, CscMatrix, LinearProgram, LpOutcome, INF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected random network: a spanning tree plus `extra` chords, unit
/// demands zeroed, a single slack generator at bus 0.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Network {
    assert!(n >= 2);
    let mut branches = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        branches.push(make_branch(parent, i, rng.gen_range(0.05..2.0)));
    }
    let mut added = 0;
    let mut guard = 0;
    while added < extra && guard < 50 * (extra + 1) {
        guard += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        branches.push(make_branch(a, b, rng.gen_range(0.05..2.0)));
        added += 1;
    }
    let buses = (0..n)
        .map(|id| Bus {
            id,
            kind: if id == 0 { BusKind::Slack } else { BusKind::Pq },
            p_demand: 0.0,
            q_demand: 0.0,
            v_setpoint: 1.0,
        })
        .collect();
    let generators = vec![Generator {
        bus: 0,
        p_min: -100.0,
        p_max: 100.0,
        cost_quadratic: 1.0,
        p_nominal: 0.0,
    }];
    Network::new(buses, branches, generators, 100.0).unwrap()
}

fn make_branch(from: usize, to: usize, x: f64) -> Branch {
    Branch {
        from,
        to,
        r: 0.0,
        x_nominal: x,
        b_charging: 0.0,
        tap: 1.0,
        f_rating: 50.0,
    }
}

/// Random injections summing to zero.
pub fn balanced_injections(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean: f64 = p.iter().sum::<f64>() / n as f64;
    for v in &mut p {
        *v -= mean;
    }
    p
}

/// Reference flow solve through the reduced weighted Laplacian:
/// `B = Aᵀ diag(1/x) A`, slack row and column deleted, then
/// `f = diag(1/x) A θ`. Requires strictly positive reactances.
pub fn laplacian_flows(net: &Network, x: &[f64], p: &[f64], ref_angle: f64) -> (Vec<f64>, Vec<f64>) {
    let n = net.n_buses();
    let e = net.n_branches();
    let slack = net.slack();
    let mut b = DMatrix::zeros(n, n);
    for (idx, br) in net.branches.iter().enumerate() {
        let w = 1.0 / x[idx];
        b[(br.from, br.from)] += w;
        b[(br.to, br.to)] += w;
        b[(br.from, br.to)] -= w;
        b[(br.to, br.from)] -= w;
    }
    let keep: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
    let mut b_red = DMatrix::zeros(n - 1, n - 1);
    let mut p_red = DVector::zeros(n - 1);
    for (i, &ki) in keep.iter().enumerate() {
        p_red[i] = p[ki];
        for (j, &kj) in keep.iter().enumerate() {
            b_red[(i, j)] = b[(ki, kj)];
        }
    }
    let th_red = b_red.lu().solve(&p_red).expect("reduced system solvable");
    let mut theta = vec![ref_angle; n];
    for (i, &ki) in keep.iter().enumerate() {
        theta[ki] = th_red[i] + ref_angle;
    }
    let flows = (0..e)
        .map(|idx| {
            let br = &net.branches[idx];
            (theta[br.from] - theta[br.to]) / x[idx]
        })
        .collect();
    (flows, theta)
}

/// Relative smallest singular value of the full block system
/// `[diag(x), -A; P Aᵀ, I_slack]` used by the flow solver. The solution
/// is unique exactly when this matrix is nonsingular.
pub fn full_system_sigma_ratio(net: &Network, x: &[f64]) -> f64 {
    let e = net.n_branches();
    let n = net.n_buses();
    let slack = net.slack();
    let dim = e + n;
    let mut m = DMatrix::zeros(dim, dim);
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
    m[(e + slack, e + slack)] = 1.0;
    let svd = m.svd(false, false);
    let mut smin = f64::INFINITY;
    let mut smax = 0.0f64;
    for s in svd.singular_values.iter() {
        smin = smin.min(*s);
        smax = smax.max(*s);
    }
    if smax == 0.0 {
        0.0
    } else {
        smin / smax
    }
}

/// Realizability oracle: a pattern is realizable by positive reactances
/// exactly when `diag(f) x = A θ` admits a solution with `x >= 1`
/// (positivity is scale invariant).
pub fn oracle_realizable(net: &Network, f: &[f64]) -> bool {
    let e = net.n_branches();
    let n = net.n_buses();
    let nv = e + n;
    let mut lp = LinearProgram::new(nv);
    for i in 0..e {
        lp.lower[i] = 1.0;
        lp.upper[i] = INF;
    }
    let slack = net.slack();
    lp.lower[e + slack] = 0.0;
    lp.upper[e + slack] = 0.0;
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
    match lp_solve(&lp).expect("oracle solve") {
        LpOutcome::Optimal(_) => true,
        LpOutcome::Infeasible => false,
        LpOutcome::Unbounded => unreachable!("feasibility program"),
    }
}

/// Validates a circulation witness by certificate alone: entrywise
/// nonnegative, entries summing to one, and contained in
/// `f ∘ range(N)` up to a least-squares residual.
pub fn validate_witness(net: &Network, f: &[f64], s: &[f64]) {
    let e = net.n_branches();
    assert_eq!(s.len(), e);
    assert!(s.iter().all(|&v| v >= -1e-9), "negative witness entry");
    let total: f64 = s.iter().sum();
    assert!((total - 1.0).abs() < 1e-7, "witness sum {total}");

    let basis = net.cycle_basis();
    let c = basis.n_cycles();
    assert!(c > 0, "witness on an acyclic network");
    let mut m = DMatrix::zeros(e, c);
    for cyc in 0..c {
        for (edge, &entry) in basis.column(cyc).iter().enumerate() {
            m[(edge, cyc)] = f[edge] * entry as f64;
        }
    }
    let rhs = DVector::from_column_slice(s);
    let coeff = m.clone().svd(true, true).solve(&rhs, 1e-12).expect("lstsq");
    let residual = (&m * coeff - rhs).amax();
    assert!(residual < 1e-7, "witness leaves span, residual {residual}");
}

/// Loads the bundled 39-bus case.
pub fn case39() -> Network {
    let path = format!("{}/../../data/case39.m", env!("CARGO_MANIFEST_DIR"));
    Network::load_case(path).unwrap()
}
