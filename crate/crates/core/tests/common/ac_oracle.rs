//! Independent rectangular-form AC reference: admittances, injections,
//! and branch powers re-derived in plain real arithmetic, plus a random
//! network generator exercising taps, charging, and mixed bus kinds.

use flowctl_core::net::{Branch, Bus, BusKind, Generator, Network};
use flowctl_core::scenario::Scenario;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Branch admittance entries in rectangular form, assembled with explicit
/// real arithmetic (no complex types) as an independent reference.
pub struct OracleYbus {
    pub g: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub gff: Vec<f64>,
    pub bff: Vec<f64>,
    pub gft: Vec<f64>,
    pub bft: Vec<f64>,
    pub gtf: Vec<f64>,
    pub btf: Vec<f64>,
    pub gtt: Vec<f64>,
    pub btt: Vec<f64>,
}

pub fn oracle_ybus(net: &Network, x: &[f64]) -> OracleYbus {
    let n = net.n_buses();
    let e = net.n_branches();
    let mut yb = OracleYbus {
        g: vec![vec![0.0; n]; n],
        b: vec![vec![0.0; n]; n],
        gff: vec![0.0; e],
        bff: vec![0.0; e],
        gft: vec![0.0; e],
        bft: vec![0.0; e],
        gtf: vec![0.0; e],
        btf: vec![0.0; e],
        gtt: vec![0.0; e],
        btt: vec![0.0; e],
    };
    for (i, br) in net.branches.iter().enumerate() {
        let d = br.r * br.r + x[i] * x[i];
        let gs = br.r / d;
        let bs = -x[i] / d;
        let half_charge = br.b_charging / 2.0;
        let t = br.tap;
        yb.gff[i] = gs / (t * t);
        yb.bff[i] = (bs + half_charge) / (t * t);
        yb.gft[i] = -gs / t;
        yb.bft[i] = -bs / t;
        yb.gtf[i] = -gs / t;
        yb.btf[i] = -bs / t;
        yb.gtt[i] = gs;
        yb.btt[i] = bs + half_charge;
        let (f, to) = (br.from, br.to);
        yb.g[f][f] += yb.gff[i];
        yb.b[f][f] += yb.bff[i];
        yb.g[f][to] += yb.gft[i];
        yb.b[f][to] += yb.bft[i];
        yb.g[to][f] += yb.gtf[i];
        yb.b[to][f] += yb.btf[i];
        yb.g[to][to] += yb.gtt[i];
        yb.b[to][to] += yb.btt[i];
    }
    yb
}

/// Textbook polar injection equations, per bus.
pub fn oracle_injections(yb: &OracleYbus, v_mag: &[f64], v_ang: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v_mag.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            let th = v_ang[i] - v_ang[k];
            let vv = v_mag[i] * v_mag[k];
            p[i] += vv * (yb.g[i][k] * th.cos() + yb.b[i][k] * th.sin());
            q[i] += vv * (yb.g[i][k] * th.sin() - yb.b[i][k] * th.cos());
        }
    }
    (p, q)
}

/// Sending- and receiving-end active power of each branch.
pub fn oracle_branch_powers(
    net: &Network,
    yb: &OracleYbus,
    v_mag: &[f64],
    v_ang: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut send = Vec::with_capacity(net.n_branches());
    let mut recv = Vec::with_capacity(net.n_branches());
    for (i, br) in net.branches.iter().enumerate() {
        let (f, t) = (br.from, br.to);
        let thf = v_ang[f] - v_ang[t];
        send.push(
            v_mag[f] * v_mag[f] * yb.gff[i]
                + v_mag[f] * v_mag[t] * (yb.gft[i] * thf.cos() + yb.bft[i] * thf.sin()),
        );
        let tht = v_ang[t] - v_ang[f];
        recv.push(
            v_mag[t] * v_mag[t] * yb.gtt[i]
                + v_mag[t] * v_mag[f] * (yb.gtf[i] * tht.cos() + yb.btf[i] * tht.sin()),
        );
    }
    (send, recv)
}

/// Largest constrained mismatch recomputed from scratch: active power at
/// non-slack buses, reactive power at load buses.
pub fn oracle_balance(net: &Network, x: &[f64], scenario: &Scenario, v_mag: &[f64], v_ang: &[f64]) -> f64 {
    let yb = oracle_ybus(net, x);
    let (p, q) = oracle_injections(&yb, v_mag, v_ang);
    let p_spec = net.injections(&scenario.p_gen, &scenario.p_demand);
    let slack = net.slack();
    let mut worst = 0.0f64;
    for bus in &net.buses {
        if bus.id != slack {
            worst = worst.max((p_spec[bus.id] - p[bus.id]).abs());
        }
        if bus.kind == BusKind::Pq {
            worst = worst.max((-scenario.q_demand[bus.id] - q[bus.id]).abs());
        }
    }
    worst
}

/// Small connected network with a generator mix and nontrivial loads, taps,
/// and charging, for exercising the AC model away from case data.
pub fn random_ac_network(r: &mut ChaCha8Rng) -> Network {
    let n = r.gen_range(4..9);
    let mut branches = Vec::new();
    let edge = |r: &mut ChaCha8Rng, from: usize, to: usize| Branch {
        from,
        to,
        r: r.gen_range(0.005..0.05),
        x_nominal: r.gen_range(0.05..0.4),
        b_charging: if r.gen_bool(0.5) { r.gen_range(0.0..0.1) } else { 0.0 },
        tap: if r.gen_bool(0.25) { r.gen_range(0.95..1.06) } else { 1.0 },
        f_rating: 5.0,
    };
    for to in 1..n {
        let from = r.gen_range(0..to);
        branches.push(edge(r, from, to));
    }
    for _ in 0..r.gen_range(1..3) {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        if a != b && !branches.iter().any(|br| (br.from, br.to) == (a, b) || (br.from, br.to) == (b, a)) {
            branches.push(edge(r, a, b));
        }
    }

    let pv_bus = r.gen_range(1..n);
    let mut buses = Vec::new();
    let mut total_load = 0.0;
    for id in 0..n {
        let kind = if id == 0 {
            BusKind::Slack
        } else if id == pv_bus {
            BusKind::Pv
        } else {
            BusKind::Pq
        };
        let (p, q) = if kind == BusKind::Pq {
            (r.gen_range(0.05..0.3), r.gen_range(-0.05..0.1))
        } else {
            (0.0, 0.0)
        };
        total_load += p;
        buses.push(Bus {
            id,
            kind,
            p_demand: p,
            q_demand: q,
            v_setpoint: if kind == BusKind::Pq { 1.0 } else { r.gen_range(0.99..1.04) },
        });
    }
    let generators = vec![
        Generator {
            bus: 0,
            p_min: 0.0,
            p_max: 5.0,
            cost_quadratic: 1.0,
            p_nominal: total_load / 2.0,
        },
        Generator {
            bus: pv_bus,
            p_min: 0.0,
            p_max: 5.0,
            cost_quadratic: 2.0,
            p_nominal: total_load / 2.0,
        },
    ];
    Network::new(buses, branches, generators, 100.0).unwrap()
}

/// Flat-start voltage profile: setpoints where magnitudes are held, 1 p.u.
/// at load buses, zero angles.
pub fn flat_profile(net: &Network) -> (Vec<f64>, Vec<f64>) {
    let v_mag = net
        .buses
        .iter()
        .map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.v_setpoint })
        .collect();
    (v_mag, vec![0.0; net.n_buses()])
}
