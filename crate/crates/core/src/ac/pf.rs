//! Newton-Raphson AC power flow in polar coordinates.
//!
//! Branches follow the standard pi model with an off-nominal tap on the from
//! side. Voltage magnitudes are held at their setpoints on generator and
//! slack buses and solved at load buses; the slack angle is the reference.
//! The solved state reports sending-end active flows per branch, oriented
//! like the branch list so they compare sign-for-sign with DC flows.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Branch, BusKind, Network};

pub(crate) type C64 = Complex<f64>;

/// Convergence threshold on the largest bus power mismatch, p.u.
pub const PF_MISMATCH_TOL: f64 = 1e-8;
/// Newton iteration cap; exceeding it reports divergence.
pub const PF_MAX_ITERATIONS: usize = 30;
/// Smallest admissible series impedance magnitude `|r + jx|`. Branches
/// below it would produce a near-singular admittance matrix and are
/// rejected before any division happens.
pub const MIN_SERIES_IMPEDANCE: f64 = 1e-6;

/// A solved (or attempted) AC operating point.
///
/// Mismatches are `specified - calculated` net power per bus; at a converged
/// state they are below [`PF_MISMATCH_TOL`] at every bus where the quantity
/// is constrained (active power everywhere but the slack, reactive power at
/// load buses). The slack active entry absorbs system losses and is not
/// driven to zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcState {
    pub v_mag: Vec<f64>,
    /// Bus angles in radians, slack at zero.
    pub v_ang: Vec<f64>,
    /// Sending-end active power per branch at the from bus, p.u.
    pub f_send: Vec<f64>,
    pub p_mismatch: Vec<f64>,
    pub q_mismatch: Vec<f64>,
    pub iterations: usize,
}

/// Bus admittance matrix plus the from-side per-branch entries it was built
/// from, kept so sending-end flows can be evaluated without re-deriving them.
pub(crate) struct Ybus {
    pub m: DMatrix<C64>,
    pub ff: Vec<C64>,
    pub ft: Vec<C64>,
}

impl Ybus {
    pub fn build(net: &Network, x: &[f64]) -> Result<Ybus> {
        let n = net.n_buses();
        let e = net.n_branches();
        assert_eq!(x.len(), e);
        let mut m = DMatrix::zeros(n, n);
        let mut ff = Vec::with_capacity(e);
        let mut ft = Vec::with_capacity(e);
        for (idx, br) in net.branches.iter().enumerate() {
            let z = C64::new(br.r, x[idx]);
            if z.norm() < MIN_SERIES_IMPEDANCE {
                log::warn!(
                    "branch {idx} ({}-{}) series impedance magnitude {:.3e} below {MIN_SERIES_IMPEDANCE:e}",
                    br.from, br.to, z.norm()
                );
                return Err(Error::InvalidNetwork(format!(
                    "branch {idx} series impedance magnitude {:.3e} below {MIN_SERIES_IMPEDANCE:e}",
                    z.norm()
                )));
            }
            let ys = z.inv();
            let shunt = C64::new(0.0, br.b_charging / 2.0);
            let tap = br.tap;
            let y_ff = (ys + shunt) / (tap * tap);
            let y_ft = -ys / tap;
            let y_tf = -ys / tap;
            let y_tt = ys + shunt;
            m[(br.from, br.from)] += y_ff;
            m[(br.from, br.to)] += y_ft;
            m[(br.to, br.from)] += y_tf;
            m[(br.to, br.to)] += y_tt;
            ff.push(y_ff);
            ft.push(y_ft);
        }
        Ok(Ybus { m, ff, ft })
    }
}

/// Derivatives of the four branch admittance entries with respect to the
/// branch's series reactance, in (ff, ft, tf, tt) order. The charging shunt
/// does not depend on x, so only the series part `1/(r + jx)` contributes:
/// `d ys / d x = -j ys^2`.
pub(crate) fn branch_dy(br: &Branch, x: f64) -> (C64, C64, C64, C64) {
    let ys = C64::new(br.r, x).inv();
    let dys = -C64::i() * ys * ys;
    let tap = br.tap;
    (dys / (tap * tap), -dys / tap, -dys / tap, dys)
}

pub(crate) fn complex_voltages(v_mag: &[f64], v_ang: &[f64]) -> Vec<C64> {
    v_mag
        .iter()
        .zip(v_ang)
        .map(|(&m, &a)| C64::from_polar(m, a))
        .collect()
}

/// Net complex power injected at each bus, `S_i = V_i conj((Y V)_i)`.
pub(crate) fn bus_injections(y: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let vv = DVector::from_column_slice(v);
    let current = y * vv;
    v.iter()
        .zip(current.iter())
        .map(|(vi, ii)| vi * ii.conj())
        .collect()
}

/// Sending-end active power per branch at the from bus.
pub(crate) fn sending_flows(net: &Network, y: &Ybus, v: &[C64]) -> Vec<f64> {
    net.branches
        .iter()
        .enumerate()
        .map(|(e, br)| {
            let i_from = y.ff[e] * v[br.from] + y.ft[e] * v[br.to];
            (v[br.from] * i_from.conj()).re
        })
        .collect()
}

/// Dense derivatives of every complex bus injection with respect to every
/// bus angle and voltage magnitude. Entry `(i, k)` of each matrix is
/// `dS_i / d theta_k` and `dS_i / d |V_k|`.
pub(crate) fn injection_derivatives(
    y: &DMatrix<C64>,
    v: &[C64],
) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = v.len();
    let vv = DVector::from_column_slice(v);
    let current = y * vv;
    let mut d_ang = DMatrix::zeros(n, n);
    let mut d_mag = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let yik_vk = y[(i, k)] * v[k];
            let uk = v[k] / v[k].norm();
            let mut da = -C64::i() * v[i] * yik_vk.conj();
            let mut dm = v[i] * (y[(i, k)] * uk).conj();
            if i == k {
                da += C64::i() * v[i] * current[i].conj();
                dm += uk * current[i].conj();
            }
            d_ang[(i, k)] = da;
            d_mag[(i, k)] = dm;
        }
    }
    (d_ang, d_mag)
}

/// Free-variable bookkeeping shared by the Newton solver and the steering
/// residual model: which buses contribute an angle unknown and which a
/// magnitude unknown.
pub(crate) struct Indexing {
    /// Buses with a free angle, ascending.
    pub nonslack: Vec<usize>,
    /// Buses with a free voltage magnitude (load buses), ascending.
    pub pq: Vec<usize>,
}

impl Indexing {
    pub fn new(net: &Network) -> Indexing {
        let slack = net.slack();
        let nonslack = (0..net.n_buses()).filter(|&b| b != slack).collect();
        let pq = net
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Pq)
            .map(|b| b.id)
            .collect();
        Indexing { nonslack, pq }
    }
}

/// Specified net bus powers for a demand profile and generator dispatch:
/// active `sum of p_gen at bus - p_demand`, reactive `-q_demand` (generator
/// reactive output is free, so the reactive spec only binds at load buses).
fn power_spec(net: &Network, p_d: &[f64], q_d: &[f64], p_g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(p_d.len(), net.n_buses());
    assert_eq!(q_d.len(), net.n_buses());
    assert_eq!(p_g.len(), net.n_generators());
    let p = net.injections(p_g, p_d);
    let q = q_d.iter().map(|v| -v).collect();
    (p, q)
}

fn mismatches(
    p_spec: &[f64],
    q_spec: &[f64],
    s_calc: &[C64],
) -> (Vec<f64>, Vec<f64>) {
    let p = p_spec
        .iter()
        .zip(s_calc)
        .map(|(spec, s)| spec - s.re)
        .collect();
    let q = q_spec
        .iter()
        .zip(s_calc)
        .map(|(spec, s)| spec - s.im)
        .collect();
    (p, q)
}

fn max_constrained_mismatch(idx: &Indexing, p_mm: &[f64], q_mm: &[f64]) -> f64 {
    let p = idx
        .nonslack
        .iter()
        .map(|&b| p_mm[b].abs())
        .fold(0.0, f64::max);
    let q = idx.pq.iter().map(|&b| q_mm[b].abs()).fold(0.0, f64::max);
    p.max(q)
}

/// Largest constrained power-balance violation of a state, p.u.: active
/// mismatch away from the slack, reactive mismatch at load buses.
pub fn balance_error(net: &Network, state: &AcState) -> f64 {
    let idx = Indexing::new(net);
    max_constrained_mismatch(&idx, &state.p_mismatch, &state.q_mismatch)
}

/// Jacobian of the constrained mismatch vector with respect to the free
/// voltage variables, evaluated at the given voltage guess. Rows are active
/// mismatches at non-slack buses then reactive mismatches at load buses;
/// columns are angles at non-slack buses then magnitudes at load buses.
/// This is the Newton system matrix of [`acpf_solve`], exposed so the
/// derivation can be cross-checked numerically.
pub fn mismatch_jacobian(
    net: &Network,
    x: &[f64],
    v_mag: &[f64],
    v_ang: &[f64],
) -> Result<DMatrix<f64>> {
    let y = Ybus::build(net, x)?;
    let idx = Indexing::new(net);
    let v = complex_voltages(v_mag, v_ang);
    Ok(newton_matrix(&idx, &y.m, &v))
}

/// Assembles the real Newton matrix from the complex injection derivatives.
/// Mismatch rows are `spec - calc`, hence the negation.
fn newton_matrix(idx: &Indexing, y: &DMatrix<C64>, v: &[C64]) -> DMatrix<f64> {
    let (d_ang, d_mag) = injection_derivatives(y, v);
    let na = idx.nonslack.len();
    let nm = idx.pq.len();
    let mut j = DMatrix::zeros(na + nm, na + nm);
    for (row, &i) in idx.nonslack.iter().enumerate() {
        for (col, &k) in idx.nonslack.iter().enumerate() {
            j[(row, col)] = -d_ang[(i, k)].re;
        }
        for (col, &k) in idx.pq.iter().enumerate() {
            j[(row, na + col)] = -d_mag[(i, k)].re;
        }
    }
    for (row, &i) in idx.pq.iter().enumerate() {
        for (col, &k) in idx.nonslack.iter().enumerate() {
            j[(na + row, col)] = -d_ang[(i, k)].im;
        }
        for (col, &k) in idx.pq.iter().enumerate() {
            j[(na + row, na + col)] = -d_mag[(i, k)].im;
        }
    }
    j
}

/// Solves the AC power flow for a demand profile, generator dispatch, and
/// reactance vector, starting flat (setpoint magnitudes, zero angles).
///
/// Returns the converged state or [`Error::AcDiverged`] with the best
/// mismatch reached when the iteration cap runs out.
pub fn acpf_solve(
    net: &Network,
    p_d: &[f64],
    q_d: &[f64],
    p_g: &[f64],
    x: &[f64],
) -> Result<AcState> {
    let y = Ybus::build(net, x)?;
    let idx = Indexing::new(net);
    let (p_spec, q_spec) = power_spec(net, p_d, q_d, p_g);

    let mut v_mag: Vec<f64> = net
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Pq => 1.0,
            _ => b.v_setpoint,
        })
        .collect();
    let mut v_ang = vec![0.0; net.n_buses()];
    let na = idx.nonslack.len();

    for iteration in 0..=PF_MAX_ITERATIONS {
        let v = complex_voltages(&v_mag, &v_ang);
        let s_calc = bus_injections(&y.m, &v);
        let (p_mm, q_mm) = mismatches(&p_spec, &q_spec, &s_calc);
        let worst = max_constrained_mismatch(&idx, &p_mm, &q_mm);
        if worst < PF_MISMATCH_TOL {
            let f_send = sending_flows(net, &y, &v);
            return Ok(AcState {
                v_mag,
                v_ang,
                f_send,
                p_mismatch: p_mm,
                q_mismatch: q_mm,
                iterations: iteration,
            });
        }
        if iteration == PF_MAX_ITERATIONS {
            return Err(Error::AcDiverged {
                iterations: iteration,
                mismatch: worst,
            });
        }

        let j = newton_matrix(&idx, &y.m, &v);
        let mut rhs = DVector::zeros(na + idx.pq.len());
        for (row, &b) in idx.nonslack.iter().enumerate() {
            rhs[row] = p_mm[b];
        }
        for (row, &b) in idx.pq.iter().enumerate() {
            rhs[na + row] = q_mm[b];
        }
        // The assembled matrix is d(mismatch)/dz, so the Newton step is
        // dz = -J^{-1} mismatch: solve against the raw mismatch, subtract.
        let delta = j
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSystem)?;
        for (row, &b) in idx.nonslack.iter().enumerate() {
            v_ang[b] -= delta[row];
        }
        for (row, &b) in idx.pq.iter().enumerate() {
            v_mag[b] -= delta[na + row];
        }
    }
    unreachable!("loop exits by convergence or divergence");
}

/// Per-line and mean flow tracking error of a state against a target
/// pattern, as a percentage of each line's rating.
pub fn flow_mismatch(net: &Network, state: &AcState, f_target: &[f64]) -> (Vec<f64>, f64) {
    let e = net.n_branches();
    assert_eq!(f_target.len(), e);
    assert_eq!(state.f_send.len(), e);
    let per: Vec<f64> = (0..e)
        .map(|i| 100.0 * (state.f_send[i] - f_target[i]).abs() / net.branches[i].f_rating)
        .collect();
    let mean = per.iter().sum::<f64>() / e as f64;
    (per, mean)
}

/// A copy of the network with generator and slack voltage setpoints forced
/// to 1 p.u., the convention used by the steering experiments.
pub fn with_unit_setpoints(net: &Network) -> Network {
    let mut out = net.clone();
    for bus in &mut out.buses {
        if bus.kind != BusKind::Pq {
            bus.v_setpoint = 1.0;
        }
    }
    out
}

/// Per-line and mean gap between AC and DC flows at the stored operating
/// point (nominal demands, stored dispatch, nominal reactances), as a
/// percentage of line ratings.
pub fn nominal_flow_gap(net: &Network) -> Result<(Vec<f64>, f64)> {
    let (p_d, q_d) = net.nominal_demand();
    let p_g: Vec<f64> = net.generators.iter().map(|g| g.p_nominal).collect();
    let state = acpf_solve(net, &p_d, &q_d, &p_g, &net.x_nominal())?;
    let dc = crate::dc::nominal_dc_flows(net)?;
    let e = net.n_branches();
    let per: Vec<f64> = (0..e)
        .map(|i| 100.0 * (state.f_send[i] - dc.flows[i]).abs() / net.branches[i].f_rating)
        .collect();
    let mean = per.iter().sum::<f64>() / e as f64;
    Ok((per, mean))
}
