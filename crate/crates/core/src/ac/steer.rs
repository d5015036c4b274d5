//! Reactance steering: fit series reactances so AC flows track a target.
//!
//! The fit is a bound-constrained nonlinear least-squares problem over the
//! reactance vector and the free voltage variables. Flow tracking and a
//! weighted pull toward a prior reactance vector form the objective; the
//! power-balance equations enter as penalty residuals whose weight grows by
//! continuation until every constrained bus balances to [`BALANCE_TOL`].
//! Solving against the prior's own flows leaves the prior untouched, and a
//! very large tracking weight `w` reproduces the prior, so the weight sweeps
//! cleanly between "trust the prior" and "chase the target flows".

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ac::pf::{
    self, acpf_solve, branch_dy, bus_injections, complex_voltages, flow_mismatch,
    injection_derivatives, sending_flows, AcState, Indexing, Ybus, MIN_SERIES_IMPEDANCE,
};
use crate::error::Result;
use crate::net::Network;
use crate::opt::{lm_solve, LeastSquares, LmOptions};
use crate::scenario::Scenario;

/// Largest tolerated power-balance violation of a steered state, p.u.
pub const BALANCE_TOL: f64 = 1e-5;
/// Starting weight of the balance penalty residuals.
pub const MU_START: f64 = 1e4;
/// Growth factor of the balance penalty per continuation round.
pub const MU_FACTOR: f64 = 10.0;
/// Continuation rounds before giving up on the balance tolerance.
pub const MU_ROUNDS: usize = 6;

/// Floor applied to voltage-magnitude variables inside the fit. Purely a
/// numerical guard against the `v/|v|` singularity; physical solutions sit
/// near 1 p.u.
const VMAG_FLOOR: f64 = 1e-3;

/// Parameters of one steering solve.
#[derive(Clone, Debug)]
pub struct SteerConfig {
    /// Weight pulling the reactances toward the prior. `f64::INFINITY`
    /// short-circuits the fit and evaluates the prior itself.
    pub w: f64,
    /// Prior reactance vector, also the starting point of the fit.
    pub x_prior: Vec<f64>,
    pub balance_tol: f64,
    pub mu_start: f64,
    pub mu_factor: f64,
    pub max_rounds: usize,
}

impl SteerConfig {
    pub fn new(w: f64, x_prior: Vec<f64>) -> SteerConfig {
        SteerConfig {
            w,
            x_prior,
            balance_tol: BALANCE_TOL,
            mu_start: MU_START,
            mu_factor: MU_FACTOR,
            max_rounds: MU_ROUNDS,
        }
    }
}

/// Outcome of one steering solve.
#[derive(Clone, Debug)]
pub struct SteerResult {
    pub x_star: Vec<f64>,
    /// Terminal operating state of the fit. When `converged` its balance
    /// error is below the configured tolerance.
    pub state: AcState,
    /// Per-line `|flow - target|` as a percentage of the line rating.
    pub mismatch_per_line: Vec<f64>,
    /// Mean of `mismatch_per_line` over all lines, percent.
    pub mean_mismatch: f64,
    /// True when the balance penalty reached the tolerance within the
    /// continuation budget.
    pub converged: bool,
    /// Continuation rounds actually run (0 for the infinite-`w` shortcut).
    pub rounds: usize,
    /// Accepted least-squares costs, concatenated across rounds.
    pub trace: Vec<f64>,
}

/// The steering residual model over `z = [x, angles, load magnitudes]`.
struct SteerProblem<'a> {
    net: &'a Network,
    idx: Indexing,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    f_target: &'a [f64],
    x_prior: &'a [f64],
    sqrt_w: f64,
    sqrt_mu: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> SteerProblem<'a> {
    fn new(
        net: &'a Network,
        scenario: &'a Scenario,
        x_prior: &'a [f64],
        w: f64,
        mu: f64,
    ) -> SteerProblem<'a> {
        let e = net.n_branches();
        let idx = Indexing::new(net);
        let n_params = e + idx.nonslack.len() + idx.pq.len();
        let mut lower = vec![f64::NEG_INFINITY; n_params];
        let upper = vec![f64::INFINITY; n_params];
        for (i, br) in net.branches.iter().enumerate() {
            // Reactances may reach zero only where the resistance alone
            // keeps the series impedance away from singularity.
            lower[i] = if br.r >= MIN_SERIES_IMPEDANCE {
                0.0
            } else {
                MIN_SERIES_IMPEDANCE
            };
        }
        for col in e + idx.nonslack.len()..n_params {
            lower[col] = VMAG_FLOOR;
        }
        let p_spec = net.injections(&scenario.p_gen, &scenario.p_demand);
        let q_spec = scenario.q_demand.iter().map(|v| -v).collect();
        SteerProblem {
            net,
            idx,
            p_spec,
            q_spec,
            f_target: &scenario.f_target,
            x_prior,
            sqrt_w: w.sqrt(),
            sqrt_mu: mu.sqrt(),
            lower,
            upper,
        }
    }

    fn e(&self) -> usize {
        self.net.n_branches()
    }

    /// Splits a parameter vector into the full per-bus voltage state.
    fn voltages(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e = self.e();
        let mut v_mag: Vec<f64> = self
            .net
            .buses
            .iter()
            .map(|b| b.v_setpoint)
            .collect();
        let mut v_ang = vec![0.0; self.net.n_buses()];
        for (pos, &b) in self.idx.nonslack.iter().enumerate() {
            v_ang[b] = z[e + pos];
        }
        let base = e + self.idx.nonslack.len();
        for (pos, &b) in self.idx.pq.iter().enumerate() {
            v_mag[b] = z[base + pos];
        }
        (v_mag, v_ang)
    }

    /// Column of the angle variable at bus `b`, if it has one.
    fn ang_col(&self, b: usize) -> Option<usize> {
        self.idx
            .nonslack
            .binary_search(&b)
            .ok()
            .map(|pos| self.e() + pos)
    }

    /// Column of the magnitude variable at bus `b`, if it has one.
    fn mag_col(&self, b: usize) -> Option<usize> {
        self.idx
            .pq
            .binary_search(&b)
            .ok()
            .map(|pos| self.e() + self.idx.nonslack.len() + pos)
    }
}

impl LeastSquares for SteerProblem<'_> {
    fn n_params(&self) -> usize {
        self.e() + self.idx.nonslack.len() + self.idx.pq.len()
    }

    fn n_residuals(&self) -> usize {
        2 * self.e() + self.idx.nonslack.len() + self.idx.pq.len()
    }

    fn lower(&self) -> Vec<f64> {
        self.lower.clone()
    }

    fn upper(&self) -> Vec<f64> {
        self.upper.clone()
    }

    fn residuals(&self, z: &[f64]) -> Vec<f64> {
        let e = self.e();
        let x = &z[..e];
        let y = Ybus::build(self.net, x).expect("bounds keep series impedances regular");
        let (v_mag, v_ang) = self.voltages(z);
        let v = complex_voltages(&v_mag, &v_ang);
        let flows = sending_flows(self.net, &y, &v);
        let s_calc = bus_injections(&y.m, &v);

        let mut r = Vec::with_capacity(self.n_residuals());
        for i in 0..e {
            r.push(flows[i] - self.f_target[i]);
        }
        for i in 0..e {
            r.push(self.sqrt_w * (x[i] - self.x_prior[i]));
        }
        for &b in &self.idx.nonslack {
            r.push(self.sqrt_mu * (s_calc[b].re - self.p_spec[b]));
        }
        for &b in &self.idx.pq {
            r.push(self.sqrt_mu * (s_calc[b].im - self.q_spec[b]));
        }
        r
    }

    fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let e = self.e();
        let n = self.net.n_buses();
        let x = &z[..e];
        let y = Ybus::build(self.net, x).expect("bounds keep series impedances regular");
        let (v_mag, v_ang) = self.voltages(z);
        let v = complex_voltages(&v_mag, &v_ang);
        let (d_ang, d_mag) = injection_derivatives(&y.m, &v);

        let mut j = DMatrix::zeros(self.n_residuals(), self.n_params());

        // dS at the endpoints of each branch with respect to its reactance;
        // reused by the flow rows and the balance rows.
        let mut ds_from = vec![pf::C64::new(0.0, 0.0); e];
        let mut ds_to = vec![pf::C64::new(0.0, 0.0); e];
        for (i, br) in self.net.branches.iter().enumerate() {
            let (dff, dft, dtf, dtt) = branch_dy(br, x[i]);
            ds_from[i] = v[br.from] * (dff * v[br.from] + dft * v[br.to]).conj();
            ds_to[i] = v[br.to] * (dtf * v[br.from] + dtt * v[br.to]).conj();
        }

        // Flow tracking rows.
        for (i, br) in self.net.branches.iter().enumerate() {
            let (f, t) = (br.from, br.to);
            let i_from = y.ff[i] * v[f] + y.ft[i] * v[t];
            j[(i, i)] = ds_from[i].re;
            let jj = pf::C64::i();
            if let Some(col) = self.ang_col(f) {
                let d = jj * v[f] * i_from.conj() - jj * v[f] * (y.ff[i] * v[f]).conj();
                j[(i, col)] = d.re;
            }
            if let Some(col) = self.ang_col(t) {
                let d = -jj * v[f] * (y.ft[i] * v[t]).conj();
                j[(i, col)] = d.re;
            }
            if let Some(col) = self.mag_col(f) {
                let uf = v[f] / v[f].norm();
                let d = uf * i_from.conj() + v[f] * (y.ff[i] * uf).conj();
                j[(i, col)] = d.re;
            }
            if let Some(col) = self.mag_col(t) {
                let ut = v[t] / v[t].norm();
                let d = v[f] * (y.ft[i] * ut).conj();
                j[(i, col)] = d.re;
            }
        }

        // Prior-regularization rows: diagonal in x.
        for i in 0..e {
            j[(e + i, i)] = self.sqrt_w;
        }

        // Balance penalty rows: voltage derivatives are the dense injection
        // derivatives; reactance derivatives touch the two endpoint buses.
        let mut row_of_p = vec![None; n];
        let mut row_of_q = vec![None; n];
        let p_base = 2 * e;
        for (pos, &b) in self.idx.nonslack.iter().enumerate() {
            row_of_p[b] = Some(p_base + pos);
        }
        let q_base = p_base + self.idx.nonslack.len();
        for (pos, &b) in self.idx.pq.iter().enumerate() {
            row_of_q[b] = Some(q_base + pos);
        }
        for (pos, &b) in self.idx.nonslack.iter().enumerate() {
            let row = p_base + pos;
            for (col_pos, &k) in self.idx.nonslack.iter().enumerate() {
                j[(row, e + col_pos)] = self.sqrt_mu * d_ang[(b, k)].re;
            }
            for (col_pos, &k) in self.idx.pq.iter().enumerate() {
                j[(row, e + self.idx.nonslack.len() + col_pos)] =
                    self.sqrt_mu * d_mag[(b, k)].re;
            }
        }
        for (pos, &b) in self.idx.pq.iter().enumerate() {
            let row = q_base + pos;
            for (col_pos, &k) in self.idx.nonslack.iter().enumerate() {
                j[(row, e + col_pos)] = self.sqrt_mu * d_ang[(b, k)].im;
            }
            for (col_pos, &k) in self.idx.pq.iter().enumerate() {
                j[(row, e + self.idx.nonslack.len() + col_pos)] =
                    self.sqrt_mu * d_mag[(b, k)].im;
            }
        }
        for (i, br) in self.net.branches.iter().enumerate() {
            if let Some(row) = row_of_p[br.from] {
                j[(row, i)] = self.sqrt_mu * ds_from[i].re;
            }
            if let Some(row) = row_of_q[br.from] {
                j[(row, i)] = self.sqrt_mu * ds_from[i].im;
            }
            if let Some(row) = row_of_p[br.to] {
                j[(row, i)] = self.sqrt_mu * ds_to[i].re;
            }
            if let Some(row) = row_of_q[br.to] {
                j[(row, i)] = self.sqrt_mu * ds_to[i].im;
            }
        }
        j
    }
}

/// Builds the terminal state of a fit from its parameter vector.
fn state_of(problem: &SteerProblem, z: &[f64]) -> AcState {
    let e = problem.e();
    let y = Ybus::build(problem.net, &z[..e]).expect("bounds keep series impedances regular");
    let (v_mag, v_ang) = problem.voltages(z);
    let v = complex_voltages(&v_mag, &v_ang);
    let s_calc = bus_injections(&y.m, &v);
    let f_send = sending_flows(problem.net, &y, &v);
    let p_mismatch = problem
        .p_spec
        .iter()
        .zip(&s_calc)
        .map(|(spec, s)| spec - s.re)
        .collect();
    let q_mismatch = problem
        .q_spec
        .iter()
        .zip(&s_calc)
        .map(|(spec, s)| spec - s.im)
        .collect();
    AcState {
        v_mag,
        v_ang,
        f_send,
        p_mismatch,
        q_mismatch,
        iterations: 0,
    }
}

/// Evaluates the tracking quality of a fixed reactance vector by solving
/// the power flow there; used for the infinite-`w` shortcut and for the
/// reference columns of the sweep.
fn evaluate_at(net: &Network, scenario: &Scenario, x: &[f64]) -> Result<SteerResult> {
    let state = acpf_solve(
        net,
        &scenario.p_demand,
        &scenario.q_demand,
        &scenario.p_gen,
        x,
    )?;
    let (per, mean) = flow_mismatch(net, &state, &scenario.f_target);
    Ok(SteerResult {
        x_star: x.to_vec(),
        state,
        mismatch_per_line: per,
        mean_mismatch: mean,
        converged: true,
        rounds: 0,
        trace: Vec::new(),
    })
}

/// Steers the scenario's AC flows toward its target pattern by adjusting
/// reactances, starting from (and regularized toward) `config.x_prior`.
///
/// The fit warm-starts at the solved power flow of the prior, so the search
/// begins at a balanced state where only the tracking residuals are active.
/// Convergence means the balance penalty reached `config.balance_tol`; on a
/// stall or an exhausted continuation budget the best iterate is returned
/// with `converged = false`.
pub fn steer_p3(net: &Network, scenario: &Scenario, config: &SteerConfig) -> Result<SteerResult> {
    let e = net.n_branches();
    assert_eq!(config.x_prior.len(), e);
    if !config.w.is_finite() {
        return evaluate_at(net, scenario, &config.x_prior);
    }

    let base = acpf_solve(
        net,
        &scenario.p_demand,
        &scenario.q_demand,
        &scenario.p_gen,
        &config.x_prior,
    )?;
    let idx = Indexing::new(net);
    let mut z = Vec::with_capacity(e + idx.nonslack.len() + idx.pq.len());
    z.extend_from_slice(&config.x_prior);
    z.extend(idx.nonslack.iter().map(|&b| base.v_ang[b]));
    z.extend(idx.pq.iter().map(|&b| base.v_mag[b]));

    let opts = LmOptions {
        max_iters: 400,
        ..LmOptions::default()
    };
    let mut mu = config.mu_start;
    let mut trace = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    loop {
        rounds += 1;
        let problem = SteerProblem::new(net, scenario, &config.x_prior, config.w, mu);
        let report = lm_solve(&problem, &z, &opts)?;
        z = report.x;
        trace.extend(report.trace);
        let state = state_of(&problem, &z);
        if pf::balance_error(net, &state) < config.balance_tol {
            converged = true;
            break;
        }
        if rounds >= config.max_rounds {
            log::warn!(
                "scenario {}: balance {:.3e} p.u. above {:.1e} after {rounds} penalty rounds",
                scenario.index,
                pf::balance_error(net, &state),
                config.balance_tol,
            );
            break;
        }
        mu *= config.mu_factor;
    }

    let problem = SteerProblem::new(net, scenario, &config.x_prior, config.w, mu);
    let state = state_of(&problem, &z);
    let (per, mean) = flow_mismatch(net, &state, &scenario.f_target);
    Ok(SteerResult {
        x_star: z[..e].to_vec(),
        state,
        mismatch_per_line: per,
        mean_mismatch: mean,
        converged,
        rounds,
        trace,
    })
}

/// Which reactance setpoint a sweep row was evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SetpointLabel {
    /// Nominal case reactances.
    Nominal,
    /// The scenario's prior vector (its flow-exact DC setpoint).
    DcSetpoint,
    /// A steered vector at the given tracking weight.
    Weighted(f64),
}

impl SetpointLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetpointLabel::Nominal => "nominal",
            SetpointLabel::DcSetpoint => "dc",
            SetpointLabel::Weighted(_) => "steered",
        }
    }

    pub fn weight(&self) -> Option<f64> {
        match self {
            SetpointLabel::Weighted(w) => Some(*w),
            _ => None,
        }
    }
}

/// One scenario of a sweep: the target pattern plus its prior reactances.
#[derive(Clone, Debug)]
pub struct SweepScenario {
    pub scenario: Scenario,
    pub x_dc: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    /// Scenario index (dataset rank).
    pub scenario: usize,
    pub label: SetpointLabel,
    pub mean_mismatch_pct: f64,
    pub converged: bool,
    /// Reactance vector the row was evaluated at, p.u.
    pub x_star: Vec<f64>,
}

/// Mismatch table over scenarios and setpoints, plus the averaged trend.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Column means over the scenarios in `averaged`.
    pub average: Vec<(SetpointLabel, f64)>,
    /// Scenario indices with every point evaluated and converged; only
    /// these contribute to `average`.
    pub averaged: Vec<usize>,
    /// Scenarios dropped outright, with the failure reason.
    pub failed: Vec<(usize, String)>,
}

/// Default tracking-weight grid: one point per decade from 1e4 down to
/// 1e-4, large weights first.
pub fn default_w_grid() -> Vec<f64> {
    (-4..=4).rev().map(|k| 10f64.powi(k)).collect()
}

/// Evaluates every scenario at its nominal, prior, and steered setpoints
/// and averages the columns over the scenarios that completed everywhere.
/// Failures are recorded and skipped, never fatal. Scenarios run in
/// parallel; the row order is deterministic.
pub fn w_sweep(net: &Network, inputs: &[SweepScenario], w_grid: &[f64]) -> SweepTable {
    let mut grid: Vec<f64> = w_grid.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).expect("weights are not NaN"));
    grid.dedup();

    let labels: Vec<SetpointLabel> = [SetpointLabel::Nominal, SetpointLabel::DcSetpoint]
        .into_iter()
        .chain(grid.iter().map(|&w| SetpointLabel::Weighted(w)))
        .collect();

    type PerScenario = std::result::Result<Vec<SweepRow>, (usize, String)>;
    let outcomes: Vec<PerScenario> = inputs
        .par_iter()
        .map(|input| {
            let s = &input.scenario;
            let mut rows = Vec::with_capacity(labels.len());
            for label in &labels {
                let result = match label {
                    SetpointLabel::Nominal => evaluate_at(net, s, &net.x_nominal()),
                    SetpointLabel::DcSetpoint => evaluate_at(net, s, &input.x_dc),
                    SetpointLabel::Weighted(w) => {
                        steer_p3(net, s, &SteerConfig::new(*w, input.x_dc.clone()))
                    }
                };
                match result {
                    Ok(r) => rows.push(SweepRow {
                        scenario: s.index,
                        label: *label,
                        mean_mismatch_pct: r.mean_mismatch,
                        converged: r.converged,
                        x_star: r.x_star,
                    }),
                    Err(err) => {
                        return Err((s.index, format!("{}: {err}", label.as_str())));
                    }
                }
            }
            Ok(rows)
        })
        .collect();

    let mut table = SweepTable::default();
    let mut sums = vec![0.0; labels.len()];
    for outcome in outcomes {
        match outcome {
            Ok(rows) => {
                let complete = rows.iter().all(|r| r.converged);
                if complete {
                    table.averaged.push(rows[0].scenario);
                    for (sum, row) in sums.iter_mut().zip(&rows) {
                        *sum += row.mean_mismatch_pct;
                    }
                } else {
                    log::warn!(
                        "scenario {}: some steering points missed the balance tolerance; \
                         excluded from the averaged trend",
                        rows[0].scenario
                    );
                }
                table.rows.extend(rows);
            }
            Err((index, reason)) => {
                log::warn!("scenario {index} dropped from sweep: {reason}");
                table.failed.push((index, reason));
            }
        }
    }
    if !table.averaged.is_empty() {
        let count = table.averaged.len() as f64;
        table.average = labels
            .iter()
            .zip(&sums)
            .map(|(label, sum)| (*label, sum / count))
            .collect();
    }
    table
}
