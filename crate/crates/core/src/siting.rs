//! Controller siting and sizing.
//!
//! Given a set of target flow patterns, pick at most `K` lines whose
//! reactance may be adjusted (within ±100% of nominal) so that every
//! pattern becomes an exact DC power flow solution, minimizing the total
//! adjustment range summed over lines. The selection is a mixed-integer
//! program with one binary per line; per-scenario reactances and bus
//! angles are continuous, with setpoints floored at
//! [`REACTANCE_FLOOR`](crate::dc::REACTANCE_FLOOR) so that a shorted line
//! can never stand in for a genuinely realizable pattern. [`kmin_search`]
//! sweeps the budget downward to find the smallest feasible `K`.
//!
//! Lines outside every cycle never need a controller: their flow is fixed
//! by injections alone, and the angle offset across such a line can always
//! absorb the nominal reactance. [`solve_siting`] therefore pins those
//! lines to nominal before handing the program to the solver, which
//! shrinks the binary search space at no cost in optimality.

use crate::dc::REACTANCE_FLOOR;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::opt::{
    lp_solve, milp_solve, LinearProgram, LpOutcome, MilpOptions, MilpOutcome, MixedIntegerProgram,
};
use crate::scenario::ScenarioSet;
use serde::{Deserialize, Serialize};

/// Inputs for one siting run: the flow patterns to realize, the nominal
/// reactances they deviate from, and the controller budget.
#[derive(Debug, Clone)]
pub struct SitingProblem {
    /// One target flow vector per scenario, lowest difficulty first.
    pub flows: Vec<Vec<f64>>,
    /// Nominal line reactances, p.u.
    pub x_nominal: Vec<f64>,
    /// Maximum number of lines that may receive a controller.
    pub budget: usize,
    /// Pin lines outside every cycle to nominal before solving.
    pub exempt_bridges: bool,
}

impl SitingProblem {
    /// Problem over the `s_prime` easiest scenarios of a sorted set.
    pub fn from_set(net: &Network, set: &ScenarioSet, s_prime: usize, budget: usize) -> Result<Self> {
        if s_prime == 0 || s_prime > set.scenarios.len() {
            return Err(Error::Usage(format!(
                "scenario prefix {s_prime} outside 1..={}",
                set.scenarios.len()
            )));
        }
        if budget > net.n_branches() {
            return Err(Error::Usage(format!(
                "budget {budget} exceeds line count {}",
                net.n_branches()
            )));
        }
        Ok(SitingProblem {
            flows: set.scenarios[..s_prime]
                .iter()
                .map(|sc| sc.f_target.clone())
                .collect(),
            x_nominal: net.x_nominal(),
            budget,
            exempt_bridges: true,
        })
    }
}

/// A proven-optimal controller placement with its sizing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SitingPlan {
    /// Which lines received a controller.
    pub d: Vec<bool>,
    /// Lower end of each line's adjustment range, p.u.
    pub x_lo: Vec<f64>,
    /// Upper end of each line's adjustment range, p.u.
    pub x_hi: Vec<f64>,
    /// Per-scenario reactance setpoints realizing each flow pattern.
    pub x_s: Vec<Vec<f64>>,
    /// Per-scenario bus angles (defined up to a common shift).
    pub theta_s: Vec<Vec<f64>>,
    /// Total adjustment range `Σ(x_hi − x_lo)`, p.u.
    pub objective: f64,
}

impl SitingPlan {
    /// Number of lines actually carrying a controller.
    pub fn n_active(&self) -> usize {
        self.d.iter().filter(|&&b| b).count()
    }

    /// Checks every structural property of the plan against the problem
    /// it was solved from: range ordering, nominal containment, budget,
    /// and that each scenario's reactances reproduce its flows.
    pub fn validate(&self, net: &Network, problem: &SitingProblem) -> Result<()> {
        const TOL: f64 = 1e-7;
        let e = net.n_branches();
        let fail = |msg: String| Err(Error::SolverFault(msg));
        if self.n_active() > problem.budget {
            return fail(format!(
                "{} controllers placed, budget {}",
                self.n_active(),
                problem.budget
            ));
        }
        for i in 0..e {
            let x0 = problem.x_nominal[i];
            let cap = if self.d[i] { x0 } else { 0.0 };
            if self.x_hi[i] - x0 < -TOL || self.x_hi[i] - x0 > cap + TOL {
                return fail(format!("upper range of line {i} outside [0, {cap}]"));
            }
            if x0 - self.x_lo[i] < -TOL || x0 - self.x_lo[i] > cap + TOL {
                return fail(format!("lower range of line {i} outside [0, {cap}]"));
            }
        }
        let incidence = net.incidence();
        for (s, flows) in problem.flows.iter().enumerate() {
            let diff = incidence.apply(&self.theta_s[s]);
            for i in 0..e {
                if self.x_s[s][i] < self.x_lo[i] - TOL || self.x_s[s][i] > self.x_hi[i] + TOL {
                    return fail(format!("scenario {s} line {i} setpoint outside range"));
                }
                if (flows[i] * self.x_s[s][i] - diff[i]).abs() > TOL {
                    return fail(format!("scenario {s} line {i} flow equation violated"));
                }
            }
        }
        let range: f64 = (0..e).map(|i| self.x_hi[i] - self.x_lo[i]).sum();
        if (range - self.objective).abs() > 1e-6 * (1.0 + range.abs()) {
            return fail(format!(
                "objective {} disagrees with ranges {range}",
                self.objective
            ));
        }
        Ok(())
    }
}

/// Relative adjustment capability per line: how far below and above
/// nominal the plan allows each reactance to move, as fractions of
/// nominal. Lines without a controller report exact zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentProfile {
    /// `(x_lo − x°)/x°`, in `[-1, 0]`.
    pub gamma_down: Vec<f64>,
    /// `(x_hi − x°)/x°`, in `[0, 1]`.
    pub gamma_up: Vec<f64>,
}

/// Outcome of one budgeted solve.
#[derive(Debug, Clone)]
pub enum SitingOutcome {
    Plan(SitingPlan),
    /// No reactance assignment within ±100% of nominal realizes every
    /// scenario with this budget.
    Infeasible,
}

struct P2Build {
    mip: MixedIntegerProgram,
}

fn build(net: &Network, flows: &[Vec<f64>], x_nominal: &[f64], budget: usize) -> P2Build {
    let e = net.n_branches();
    let n = net.n_buses();
    let s_count = flows.len();
    let nv = 3 * e + s_count * (e + n);
    let idx_lo = |i: usize| i;
    let idx_hi = |i: usize| e + i;
    let idx_d = |i: usize| 2 * e + i;
    let idx_xs = |s: usize, i: usize| 3 * e + s * (e + n) + i;
    let idx_th = |s: usize, b: usize| 3 * e + s * (e + n) + e + b;

    let mut lp = LinearProgram::new(nv);
    for i in 0..e {
        lp.objective[idx_lo(i)] = -1.0;
        lp.objective[idx_hi(i)] = 1.0;
        lp.lower[idx_lo(i)] = 0.0;
        lp.upper[idx_lo(i)] = x_nominal[i];
        lp.lower[idx_hi(i)] = x_nominal[i];
        lp.upper[idx_hi(i)] = 2.0 * x_nominal[i];
        lp.lower[idx_d(i)] = 0.0;
        lp.upper[idx_d(i)] = 1.0;
        for s in 0..s_count {
            // Setpoints stay strictly positive: allowing zero would let a
            // shorted line satisfy its flow equation for any flow value,
            // faking realizability of patterns no positive reactance
            // supports (circulations in particular).
            lp.lower[idx_xs(s, i)] = REACTANCE_FLOOR.min(x_nominal[i]);
            lp.upper[idx_xs(s, i)] = 2.0 * x_nominal[i];
        }
    }

    // Flow equations: f_{s,e}·x_{s,e} = θ_from − θ_to for every scenario
    // and line. Rows with f = 0 still force the angle difference to zero.
    let mut eq = Vec::new();
    let mut b_eq = Vec::new();
    for (s, f_s) in flows.iter().enumerate() {
        for (i, br) in net.branches.iter().enumerate() {
            let row = s * e + i;
            if f_s[i] != 0.0 {
                eq.push((row, idx_xs(s, i), f_s[i]));
            }
            eq.push((row, idx_th(s, br.from), -1.0));
            eq.push((row, idx_th(s, br.to), 1.0));
            b_eq.push(0.0);
        }
    }

    let mut ub = Vec::new();
    let mut b_ub = Vec::new();
    // Budget row first: sum of placement binaries up to the budget.
    for i in 0..e {
        ub.push((0, idx_d(i), 1.0));
    }
    b_ub.push(budget as f64);
    for i in 0..e {
        // Range extent is gated by the placement binary on each side.
        ub.push((1 + 2 * i, idx_hi(i), 1.0));
        ub.push((1 + 2 * i, idx_d(i), -x_nominal[i]));
        b_ub.push(x_nominal[i]);
        ub.push((2 + 2 * i, idx_lo(i), -1.0));
        ub.push((2 + 2 * i, idx_d(i), -x_nominal[i]));
        b_ub.push(-x_nominal[i]);
    }
    // Every scenario setpoint must sit inside the shared range.
    for s in 0..s_count {
        let base = 1 + 2 * e + 2 * s * e;
        for i in 0..e {
            ub.push((base + 2 * i, idx_lo(i), 1.0));
            ub.push((base + 2 * i, idx_xs(s, i), -1.0));
            b_ub.push(0.0);
            ub.push((base + 2 * i + 1, idx_xs(s, i), 1.0));
            ub.push((base + 2 * i + 1, idx_hi(i), -1.0));
            b_ub.push(0.0);
        }
    }

    lp.a_eq = crate::opt::CscMatrix::from_triplets(b_eq.len(), nv, &eq);
    lp.b_eq = b_eq;
    lp.a_ub = crate::opt::CscMatrix::from_triplets(b_ub.len(), nv, &ub);
    lp.b_ub = b_ub;

    let mut integer = vec![false; nv];
    for i in 0..e {
        integer[idx_d(i)] = true;
    }
    P2Build {
        mip: MixedIntegerProgram { lp, integer },
    }
}

/// Assembles the siting program for the `s_prime` easiest scenarios of a
/// sorted set, with budget `k`. Variables are ordered `[x_lo, x_hi, d]`
/// followed by `(x_s, θ_s)` per scenario; the binaries are the placement
/// vector `d`. No lines are pinned; [`solve_siting`] applies that
/// preprocessing separately.
pub fn build_p2(net: &Network, set: &ScenarioSet, s_prime: usize, k: usize) -> MixedIntegerProgram {
    assert!(s_prime >= 1 && s_prime <= set.scenarios.len());
    let flows: Vec<Vec<f64>> = set.scenarios[..s_prime]
        .iter()
        .map(|sc| sc.f_target.clone())
        .collect();
    build(net, &flows, &net.x_nominal(), k).mip
}

fn pin_bridges(net: &Network, mip: &mut MixedIntegerProgram, s_count: usize) {
    let e = net.n_branches();
    let n = net.n_buses();
    for i in net.find_bridges() {
        let x0 = net.branches[i].x_nominal;
        mip.lp.lower[i] = x0;
        mip.lp.upper[i] = x0;
        mip.lp.lower[e + i] = x0;
        mip.lp.upper[e + i] = x0;
        mip.lp.upper[2 * e + i] = 0.0;
        for s in 0..s_count {
            let xs = 3 * e + s * (e + n) + i;
            mip.lp.lower[xs] = x0;
            mip.lp.upper[xs] = x0;
        }
    }
}

fn extract_plan(
    net: &Network,
    flows: &[Vec<f64>],
    x: &[f64],
    objective: f64,
) -> SitingPlan {
    let e = net.n_branches();
    let n = net.n_buses();
    let s_count = flows.len();
    SitingPlan {
        d: (0..e).map(|i| x[2 * e + i] > 0.5).collect(),
        x_lo: x[..e].to_vec(),
        x_hi: x[e..2 * e].to_vec(),
        x_s: (0..s_count)
            .map(|s| {
                let base = 3 * e + s * (e + n);
                x[base..base + e].to_vec()
            })
            .collect(),
        theta_s: (0..s_count)
            .map(|s| {
                let base = 3 * e + s * (e + n) + e;
                x[base..base + n].to_vec()
            })
            .collect(),
        objective,
    }
}

/// Solves the siting program to proven optimality.
///
/// Returns [`SitingOutcome::Infeasible`] when no placement within the
/// budget realizes every scenario. A solver that exhausts its node budget
/// without a proof is reported as a fault rather than a plan.
pub fn solve_siting(net: &Network, problem: &SitingProblem) -> Result<SitingOutcome> {
    let e = net.n_branches();
    if problem.budget > e {
        return Err(Error::Usage(format!(
            "budget {} exceeds line count {e}",
            problem.budget
        )));
    }
    if problem.flows.is_empty() {
        return Err(Error::Usage("no scenarios to site for".into()));
    }
    for f_s in &problem.flows {
        if f_s.len() != e || f_s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("malformed scenario flow vector".into()));
        }
    }

    let mut built = build(net, &problem.flows, &problem.x_nominal, problem.budget);
    if problem.exempt_bridges {
        pin_bridges(net, &mut built.mip, problem.flows.len());
    }
    match milp_solve(&built.mip, &MilpOptions::default())? {
        MilpOutcome::Optimal { x, objective, .. } => Ok(SitingOutcome::Plan(extract_plan(
            net,
            &problem.flows,
            &x,
            objective,
        ))),
        MilpOutcome::Infeasible => Ok(SitingOutcome::Infeasible),
        MilpOutcome::Unbounded => Err(Error::SolverFault(
            "siting program reported unbounded; ranges are box-bounded".into(),
        )),
        MilpOutcome::NodeLimit { nodes, .. } => Err(Error::SolverFault(format!(
            "siting search hit the node limit after {nodes} nodes without an optimality proof"
        ))),
    }
}

/// One row of the budget sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KminRow {
    pub k: usize,
    pub feasible: bool,
    /// Total adjustment range at this budget, when feasible.
    pub objective: Option<f64>,
}

/// Result of the downward budget sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KminReport {
    /// Smallest budget at which the scenario set stays realizable.
    pub k_min: usize,
    /// Proven-optimal plan at `k_min`.
    pub plan: SitingPlan,
    /// Objective at the unconstrained budget `K = E`.
    pub objective_full: f64,
    /// One row per budget visited, descending from `E`.
    pub table: Vec<KminRow>,
    /// 1-based dataset indices of scenarios dropped because no reactance
    /// within ±100% of nominal realizes them even with every line
    /// controllable.
    pub dropped: Vec<usize>,
}

/// Checks whether a single flow pattern is realizable with every line
/// adjustable: does some `x ∈ [0, 2x°]` solve the flow equations?
fn feasible_at_full_budget(net: &Network, f_s: &[f64], x_nominal: &[f64]) -> Result<bool> {
    let e = net.n_branches();
    let n = net.n_buses();
    let mut lp = LinearProgram::new(e + n);
    for i in 0..e {
        lp.lower[i] = REACTANCE_FLOOR.min(x_nominal[i]);
        lp.upper[i] = 2.0 * x_nominal[i];
    }
    let mut eq = Vec::new();
    for (i, br) in net.branches.iter().enumerate() {
        if f_s[i] != 0.0 {
            eq.push((i, i, f_s[i]));
        }
        eq.push((i, e + br.from, -1.0));
        eq.push((i, e + br.to, 1.0));
    }
    lp.a_eq = crate::opt::CscMatrix::from_triplets(e, e + n, &eq);
    lp.b_eq = vec![0.0; e];
    Ok(matches!(lp_solve(&lp)?, LpOutcome::Optimal(_)))
}

/// Sweeps the controller budget downward from `K = E` and reports the
/// smallest feasible budget, the plan there, and the capacity at every
/// budget along the way.
///
/// Scenarios that are unrealizable even with every line controllable are
/// dropped up front and listed in the report. When a solve places fewer
/// controllers than its budget allows, every intermediate budget down to
/// that count shares the same optimal plan (capacity is nonincreasing in
/// the budget, and the plan stays feasible), so the sweep skips directly
/// to the next decision point.
pub fn kmin_search(net: &Network, set: &ScenarioSet, s_prime: usize) -> Result<KminReport> {
    let e = net.n_branches();
    let base = SitingProblem::from_set(net, set, s_prime, e)?;

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (s, f_s) in base.flows.iter().enumerate() {
        if feasible_at_full_budget(net, f_s, &base.x_nominal)? {
            kept.push(f_s.clone());
        } else {
            let index = set.scenarios[s].index;
            log::warn!(
                "scenario {index} is not realizable within ±100% of nominal; dropped from siting"
            );
            dropped.push(index);
        }
    }
    if kept.is_empty() {
        return Err(Error::NotRealizable);
    }

    let mut problem = SitingProblem {
        flows: kept,
        x_nominal: base.x_nominal,
        budget: e,
        exempt_bridges: base.exempt_bridges,
    };

    let mut table = Vec::new();
    let mut best: Option<SitingPlan> = None;
    let mut objective_full = 0.0;
    let mut k = e;
    loop {
        problem.budget = k;
        match solve_siting(net, &problem)? {
            SitingOutcome::Plan(plan) => {
                let n_active = plan.n_active();
                // The plan is optimal for every budget from k down to its
                // own controller count.
                for fill in (n_active..=k).rev() {
                    table.push(KminRow {
                        k: fill,
                        feasible: true,
                        objective: Some(plan.objective),
                    });
                }
                if k == e {
                    objective_full = plan.objective;
                }
                log::info!(
                    "budget {k}: capacity {:.6} p.u. with {n_active} controllers",
                    plan.objective
                );
                best = Some(plan);
                if n_active == 0 {
                    break;
                }
                k = n_active - 1;
            }
            SitingOutcome::Infeasible => {
                table.push(KminRow {
                    k,
                    feasible: false,
                    objective: None,
                });
                break;
            }
        }
    }

    let plan = best.expect("full budget proved feasible for kept scenarios");
    let k_min = table
        .iter()
        .filter(|row| row.feasible)
        .map(|row| row.k)
        .min()
        .expect("at least one feasible row");
    Ok(KminReport {
        k_min,
        plan,
        objective_full,
        table,
        dropped,
    })
}

/// Relative adjustment ranges of a plan. Lines without a controller get
/// exact zeros regardless of rounding in the solved ranges.
pub fn adjustment_profile(plan: &SitingPlan, x_nominal: &[f64]) -> AdjustmentProfile {
    let e = x_nominal.len();
    let mut gamma_down = vec![0.0; e];
    let mut gamma_up = vec![0.0; e];
    for i in 0..e {
        if plan.d[i] {
            gamma_down[i] = (plan.x_lo[i] - x_nominal[i]) / x_nominal[i];
            gamma_up[i] = (plan.x_hi[i] - x_nominal[i]) / x_nominal[i];
        }
    }
    AdjustmentProfile {
        gamma_down,
        gamma_up,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Branch, Bus, BusKind, Generator};

    fn triangle() -> Network {
        let bus = |id: usize, kind: BusKind| Bus {
            id,
            kind,
            p_demand: 0.0,
            q_demand: 0.0,
            v_setpoint: 1.0,
        };
        let branch = |from: usize, to: usize| Branch {
            from,
            to,
            r: 0.0,
            x_nominal: 1.0,
            b_charging: 0.0,
            tap: 1.0,
            f_rating: 5.0,
        };
        Network::new(
            vec![
                bus(0, BusKind::Slack),
                bus(1, BusKind::Pq),
                bus(2, BusKind::Pq),
            ],
            vec![branch(0, 1), branch(1, 2), branch(2, 0)],
            vec![Generator {
                bus: 0,
                p_min: 0.0,
                p_max: 10.0,
                cost_quadratic: 1.0,
                p_nominal: 1.0,
            }],
            100.0,
        )
        .unwrap()
    }

    fn set_of(scenarios: Vec<crate::scenario::Scenario>) -> ScenarioSet {
        ScenarioSet {
            scenarios,
            rng_seed: 0,
            config: crate::scenario::GenerationConfig {
                requested: 0,
                u_p_range: crate::scenario::U_P_RANGE,
                u_q_range: crate::scenario::U_Q_RANGE,
            },
            counts: Default::default(),
        }
    }

    fn problem(net: &Network, flows: Vec<Vec<f64>>, budget: usize) -> SitingProblem {
        SitingProblem {
            flows,
            x_nominal: net.x_nominal(),
            budget,
            exempt_bridges: true,
        }
    }

    /// The shifted triangle pattern needs total range exactly 1: the
    /// cycle equation forces x_0 = x_1 + x_2, one unit away from nominal
    /// in l1 distance, reachable with a single controller.
    #[test]
    fn triangle_needs_one_controller_and_unit_range() {
        let net = triangle();
        let target = vec![0.5, -0.5, -0.5];

        let p1 = problem(&net, vec![target.clone()], 1);
        match solve_siting(&net, &p1).unwrap() {
            SitingOutcome::Plan(plan) => {
                assert!((plan.objective - 1.0).abs() < 1e-7);
                assert_eq!(plan.n_active(), 1);
                plan.validate(&net, &p1).unwrap();
            }
            SitingOutcome::Infeasible => panic!("budget 1 suffices"),
        }

        let p0 = problem(&net, vec![target], 0);
        assert!(matches!(
            solve_siting(&net, &p0).unwrap(),
            SitingOutcome::Infeasible
        ));
    }

    #[test]
    fn nominal_flows_need_no_controllers() {
        let net = triangle();
        // Flows solving the nominal system: injections (1, -1, 0).
        let target = vec![2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0];
        let p = problem(&net, vec![target], 0);
        match solve_siting(&net, &p).unwrap() {
            SitingOutcome::Plan(plan) => {
                assert!(plan.objective.abs() < 1e-8);
                assert_eq!(plan.n_active(), 0);
                plan.validate(&net, &p).unwrap();
            }
            SitingOutcome::Infeasible => panic!("nominal flows are realizable at nominal x"),
        }
    }

    #[test]
    fn variable_layout_matches_construction_arithmetic() {
        let net = triangle();
        let flows = vec![vec![0.5, -0.5, -0.5], vec![0.4, -0.6, -0.6]];
        let built = build(&net, &flows, &net.x_nominal(), 2);
        let e = 3;
        let n = 3;
        assert_eq!(built.mip.lp.n_vars(), 3 * e + 2 * (e + n));
        assert_eq!(built.mip.integer.iter().filter(|&&b| b).count(), e);
        assert_eq!(built.mip.lp.b_eq.len(), 2 * e);
        assert_eq!(built.mip.lp.b_ub.len(), 1 + 2 * e + 2 * 2 * e);
        assert_eq!(built.mip.lp.b_ub[0], 2.0);
    }

    #[test]
    fn kmin_on_triangle_is_one() {
        let net = triangle();
        let set = set_of(vec![crate::scenario::Scenario {
            index: 1,
            u_p: vec![1.0; 3],
            u_q: vec![1.0; 3],
            p_demand: vec![0.0, 0.5, 0.5],
            q_demand: vec![0.0; 3],
            p_gen: vec![1.0],
            f_target: vec![0.5, -0.5, -0.5],
            f_nominal_dc: vec![2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
            difficulty: 1.0 / 12.0,
        }]);
        let report = kmin_search(&net, &set, 1).unwrap();
        assert_eq!(report.k_min, 1);
        assert!(report.dropped.is_empty());
        assert!((report.objective_full - 1.0).abs() < 1e-7);
        assert!((report.plan.objective - 1.0).abs() < 1e-7);
        // Budgets 3, 2, 1 feasible at capacity 1; budget 0 infeasible.
        assert_eq!(report.table.len(), 4);
        for row in &report.table[..3] {
            assert!(row.feasible);
            assert!((row.objective.unwrap() - 1.0).abs() < 1e-7);
        }
        assert_eq!(report.table[3], KminRow { k: 0, feasible: false, objective: None });
    }

    #[test]
    fn unrealizable_scenario_is_dropped_with_report() {
        let net = triangle();
        let good = crate::scenario::Scenario {
            index: 1,
            u_p: vec![1.0; 3],
            u_q: vec![1.0; 3],
            p_demand: vec![0.0, 0.5, 0.5],
            q_demand: vec![0.0; 3],
            p_gen: vec![1.0],
            f_target: vec![0.5, -0.5, -0.5],
            f_nominal_dc: vec![2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
            difficulty: 1.0 / 12.0,
        };
        // A circulation: balances at every bus but realizable by no
        // positive reactance, let alone one within bounds.
        let mut bad = good.clone();
        bad.index = 2;
        bad.f_target = vec![1.0, 1.0, 1.0];
        bad.difficulty = 1.0;
        let set = set_of(vec![good, bad]);
        let report = kmin_search(&net, &set, 2).unwrap();
        assert_eq!(report.dropped, vec![2]);
        assert_eq!(report.k_min, 1);
    }

    #[test]
    fn bridge_lines_are_pinned_to_nominal() {
        // Triangle plus a spur: edge 3 (2-3) is outside every cycle.
        let bus = |id: usize, kind: BusKind| Bus {
            id,
            kind,
            p_demand: 0.0,
            q_demand: 0.0,
            v_setpoint: 1.0,
        };
        let branch = |from: usize, to: usize| Branch {
            from,
            to,
            r: 0.0,
            x_nominal: 1.0,
            b_charging: 0.0,
            tap: 1.0,
            f_rating: 5.0,
        };
        let net = Network::new(
            vec![
                bus(0, BusKind::Slack),
                bus(1, BusKind::Pq),
                bus(2, BusKind::Pq),
                bus(3, BusKind::Pq),
            ],
            vec![branch(0, 1), branch(1, 2), branch(2, 0), branch(2, 3)],
            vec![Generator {
                bus: 0,
                p_min: 0.0,
                p_max: 10.0,
                cost_quadratic: 1.0,
                p_nominal: 1.0,
            }],
            100.0,
        )
        .unwrap();
        // Any bridge flow value works: the spur angle absorbs it.
        let target = vec![0.5, -0.5, -0.5, 0.7];
        let with = problem(&net, vec![target.clone()], 4);
        let plan = match solve_siting(&net, &with).unwrap() {
            SitingOutcome::Plan(p) => p,
            SitingOutcome::Infeasible => panic!("feasible"),
        };
        assert!(!plan.d[3]);
        assert_eq!(plan.x_lo[3], 1.0);
        assert_eq!(plan.x_hi[3], 1.0);
        assert!((plan.objective - 1.0).abs() < 1e-7);
        plan.validate(&net, &with).unwrap();

        let mut without = with.clone();
        without.exempt_bridges = false;
        match solve_siting(&net, &without).unwrap() {
            SitingOutcome::Plan(p) => assert!((p.objective - 1.0).abs() < 1e-7),
            SitingOutcome::Infeasible => panic!("exemption must not change feasibility"),
        }
    }

    #[test]
    fn profile_reports_relative_ranges() {
        let plan = SitingPlan {
            d: vec![true, false, true],
            x_lo: vec![0.5, 1.0, 1.0],
            x_hi: vec![1.0, 1.0, 2.0],
            x_s: vec![],
            theta_s: vec![],
            objective: 1.5,
        };
        let profile = adjustment_profile(&plan, &[1.0, 1.0, 1.0]);
        assert_eq!(profile.gamma_down, vec![-0.5, 0.0, 0.0]);
        assert_eq!(profile.gamma_up, vec![0.0, 0.0, 1.0]);
    }
}
