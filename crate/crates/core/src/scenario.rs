//! Desired-flow scenario dataset: demand scaling, quadratic dispatch,
//! feasibility and realizability filtering, difficulty sorting.
//!
//! The pipeline draws per-bus demand multipliers, dispatches each demand
//! profile through a quadratic-cost program over generator outputs and
//! branch flows, drops profiles the grid cannot serve, drops flow
//! patterns no positive reactance vector can realize, attaches the
//! nominal-reactance flow state for the same injections, and sorts by
//! how far each target sits from that state.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dc::{self, check_realizability, solve_dcpf};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::opt::{
    lp_solve, qp_solve, CscMatrix, LinearProgram, LpOutcome, QpOptions, QpOutcome,
    QuadraticProgram,
};

/// Range of the active-demand multipliers.
pub const U_P_RANGE: (f64, f64) = (0.2, 2.0);
/// Range of the reactive-demand multipliers.
pub const U_Q_RANGE: (f64, f64) = (0.9, 1.1);
/// Zero quadratic cost coefficients are lifted to this value so the
/// dispatch stays strictly convex.
pub const COST_LIFT: f64 = 1e-6;
/// Allowed active-power imbalance of a dispatch before the nominal flow
/// solve; anything larger is a solver fault.
const DISPATCH_BALANCE_TOL: f64 = 1e-6;

/// One demand draw: multipliers and the scaled demand vectors.
#[derive(Debug, Clone)]
pub struct DemandDraw {
    pub u_p: Vec<f64>,
    pub u_q: Vec<f64>,
    pub p_demand: Vec<f64>,
    pub q_demand: Vec<f64>,
}

/// A dispatched, filtered, ranked flow scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// 1-based rank in the difficulty-sorted set.
    pub index: usize,
    pub u_p: Vec<f64>,
    pub u_q: Vec<f64>,
    pub p_demand: Vec<f64>,
    pub q_demand: Vec<f64>,
    /// Dispatch per generator.
    pub p_gen: Vec<f64>,
    /// Target branch flows from the dispatch program.
    pub f_target: Vec<f64>,
    /// Flow state at nominal reactances for the same injections.
    pub f_nominal_dc: Vec<f64>,
    /// Squared flow distance between target and nominal state.
    pub difficulty: f64,
}

impl Scenario {
    /// Re-checks the invariants every persisted scenario must satisfy:
    /// dimensions, nodal balance, flow limits, dispatch bounds,
    /// realizability, and the difficulty formula.
    pub fn validate(&self, net: &Network) -> Result<()> {
        let n = net.n_buses();
        let e = net.n_branches();
        let g = net.n_generators();
        let dims_ok = self.u_p.len() == n
            && self.u_q.len() == n
            && self.p_demand.len() == n
            && self.q_demand.len() == n
            && self.p_gen.len() == g
            && self.f_target.len() == e
            && self.f_nominal_dc.len() == e;
        if !dims_ok {
            return Err(Error::InvalidNetwork(
                "scenario dimensions do not match the network".into(),
            ));
        }
        let p = net.injections(&self.p_gen, &self.p_demand);
        let outflow = net.incidence().apply_transpose(&self.f_target);
        for k in 0..n {
            if (outflow[k] - p[k]).abs() > 1e-7 {
                return Err(Error::InvalidNetwork(format!(
                    "scenario violates balance at bus {k} by {}",
                    (outflow[k] - p[k]).abs()
                )));
            }
        }
        for (idx, br) in net.branches.iter().enumerate() {
            if self.f_target[idx].abs() > br.f_rating + 1e-7 {
                return Err(Error::InvalidNetwork(format!(
                    "scenario exceeds rating on branch {idx}"
                )));
            }
        }
        for (gi, gen) in net.generators.iter().enumerate() {
            if self.p_gen[gi] < gen.p_min - 1e-7 || self.p_gen[gi] > gen.p_max + 1e-7 {
                return Err(Error::InvalidNetwork(format!(
                    "scenario dispatch outside bounds at generator {gi}"
                )));
            }
        }
        if !check_realizability(net, &self.f_target)?.is_realizable() {
            return Err(Error::NotRealizable);
        }
        let d = dc::difficulty(&self.f_target, &self.f_nominal_dc);
        if (d - self.difficulty).abs() > 1e-9 * (1.0 + d) {
            return Err(Error::InvalidNetwork(format!(
                "scenario difficulty {} does not match flows ({d})",
                self.difficulty
            )));
        }
        Ok(())
    }
}

/// Knobs recorded alongside a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerationConfig {
    pub requested: usize,
    pub u_p_range: (f64, f64),
    pub u_q_range: (f64, f64),
}

/// How many draws each pipeline stage removed.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct FilterCounts {
    pub requested: usize,
    pub infeasible: usize,
    pub not_realizable: usize,
    pub kept: usize,
}

/// The difficulty-sorted scenario dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub rng_seed: u64,
    pub config: GenerationConfig,
    pub counts: FilterCounts,
}

/// Uniform draw that only depends on the generator's 64-bit output
/// stream, so datasets reproduce bit-for-bit across platforms.
fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * u
}

/// Draws `s` demand profiles. Per scenario, the active multipliers are
/// drawn for all buses in index order, then the reactive multipliers.
pub fn generate_demands(net: &Network, s: usize, seed: u64) -> Vec<DemandDraw> {
    assert!(s >= 1);
    let n = net.n_buses();
    let (p0, q0) = net.nominal_demand();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(s);
    for _ in 0..s {
        let u_p: Vec<f64> = (0..n)
            .map(|_| uniform(&mut rng, U_P_RANGE.0, U_P_RANGE.1))
            .collect();
        let u_q: Vec<f64> = (0..n)
            .map(|_| uniform(&mut rng, U_Q_RANGE.0, U_Q_RANGE.1))
            .collect();
        let p_demand: Vec<f64> = (0..n).map(|k| p0[k] * u_p[k]).collect();
        let q_demand: Vec<f64> = (0..n).map(|k| q0[k] * u_q[k]).collect();
        draws.push(DemandDraw {
            u_p,
            u_q,
            p_demand,
            q_demand,
        });
    }
    draws
}

/// Result of the dispatch program for one demand profile.
#[derive(Debug, Clone)]
pub enum P1Outcome {
    Dispatch(Dispatch),
    /// The demand cannot be served within generator and line limits.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct Dispatch {
    pub p_gen: Vec<f64>,
    pub flows: Vec<f64>,
    /// Quadratic dispatch cost.
    pub cost: f64,
}

/// Minimizes the quadratic generation cost subject to nodal balance,
/// generator bounds, and line ratings. Flows are free beyond balance:
/// no reactance relation constrains them here.
pub fn solve_p1(net: &Network, p_demand: &[f64]) -> Result<P1Outcome> {
    let n = net.n_buses();
    let e = net.n_branches();
    let g = net.n_generators();
    assert_eq!(p_demand.len(), n);
    let nv = g + e;
    let ratings = net.ratings();

    // Balance rows: Aᵀ f - Σ_gens p_g = -p_demand per bus.
    let mut rows = Vec::new();
    for (gi, gen) in net.generators.iter().enumerate() {
        rows.push((gen.bus, gi, -1.0));
    }
    for (idx, br) in net.branches.iter().enumerate() {
        rows.push((br.from, g + idx, 1.0));
        rows.push((br.to, g + idx, -1.0));
    }
    let balance = CscMatrix::from_triplets(n, nv, &rows);
    let rhs: Vec<f64> = p_demand.iter().map(|d| -d).collect();

    // Cheap feasibility gate before the quadratic solve.
    let mut lp = LinearProgram::new(nv);
    lp.a_eq = balance.clone();
    lp.b_eq = rhs.clone();
    for (gi, gen) in net.generators.iter().enumerate() {
        lp.lower[gi] = gen.p_min;
        lp.upper[gi] = gen.p_max;
    }
    for idx in 0..e {
        lp.lower[g + idx] = -ratings[idx];
        lp.upper[g + idx] = ratings[idx];
    }
    match lp_solve(&lp)? {
        LpOutcome::Optimal(_) => {}
        LpOutcome::Infeasible => return Ok(P1Outcome::Infeasible),
        LpOutcome::Unbounded => {
            return Err(Error::SolverFault("feasibility program unbounded".into()))
        }
    }

    // Quadratic dispatch. Rows: balance equalities, then the variable
    // boxes (the solver takes bounds as rows).
    let mut p_diag = vec![0.0; nv];
    for (gi, gen) in net.generators.iter().enumerate() {
        let c = if gen.cost_quadratic > 0.0 {
            gen.cost_quadratic
        } else {
            COST_LIFT
        };
        p_diag[gi] = 2.0 * c;
    }
    let mut box_rows = Vec::new();
    for j in 0..nv {
        box_rows.push((n + j, j, 1.0));
    }
    let mut m_rows = rows.clone();
    m_rows.extend(box_rows);
    let m = CscMatrix::from_triplets(n + nv, nv, &m_rows);
    let mut l = rhs.clone();
    let mut u = rhs.clone();
    for gen in &net.generators {
        l.push(gen.p_min);
        u.push(gen.p_max);
    }
    for idx in 0..e {
        l.push(-ratings[idx]);
        u.push(ratings[idx]);
    }
    let qp = QuadraticProgram {
        p_diag,
        q: vec![0.0; nv],
        m,
        l,
        u,
    };
    match qp_solve(&qp, &QpOptions::default())? {
        QpOutcome::Optimal(sol) => {
            let p_gen = sol.x[..g].to_vec();
            let flows = sol.x[g..].to_vec();
            Ok(P1Outcome::Dispatch(Dispatch {
                p_gen,
                flows,
                cost: sol.objective,
            }))
        }
        QpOutcome::PrimalInfeasible { .. } => Ok(P1Outcome::Infeasible),
        QpOutcome::DualInfeasible { .. } => Err(Error::SolverFault(
            "dispatch objective unbounded".into(),
        )),
        QpOutcome::MaxIterations(_) => Err(Error::SolverFault(
            "dispatch program did not converge".into(),
        )),
    }
}

/// Attaches the nominal-reactance flow state and difficulty to a
/// dispatched draw. Returns `None` when the target pattern is not
/// realizable by any positive reactance vector.
pub fn complete_scenario(
    net: &Network,
    draw: &DemandDraw,
    dispatch: &Dispatch,
) -> Result<Option<Scenario>> {
    if !check_realizability(net, &dispatch.flows)?.is_realizable() {
        return Ok(None);
    }
    let mut p = net.injections(&dispatch.p_gen, &draw.p_demand);
    let imbalance: f64 = p.iter().sum();
    if imbalance.abs() > DISPATCH_BALANCE_TOL {
        return Err(Error::SolverFault(format!(
            "dispatch imbalance {imbalance} exceeds tolerance"
        )));
    }
    let slack = net.slack();
    p[slack] -= imbalance;
    let nominal = solve_dcpf(net, &net.x_nominal(), &p, 0.0)?;
    let difficulty = dc::difficulty(&dispatch.flows, &nominal.flows);
    Ok(Some(Scenario {
        index: 0,
        u_p: draw.u_p.clone(),
        u_q: draw.u_q.clone(),
        p_demand: draw.p_demand.clone(),
        q_demand: draw.q_demand.clone(),
        p_gen: dispatch.p_gen.clone(),
        f_target: dispatch.flows.clone(),
        f_nominal_dc: nominal.flows,
        difficulty,
    }))
}

enum Stage {
    Kept(Scenario),
    Infeasible,
    NotRealizable,
}

/// Runs the full pipeline: draw, dispatch, filter, rank.
pub fn build_dataset(net: &Network, s: usize, seed: u64) -> Result<ScenarioSet> {
    let draws = generate_demands(net, s, seed);
    let stages: Vec<Stage> = draws
        .par_iter()
        .map(|draw| -> Result<Stage> {
            match solve_p1(net, &draw.p_demand)? {
                P1Outcome::Infeasible => Ok(Stage::Infeasible),
                P1Outcome::Dispatch(dispatch) => {
                    match complete_scenario(net, draw, &dispatch)? {
                        Some(sc) => Ok(Stage::Kept(sc)),
                        None => Ok(Stage::NotRealizable),
                    }
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut counts = FilterCounts {
        requested: s,
        ..FilterCounts::default()
    };
    let mut scenarios = Vec::new();
    for stage in stages {
        match stage {
            Stage::Kept(sc) => scenarios.push(sc),
            Stage::Infeasible => counts.infeasible += 1,
            Stage::NotRealizable => counts.not_realizable += 1,
        }
    }
    counts.kept = scenarios.len();
    if scenarios.is_empty() {
        return Err(Error::EmptyDataset { requested: s });
    }
    scenarios.sort_by(|a, b| a.difficulty.total_cmp(&b.difficulty));
    for (i, sc) in scenarios.iter_mut().enumerate() {
        sc.index = i + 1;
    }
    Ok(ScenarioSet {
        scenarios,
        rng_seed: seed,
        config: GenerationConfig {
            requested: s,
            u_p_range: U_P_RANGE,
            u_q_range: U_Q_RANGE,
        },
        counts,
    })
}

/// Picks `count` scenarios at sorted positions `1, 1+stride, …`
/// (1-based), preserving order.
pub fn select_every(set: &ScenarioSet, stride: usize, count: usize) -> Result<Vec<Scenario>> {
    let len = set.scenarios.len();
    if stride == 0 || count == 0 || stride * (count - 1) >= len {
        return Err(Error::SelectionOutOfRange { stride, count, len });
    }
    Ok((0..count)
        .map(|i| set.scenarios[i * stride].clone())
        .collect())
}

#[derive(Serialize, Deserialize)]
struct SetHeader {
    rng_seed: u64,
    config: GenerationConfig,
    counts: FilterCounts,
}

impl ScenarioSet {
    /// Writes the set as JSON lines: one metadata header line, then one
    /// scenario per line.
    pub fn save_jsonl<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let header = SetHeader {
            rng_seed: self.rng_seed,
            config: self.config.clone(),
            counts: self.counts.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for sc in &self.scenarios {
            serde_json::to_writer(&mut w, sc)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_jsonl<P: AsRef<Path>>(path: P) -> Result<ScenarioSet> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines.next().ok_or_else(|| {
            Error::Parse {
                path: "dataset".into(),
                line: 1,
                msg: "missing metadata header".into(),
            }
        })??;
        let header: SetHeader = serde_json::from_str(&header_line)?;
        let mut scenarios = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            scenarios.push(serde_json::from_str(&line)?);
        }
        Ok(ScenarioSet {
            scenarios,
            rng_seed: header.rng_seed,
            config: header.config,
            counts: header.counts,
        })
    }

    /// Validates every member against the network.
    pub fn validate(&self, net: &Network) -> Result<()> {
        for sc in &self.scenarios {
            sc.validate(net)?;
        }
        for pair in self.scenarios.windows(2) {
            if pair[0].difficulty > pair[1].difficulty {
                return Err(Error::InvalidNetwork(
                    "difficulty order violated".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Branch, Bus, BusKind, Generator};

    fn two_bus(rating: f64, pmax: f64) -> Network {
        Network::new(
            vec![
                Bus {
                    id: 0,
                    kind: BusKind::Slack,
                    p_demand: 0.0,
                    q_demand: 0.0,
                    v_setpoint: 1.0,
                },
                Bus {
                    id: 1,
                    kind: BusKind::Pq,
                    p_demand: 1.0,
                    q_demand: 0.2,
                    v_setpoint: 1.0,
                },
            ],
            vec![Branch {
                from: 0,
                to: 1,
                r: 0.0,
                x_nominal: 0.5,
                b_charging: 0.0,
                tap: 1.0,
                f_rating: rating,
            }],
            vec![Generator {
                bus: 0,
                p_min: 0.0,
                p_max: pmax,
                cost_quadratic: 1.0,
                p_nominal: 1.0,
            }],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn demand_draws_are_reproducible_and_in_range() {
        let net = two_bus(2.0, 2.0);
        let a = generate_demands(&net, 4, 99);
        let b = generate_demands(&net, 4, 99);
        for (da, db) in a.iter().zip(&b) {
            assert_eq!(da.u_p, db.u_p);
            assert_eq!(da.u_q, db.u_q);
        }
        for d in &a {
            assert!(d.u_p.iter().all(|&u| (0.2..=2.0).contains(&u)));
            assert!(d.u_q.iter().all(|&u| (0.9..=1.1).contains(&u)));
            // Zero-demand buses stay zero under scaling.
            assert_eq!(d.p_demand[0], 0.0);
            assert!((d.p_demand[1] - d.u_p[1]).abs() < 1e-15);
        }
        let c = generate_demands(&net, 4, 100);
        assert_ne!(a[0].u_p, c[0].u_p);
    }

    #[test]
    fn single_line_dispatch_is_forced() {
        let net = two_bus(2.0, 2.0);
        match solve_p1(&net, &[0.0, 1.0]).unwrap() {
            P1Outcome::Dispatch(d) => {
                assert!((d.p_gen[0] - 1.0).abs() < 1e-6);
                assert!((d.flows[0] - 1.0).abs() < 1e-6);
                assert!((d.cost - 1.0).abs() < 1e-5);
            }
            P1Outcome::Infeasible => panic!("feasible case"),
        }
    }

    #[test]
    fn zero_demand_dispatches_to_zero() {
        let net = two_bus(2.0, 2.0);
        match solve_p1(&net, &[0.0, 0.0]).unwrap() {
            P1Outcome::Dispatch(d) => {
                assert!(d.p_gen[0].abs() < 1e-6);
                assert!(d.flows[0].abs() < 1e-6);
                assert!(d.cost.abs() < 1e-8);
            }
            P1Outcome::Infeasible => panic!("feasible case"),
        }
    }

    #[test]
    fn excess_demand_is_infeasible() {
        let net = two_bus(2.0, 2.0);
        assert!(matches!(
            solve_p1(&net, &[0.0, 3.0]).unwrap(),
            P1Outcome::Infeasible
        ));
        // Rating binds even when capacity suffices.
        let tight = two_bus(0.5, 2.0);
        assert!(matches!(
            solve_p1(&tight, &[0.0, 1.0]).unwrap(),
            P1Outcome::Infeasible
        ));
    }

    #[test]
    fn selection_strides_and_errors() {
        let sc = Scenario {
            index: 0,
            u_p: vec![],
            u_q: vec![],
            p_demand: vec![],
            q_demand: vec![],
            p_gen: vec![],
            f_target: vec![],
            f_nominal_dc: vec![],
            difficulty: 0.0,
        };
        let mut set = ScenarioSet {
            scenarios: (0..10)
                .map(|i| {
                    let mut s = sc.clone();
                    s.index = i + 1;
                    s.difficulty = i as f64;
                    s
                })
                .collect(),
            rng_seed: 0,
            config: GenerationConfig {
                requested: 10,
                u_p_range: U_P_RANGE,
                u_q_range: U_Q_RANGE,
            },
            counts: FilterCounts::default(),
        };
        let picked = select_every(&set, 3, 4).unwrap();
        assert_eq!(
            picked.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![1, 4, 7, 10]
        );
        let all = select_every(&set, 1, 10).unwrap();
        assert_eq!(all.len(), 10);
        assert!(matches!(
            select_every(&set, 3, 5),
            Err(Error::SelectionOutOfRange { .. })
        ));
        set.scenarios.truncate(1);
        assert!(select_every(&set, 1, 1).is_ok());
    }
}
