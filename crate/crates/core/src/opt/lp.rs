//! Bounded-variable revised simplex.
//!
//! Problems are stated over structural variables `x` with box bounds and
//! two constraint blocks, `A_eq x = b_eq` and `A_ub x <= b_ub`. A logical
//! variable is attached to every row internally (fixed at zero for
//! equalities, slack for inequalities), the basis is factorized sparsely,
//! and infeasibility is removed by a composite phase 1 that prices the
//! bound violations of basic variables directly. Dantzig pricing switches
//! to Bland's rule after a run of degenerate steps, which guarantees
//! termination.

use super::sparse::{BasisFactorization, CscMatrix, UpdateOutcome};
use crate::error::{Error, Result};

pub const INF: f64 = f64::INFINITY;

/// Feasibility tolerance on variable bounds.
const FEAS_TOL: f64 = 1e-9;
/// Optimality tolerance on reduced costs.
const OPT_TOL: f64 = 1e-9;
/// Smallest pivot element accepted by the ratio test.
const PIVOT_TOL: f64 = 1e-8;
/// Steps shorter than this count as degenerate.
const DEGEN_TOL: f64 = 1e-12;
/// Basis updates between refactorizations.
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Objective coefficients, minimized.
    pub objective: Vec<f64>,
    pub a_eq: CscMatrix,
    pub b_eq: Vec<f64>,
    pub a_ub: CscMatrix,
    pub b_ub: Vec<f64>,
    /// Lower variable bounds; `-INF` allowed.
    pub lower: Vec<f64>,
    /// Upper variable bounds; `INF` allowed.
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A problem with `n` variables, no rows, and free bounds.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            a_eq: CscMatrix::zeros(0, n),
            b_eq: Vec::new(),
            a_ub: CscMatrix::zeros(0, n),
            b_ub: Vec::new(),
            lower: vec![-INF; n],
            upper: vec![INF; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.n_vars();
        let ok = self.a_eq.ncols() == n
            && self.a_ub.ncols() == n
            && self.b_eq.len() == self.a_eq.nrows()
            && self.b_ub.len() == self.a_ub.nrows()
            && self.lower.len() == n
            && self.upper.len() == n;
        if !ok {
            return Err(Error::SolverFault("inconsistent program dimensions".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::SolverFault(format!(
                    "bad bounds [{}, {}] on variable {j}",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        if self
            .b_eq
            .iter()
            .chain(&self.b_ub)
            .chain(&self.objective)
            .any(|v| !v.is_finite())
        {
            return Err(Error::SolverFault("non-finite program data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers on equality rows, in the convention
    /// `c + A_eqᵀ λ_eq + A_ubᵀ λ_ub = reduced costs`.
    pub duals_eq: Vec<f64>,
    /// Multipliers on inequality rows, nonnegative at optimality.
    pub duals_ub: Vec<f64>,
    /// Reduced costs of the structural variables.
    pub reduced_costs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

/// Basis snapshot used for warm starts.
#[derive(Debug, Clone)]
pub struct LpBasis {
    status: Vec<Status>,
    basis: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic with both bounds infinite, kept at zero.
    Free,
}

pub fn lp_solve(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.check()?;
    let (outcome, _) = Simplex::new(lp, &lp.lower, &lp.upper)?.solve(None)?;
    Ok(outcome)
}

/// Solves with overridden structural bounds and an optional starting
/// basis, returning the final basis for reuse.
pub fn lp_solve_warm(
    lp: &LinearProgram,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&LpBasis>,
) -> Result<(LpOutcome, LpBasis)> {
    lp.check()?;
    Simplex::new(lp, lower, upper)?.solve(warm)
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m: usize,
    m_eq: usize,
    a: CscMatrix,
    b: Vec<f64>,
    /// Bounds over structural then logical variables.
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    x: Vec<f64>,
    fact: BasisFactorization,
    updates: usize,
    degenerate_run: usize,
    bland: bool,
}

enum Ratio {
    /// Basic variable at `pos` leaves after a step of `t`.
    Block { pos: usize, t: f64, exit_upper: bool },
    /// The entering variable reaches its opposite bound first.
    BoundFlip { t: f64 },
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, lower_s: &[f64], upper_s: &[f64]) -> Result<Self> {
        let n = lp.n_vars();
        let m_eq = lp.a_eq.nrows();
        let m = m_eq + lp.a_ub.nrows();
        assert_eq!(lower_s.len(), n);
        assert_eq!(upper_s.len(), n);

        let a = lp.a_eq.vstack(&lp.a_ub);
        let mut b = lp.b_eq.clone();
        b.extend_from_slice(&lp.b_ub);

        let mut lower = lower_s.to_vec();
        let mut upper = upper_s.to_vec();
        for i in 0..m {
            if i < m_eq {
                lower.push(0.0);
                upper.push(0.0);
            } else {
                lower.push(0.0);
                upper.push(INF);
            }
        }

        let fact = BasisFactorization::factor(&vec![Vec::new(); 0], REFACTOR_EVERY)?;
        Ok(Simplex {
            lp,
            n,
            m,
            m_eq,
            a,
            b,
            lower,
            upper,
            status: Vec::new(),
            basis: Vec::new(),
            x: Vec::new(),
            fact,
            updates: 0,
            degenerate_run: 0,
            bland: false,
        })
    }

    /// Default nonbasic status for a variable under current bounds.
    fn resting_status(&self, j: usize) -> Status {
        let (l, u) = (self.lower[j], self.upper[j]);
        if l.is_finite() {
            Status::AtLower
        } else if u.is_finite() {
            Status::AtUpper
        } else {
            Status::Free
        }
    }

    fn resting_value(&self, j: usize, s: Status) -> f64 {
        match s {
            Status::AtLower => self.lower[j],
            Status::AtUpper => self.upper[j],
            Status::Free => 0.0,
            Status::Basic => unreachable!("resting value of a basic variable"),
        }
    }

    fn install_cold(&mut self) -> Result<()> {
        self.status = (0..self.n + self.m)
            .map(|j| {
                if j >= self.n {
                    Status::Basic
                } else {
                    self.resting_status(j)
                }
            })
            .collect();
        self.basis = (self.n..self.n + self.m).collect();
        self.x = vec![0.0; self.n + self.m];
        for j in 0..self.n {
            self.x[j] = self.resting_value(j, self.status[j]);
        }
        self.refactor()?;
        Ok(())
    }

    fn install_warm(&mut self, warm: &LpBasis) -> Result<()> {
        if warm.status.len() != self.n + self.m || warm.basis.len() != self.m {
            return self.install_cold();
        }
        self.status = warm.status.clone();
        self.basis = warm.basis.clone();
        self.x = vec![0.0; self.n + self.m];
        for j in 0..self.n + self.m {
            match self.status[j] {
                Status::Basic => {}
                s => {
                    // Bounds may have changed since the snapshot; keep the
                    // variable on a bound that still exists.
                    let s = match s {
                        Status::AtLower if !self.lower[j].is_finite() => self.resting_status(j),
                        Status::AtUpper if !self.upper[j].is_finite() => self.resting_status(j),
                        s => s,
                    };
                    self.status[j] = s;
                    self.x[j] = self.resting_value(j, s);
                }
            }
        }
        if self.refactor().is_err() {
            return self.install_cold();
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<()> {
        let cols: Vec<Vec<(usize, f64)>> = self
            .basis
            .iter()
            .map(|&j| self.column(j))
            .collect();
        self.fact = BasisFactorization::factor(&cols, REFACTOR_EVERY)?;
        self.updates = 0;
        self.recompute_basics();
        Ok(())
    }

    /// Constraint column of variable `j` (unit column for logicals).
    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            let (rows, vals) = self.a.col(j);
            rows.iter().copied().zip(vals.iter().copied()).collect()
        } else {
            vec![(j - self.n, 1.0)]
        }
    }

    /// Recomputes basic values as `B⁻¹ (b - N x_N)`.
    fn recompute_basics(&mut self) {
        let mut rhs = self.b.clone();
        for j in 0..self.n + self.m {
            if self.status[j] == Status::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < self.n {
                let (rows, vals) = self.a.col(j);
                for (r, v) in rows.iter().zip(vals) {
                    rhs[*r] -= v * xj;
                }
            } else {
                rhs[j - self.n] -= xj;
            }
        }
        self.fact.ftran(&mut rhs);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = rhs[pos];
        }
    }

    /// Largest bound violation over the basic variables.
    fn max_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .map(|&j| {
                let v = self.x[j];
                (v - self.upper[j]).max(0.0).max(self.lower[j] - v)
            })
            .fold(0.0, f64::max)
    }

    /// Phase-1 costs: +1 on basics above their upper bound, -1 below
    /// their lower bound.
    fn phase1_costs(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n + self.m];
        for &j in &self.basis {
            if self.x[j] > self.upper[j] + FEAS_TOL {
                c[j] = 1.0;
            } else if self.x[j] < self.lower[j] - FEAS_TOL {
                c[j] = -1.0;
            }
        }
        c
    }

    /// Simplex multipliers for a cost vector.
    fn multipliers(&self, costs: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| costs[j]).collect();
        self.fact.btran(&mut y);
        y
    }

    /// Picks an entering variable and its direction (+1 from lower, -1
    /// from upper) under Dantzig pricing, or Bland's rule when anti-
    /// cycling is active.
    fn price(&self, costs: &[f64], y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n + self.m {
            let s = self.status[j];
            if s == Status::Basic || self.upper[j] - self.lower[j] <= 0.0 {
                continue;
            }
            let d = costs[j]
                - if j < self.n {
                    self.a.col_dot(j, y)
                } else {
                    y[j - self.n]
                };
            let (viol, dir) = match s {
                Status::AtLower => (-d, 1.0),
                Status::AtUpper => (d, -1.0),
                Status::Free => (d.abs(), if d > 0.0 { -1.0 } else { 1.0 }),
                Status::Basic => unreachable!(),
            };
            if viol <= OPT_TOL {
                continue;
            }
            if self.bland {
                return Some((j, dir));
            }
            if best.map(|(_, _, v)| viol > v).unwrap_or(true) {
                best = Some((j, dir, viol));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// First-breakpoint ratio test. In phase 1, basics already outside a
    /// bound block only when they reach the violated bound, so a step can
    /// restore their feasibility but never overshoot it.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> Ratio {
        let own_range = self.upper[q] - self.lower[q];
        let mut t_min = if own_range.is_finite() {
            own_range
        } else {
            INF
        };
        let mut block: Option<(usize, bool, f64)> = None;

        for pos in 0..self.m {
            let step = dir * alpha[pos];
            if step.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let v = self.x[j];
            let (l, u) = (self.lower[j], self.upper[j]);
            // Target bound this basic hits first while moving at rate
            // -step per unit of entering increase. A basic already
            // outside a bound and moving further away crosses nothing
            // and must not block (snapping it to the bound it is
            // drifting from would silently corrupt the iterate).
            let (limit, exit_upper) = if step > 0.0 {
                // Basic decreases.
                if v > u + FEAS_TOL {
                    (u, true)
                } else if v < l - FEAS_TOL {
                    continue;
                } else if l.is_finite() {
                    (l, false)
                } else {
                    continue;
                }
            } else {
                // Basic increases.
                if v < l - FEAS_TOL {
                    (l, false)
                } else if v > u + FEAS_TOL {
                    continue;
                } else if u.is_finite() {
                    (u, true)
                } else {
                    continue;
                }
            };
            let t = ((v - limit) / step).max(0.0);
            let better = match block {
                None => t < t_min - 1e-10,
                Some((bpos, _, balpha)) => {
                    if t < t_min - 1e-10 {
                        true
                    } else if t <= t_min + 1e-10 {
                        if self.bland {
                            self.basis[pos] < self.basis[bpos]
                        } else {
                            step.abs() > balpha
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                t_min = t.min(t_min);
                block = Some((pos, exit_upper, step.abs()));
            }
        }

        match block {
            Some((pos, exit_upper, _)) => Ratio::Block {
                pos,
                t: t_min,
                exit_upper,
            },
            None if t_min.is_finite() => Ratio::BoundFlip { t: t_min },
            None => Ratio::Unbounded,
        }
    }

    /// Applies a step of `t` along the entering variable `q`.
    fn apply_step(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t != 0.0 {
            for pos in 0..self.m {
                if alpha[pos] != 0.0 {
                    let j = self.basis[pos];
                    self.x[j] -= t * dir * alpha[pos];
                }
            }
            self.x[q] += t * dir;
        }
    }

    fn track_degeneracy(&mut self, t: f64) {
        if t <= DEGEN_TOL {
            self.degenerate_run += 1;
            if self.degenerate_run > 10 * (self.m + self.n) {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    /// Runs one simplex phase to completion. Returns `None` when pricing
    /// finds no entering candidate, otherwise the unbounded flag.
    fn run_phase(&mut self, phase1: bool) -> Result<PhaseEnd> {
        let max_iters = 40 * (self.m + self.n) + 10_000;
        for _ in 0..max_iters {
            if phase1 && self.max_infeasibility() <= FEAS_TOL {
                return Ok(PhaseEnd::Done);
            }
            let costs = if phase1 {
                self.phase1_costs()
            } else {
                let mut c = self.lp.objective.clone();
                c.resize(self.n + self.m, 0.0);
                c
            };
            let y = self.multipliers(&costs);
            let Some((q, dir)) = self.price(&costs, &y) else {
                return Ok(PhaseEnd::Priced);
            };

            let mut alpha = vec![0.0; self.m];
            for (r, v) in self.column(q) {
                alpha[r] = v;
            }
            self.fact.ftran(&mut alpha);

            match self.ratio_test(q, dir, &alpha) {
                Ratio::BoundFlip { t } => {
                    self.apply_step(q, dir, t, &alpha);
                    self.status[q] = if dir > 0.0 {
                        Status::AtUpper
                    } else {
                        Status::AtLower
                    };
                    self.x[q] = self.resting_value(q, self.status[q]);
                    self.track_degeneracy(t);
                }
                Ratio::Block { pos, t, exit_upper } => {
                    self.apply_step(q, dir, t, &alpha);
                    let leave = self.basis[pos];
                    self.status[leave] = if exit_upper {
                        Status::AtUpper
                    } else {
                        Status::AtLower
                    };
                    self.x[leave] = self.resting_value(leave, self.status[leave]);
                    self.basis[pos] = q;
                    self.status[q] = Status::Basic;
                    self.track_degeneracy(t);
                    self.updates += 1;
                    if self.fact.update(pos, &alpha) == UpdateOutcome::NeedsRefactor {
                        self.refactor()?;
                    } else if self.updates >= REFACTOR_EVERY {
                        self.refactor()?;
                    }
                }
                Ratio::Unbounded => {
                    if phase1 {
                        return Err(Error::SolverFault(
                            "unbounded infeasibility-reducing direction".into(),
                        ));
                    }
                    return Ok(PhaseEnd::Unbounded);
                }
            }
        }
        Err(Error::SolverFault("simplex iteration limit reached".into()))
    }

    fn solve(mut self, warm: Option<&LpBasis>) -> Result<(LpOutcome, LpBasis)> {
        match warm {
            Some(w) => self.install_warm(w)?,
            None => self.install_cold()?,
        }

        match self.run_phase(true)? {
            PhaseEnd::Done => {}
            PhaseEnd::Priced => {
                if self.max_infeasibility() > FEAS_TOL {
                    let basis = self.snapshot();
                    return Ok((LpOutcome::Infeasible, basis));
                }
            }
            PhaseEnd::Unbounded => unreachable!("phase 1 cannot be unbounded"),
        }

        self.degenerate_run = 0;
        self.bland = false;
        let end = self.run_phase(false)?;
        let basis = self.snapshot();
        match end {
            PhaseEnd::Unbounded => Ok((LpOutcome::Unbounded, basis)),
            _ => {
                let solution = self.extract();
                Ok((LpOutcome::Optimal(solution), basis))
            }
        }
    }

    fn snapshot(&self) -> LpBasis {
        LpBasis {
            status: self.status.clone(),
            basis: self.basis.clone(),
        }
    }

    fn extract(&mut self) -> LpSolution {
        // Refresh basic values once more for a clean primal report.
        self.recompute_basics();
        let mut costs = self.lp.objective.clone();
        costs.resize(self.n + self.m, 0.0);
        let y = self.multipliers(&costs);

        let x: Vec<f64> = self.x[..self.n].to_vec();
        let objective = self
            .lp
            .objective
            .iter()
            .zip(&x)
            .map(|(c, v)| c * v)
            .sum();
        let duals_eq: Vec<f64> = (0..self.m_eq).map(|i| -y[i]).collect();
        let duals_ub: Vec<f64> = (self.m_eq..self.m).map(|i| -y[i]).collect();
        let reduced_costs: Vec<f64> = (0..self.n)
            .map(|j| costs[j] - self.a.col_dot(j, &y))
            .collect();
        LpSolution {
            x,
            objective,
            duals_eq,
            duals_ub,
            reduced_costs,
        }
    }
}

enum PhaseEnd {
    /// Phase 1 reached feasibility.
    Done,
    /// No entering variable; optimal for the phase objective.
    Priced,
    Unbounded,
}
