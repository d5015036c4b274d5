//! Branch and bound for mixed-integer linear programs.
//!
//! Nodes are explored best-first on their parent relaxation bound, child
//! relaxations are warm-started from the parent basis, branching picks
//! the most fractional integer variable, and a fix-and-resolve rounding
//! heuristic hunts for incumbents along the way.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use super::lp::{lp_solve_warm, LinearProgram, LpBasis, LpOutcome};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    /// Marks which variables must take integer values.
    pub integer: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    /// Maximum number of nodes to process before giving up.
    pub node_limit: usize,
    /// How far a value may sit from an integer and still count as one.
    pub integrality_tol: f64,
    /// Absolute bound-versus-incumbent gap considered closed.
    pub gap_tol: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            node_limit: 200_000,
            integrality_tol: 1e-6,
            gap_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub enum MilpOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
        nodes: usize,
    },
    Infeasible,
    Unbounded,
    /// Search stopped at the node limit. `best_bound` is a valid lower
    /// bound on the optimal value; `incumbent` is the best integral
    /// solution found, if any.
    NodeLimit {
        incumbent: Option<(Vec<f64>, f64)>,
        best_bound: f64,
        nodes: usize,
    },
}

struct Node {
    bound: f64,
    id: usize,
    /// Bound overrides on integer variables, accumulated from the root.
    overrides: Vec<(usize, f64, f64)>,
    basis: Option<Rc<LpBasis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse so the smallest bound (then
        // the oldest node) pops first.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn milp_solve(mip: &MixedIntegerProgram, opts: &MilpOptions) -> Result<MilpOutcome> {
    assert_eq!(mip.integer.len(), mip.lp.n_vars());
    let mut search = Search {
        mip,
        opts,
        incumbent: None,
        heap: BinaryHeap::new(),
        next_id: 0,
        nodes_processed: 0,
    };
    search.run()
}

struct Search<'a> {
    mip: &'a MixedIntegerProgram,
    opts: &'a MilpOptions,
    incumbent: Option<(Vec<f64>, f64)>,
    heap: BinaryHeap<Node>,
    next_id: usize,
    nodes_processed: usize,
}

impl<'a> Search<'a> {
    fn bounds_for(&self, overrides: &[(usize, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lower = self.mip.lp.lower.clone();
        let mut upper = self.mip.lp.upper.clone();
        for &(j, lo, hi) in overrides {
            lower[j] = lower[j].max(lo);
            upper[j] = upper[j].min(hi);
        }
        (lower, upper)
    }

    /// Most fractional integer variable, lowest index on ties.
    fn pick_branch(&self, x: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.integrality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for (j, &is_int) in self.mip.integer.iter().enumerate() {
            if !is_int {
                continue;
            }
            let frac = x[j] - x[j].floor();
            let dist = frac.min(1.0 - frac);
            if dist <= tol {
                continue;
            }
            if best.map(|(_, _, d)| dist > d + 1e-12).unwrap_or(true) {
                best = Some((j, x[j], dist));
            }
        }
        best.map(|(j, v, _)| (j, v))
    }

    fn offer_incumbent(&mut self, x: Vec<f64>, objective: f64) {
        let better = self
            .incumbent
            .as_ref()
            .map(|(_, cur)| objective < cur - 1e-12)
            .unwrap_or(true);
        if better {
            self.incumbent = Some((x, objective));
        }
    }

    /// Fixes integer variables to rounded values and re-solves the
    /// continuous rest; a feasible result becomes an incumbent offer.
    fn rounding_heuristic(
        &mut self,
        x: &[f64],
        overrides: &[(usize, f64, f64)],
        basis: Option<&LpBasis>,
    ) -> Result<()> {
        let (lower, upper) = self.bounds_for(overrides);
        for round_up in [true, false] {
            let mut lo = lower.clone();
            let mut hi = upper.clone();
            for (j, &is_int) in self.mip.integer.iter().enumerate() {
                if !is_int {
                    continue;
                }
                let (int_lo, int_hi) = (lo[j].ceil(), hi[j].floor());
                if int_lo > int_hi {
                    return Ok(());
                }
                let target = if round_up { x[j].ceil() } else { x[j].round() };
                let target = target.clamp(int_lo, int_hi);
                lo[j] = target;
                hi[j] = target;
            }
            let (outcome, _) = lp_solve_warm(&self.mip.lp, &lo, &hi, basis)?;
            if let LpOutcome::Optimal(s) = outcome {
                self.offer_incumbent(s.x, s.objective);
                return Ok(());
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<MilpOutcome> {
        // Root relaxation.
        let (outcome, root_basis) =
            lp_solve_warm(&self.mip.lp, &self.mip.lp.lower, &self.mip.lp.upper, None)?;
        let root = match outcome {
            LpOutcome::Infeasible => return Ok(MilpOutcome::Infeasible),
            LpOutcome::Unbounded => return Ok(MilpOutcome::Unbounded),
            LpOutcome::Optimal(s) => s,
        };
        self.nodes_processed = 1;

        match self.pick_branch(&root.x) {
            None => {
                return Ok(MilpOutcome::Optimal {
                    x: root.x,
                    objective: root.objective,
                    nodes: 1,
                })
            }
            Some((j, v)) => {
                self.rounding_heuristic(&root.x, &[], Some(&root_basis))?;
                let basis = Rc::new(root_basis);
                self.push_children(root.objective, j, v, &[], &basis);
            }
        }

        while let Some(node) = self.heap.pop() {
            if let Some((_, inc_obj)) = &self.incumbent {
                if node.bound >= inc_obj - self.opts.gap_tol {
                    // Best-first order: every remaining node is no better.
                    break;
                }
            }
            if self.nodes_processed >= self.opts.node_limit {
                let mut best_bound = node.bound;
                if let Some(top) = self.heap.peek() {
                    best_bound = best_bound.min(top.bound);
                }
                return Ok(MilpOutcome::NodeLimit {
                    incumbent: self.incumbent.clone(),
                    best_bound,
                    nodes: self.nodes_processed,
                });
            }
            self.nodes_processed += 1;

            let (lower, upper) = self.bounds_for(&node.overrides);
            let warm = node.basis.as_deref();
            let (outcome, basis) = lp_solve_warm(&self.mip.lp, &lower, &upper, warm)?;
            let sol = match outcome {
                LpOutcome::Infeasible => continue,
                LpOutcome::Unbounded => return Ok(MilpOutcome::Unbounded),
                LpOutcome::Optimal(s) => s,
            };
            if let Some((_, inc_obj)) = &self.incumbent {
                if sol.objective >= inc_obj - self.opts.gap_tol {
                    continue;
                }
            }
            match self.pick_branch(&sol.x) {
                None => self.offer_incumbent(sol.x, sol.objective),
                Some((j, v)) => {
                    if self.nodes_processed % 16 == 0 {
                        self.rounding_heuristic(&sol.x, &node.overrides, Some(&basis))?;
                    }
                    let basis = Rc::new(basis);
                    self.push_children(sol.objective, j, v, &node.overrides, &basis);
                }
            }
        }

        match self.incumbent.take() {
            Some((x, objective)) => Ok(MilpOutcome::Optimal {
                x,
                objective,
                nodes: self.nodes_processed,
            }),
            None => Ok(MilpOutcome::Infeasible),
        }
    }

    fn push_children(
        &mut self,
        bound: f64,
        branch_var: usize,
        value: f64,
        overrides: &[(usize, f64, f64)],
        basis: &Rc<LpBasis>,
    ) {
        let down = (branch_var, f64::NEG_INFINITY, value.floor());
        let up = (branch_var, value.ceil(), f64::INFINITY);
        for side in [down, up] {
            let mut child = overrides.to_vec();
            child.push(side);
            self.heap.push(Node {
                bound,
                id: self.next_id,
                overrides: child,
                basis: Some(Rc::clone(basis)),
            });
            self.next_id += 1;
        }
    }
}
