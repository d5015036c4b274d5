//! Convex quadratic programs with diagonal cost, solved by operator
//! splitting.
//!
//! The problem form is `min 0.5 xᵀ diag(p) x + qᵀ x` subject to
//! `l <= M x <= u`, with `p >= 0`. Equality rows are expressed as
//! `l_i == u_i`. The iteration alternates a regularized KKT solve with a
//! projection onto the row bounds, balancing the penalty parameter on the
//! primal and dual residuals. Diverging iterates yield infeasibility
//! certificates, and converged solutions are polished by solving the KKT
//! system of the detected active set.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::sparse::CscMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    /// Diagonal of the quadratic cost, entrywise nonnegative.
    pub p_diag: Vec<f64>,
    pub q: Vec<f64>,
    pub m: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub max_iters: usize,
    /// Absolute tolerance on the primal and dual residuals.
    pub eps: f64,
    /// Relative threshold for declaring an infeasibility certificate.
    pub eps_inf: f64,
    pub polish: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_iters: 50_000,
            eps: 1e-7,
            eps_inf: 1e-6,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Row multipliers: positive pushes against the upper bound,
    /// negative against the lower.
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

#[derive(Debug, Clone)]
pub enum QpOutcome {
    Optimal(QpSolution),
    /// No point satisfies the constraints; the certificate `dy` has
    /// `Mᵀ dy ≈ 0` and `uᵀ(dy)₊ + lᵀ(dy)₋ < 0`.
    PrimalInfeasible { certificate: Vec<f64> },
    /// The objective is unbounded below; the certificate `dx` has
    /// `P dx ≈ 0`, `qᵀ dx < 0`, and `M dx` respecting one-sided bounds.
    DualInfeasible { certificate: Vec<f64> },
    /// Residuals did not reach tolerance within the iteration budget.
    MaxIterations(QpSolution),
}

const SIGMA: f64 = 1e-6;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;

struct Workspace<'a> {
    qp: &'a QuadraticProgram,
    n: usize,
    m: usize,
    m_dense: DMatrix<f64>,
    rho: Vec<f64>,
    rho_base: f64,
    kkt: Cholesky<f64, nalgebra::Dyn>,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

impl<'a> Workspace<'a> {
    fn new(qp: &'a QuadraticProgram) -> Result<Self> {
        let n = qp.p_diag.len();
        let m = qp.m.nrows();
        if qp.q.len() != n || qp.m.ncols() != n || qp.l.len() != m || qp.u.len() != m {
            return Err(Error::SolverFault("inconsistent program dimensions".into()));
        }
        if qp.p_diag.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::SolverFault("quadratic cost must be nonnegative".into()));
        }
        for i in 0..m {
            if qp.l[i] > qp.u[i] {
                return Err(Error::SolverFault(format!(
                    "row {i} has crossing bounds [{}, {}]",
                    qp.l[i], qp.u[i]
                )));
            }
        }
        let m_dense = qp.m.to_dense();
        let rho_base = 1.0;
        let rho = Self::row_penalties(qp, rho_base);
        let kkt = Self::factor(qp, &m_dense, &rho)?;
        Ok(Workspace {
            qp,
            n,
            m,
            m_dense,
            rho,
            rho_base,
            kkt,
            x: DVector::zeros(n),
            z: DVector::zeros(m),
            y: DVector::zeros(m),
        })
    }

    fn row_penalties(qp: &QuadraticProgram, base: f64) -> Vec<f64> {
        qp.l
            .iter()
            .zip(&qp.u)
            .map(|(l, u)| if l == u { base * RHO_EQ_SCALE } else { base })
            .collect()
    }

    fn factor(
        qp: &QuadraticProgram,
        m_dense: &DMatrix<f64>,
        rho: &[f64],
    ) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let n = qp.p_diag.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = qp.p_diag[j] + SIGMA;
        }
        for i in 0..m_dense.nrows() {
            let ri = rho[i];
            for a in 0..n {
                let mia = m_dense[(i, a)];
                if mia == 0.0 {
                    continue;
                }
                for b in 0..n {
                    k[(a, b)] += ri * mia * m_dense[(i, b)];
                }
            }
        }
        Cholesky::new(k).ok_or_else(|| Error::SolverFault("splitting matrix not positive".into()))
    }

    fn step(&mut self) {
        // rhs = sigma x - q + Mᵀ(rho z - y)
        let mut rhs = DVector::zeros(self.n);
        for j in 0..self.n {
            rhs[j] = SIGMA * self.x[j] - self.qp.q[j];
        }
        for i in 0..self.m {
            let w = self.rho[i] * self.z[i] - self.y[i];
            if w == 0.0 {
                continue;
            }
            for j in 0..self.n {
                rhs[j] += self.m_dense[(i, j)] * w;
            }
        }
        let x_new = self.kkt.solve(&rhs);
        let z_tilde = &self.m_dense * &x_new;
        for i in 0..self.m {
            let trial = z_tilde[i] + self.y[i] / self.rho[i];
            self.z[i] = trial.clamp(self.qp.l[i], self.qp.u[i]);
            self.y[i] += self.rho[i] * (z_tilde[i] - self.z[i]);
        }
        self.x = x_new;
    }

    fn residuals(&self) -> (f64, f64) {
        let mx = &self.m_dense * &self.x;
        let mut r_prim = 0.0f64;
        for i in 0..self.m {
            r_prim = r_prim.max((mx[i] - self.z[i]).abs());
        }
        let mut r_dual = 0.0f64;
        let mty = self.m_dense.transpose() * &self.y;
        for j in 0..self.n {
            let g = self.qp.p_diag[j] * self.x[j] + self.qp.q[j] + mty[j];
            r_dual = r_dual.max(g.abs());
        }
        (r_prim, r_dual)
    }

    /// Rebalances the penalty using scaled residuals; returns whether the
    /// KKT matrix was refactorized.
    fn rebalance(&mut self, r_prim: f64, r_dual: f64) -> Result<bool> {
        let mx = &self.m_dense * &self.x;
        let prim_scale = mx
            .iter()
            .chain(self.z.iter())
            .fold(1e-12f64, |a, v| a.max(v.abs()));
        let mty = self.m_dense.transpose() * &self.y;
        let dual_scale = (0..self.n)
            .map(|j| (self.qp.p_diag[j] * self.x[j]).abs())
            .chain(mty.iter().map(|v| v.abs()))
            .chain(self.qp.q.iter().map(|v| v.abs()))
            .fold(1e-12f64, f64::max);
        let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(1e-12)).sqrt();
        let new_base = (self.rho_base * ratio).clamp(RHO_MIN, RHO_MAX);
        if new_base > 5.0 * self.rho_base || new_base < self.rho_base / 5.0 {
            self.rho_base = new_base;
            self.rho = Self::row_penalties(self.qp, new_base);
            self.kkt = Self::factor(self.qp, &self.m_dense, &self.rho)?;
            return Ok(true);
        }
        Ok(false)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut obj = 0.0;
        for j in 0..self.n {
            obj += 0.5 * self.qp.p_diag[j] * x[j] * x[j] + self.qp.q[j] * x[j];
        }
        obj
    }

    fn primal_certificate(&self, dy: &DVector<f64>, eps_inf: f64) -> bool {
        let norm = dy.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm <= 1e-14 {
            return false;
        }
        let mtdy = self.m_dense.transpose() * dy;
        if mtdy.iter().any(|v| v.abs() > eps_inf * norm) {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let pos = dy[i].max(0.0);
            let neg = dy[i].min(0.0);
            if pos > eps_inf * norm && !self.qp.u[i].is_finite() {
                return false;
            }
            if neg < -eps_inf * norm && !self.qp.l[i].is_finite() {
                return false;
            }
            if self.qp.u[i].is_finite() {
                support += self.qp.u[i] * pos;
            }
            if self.qp.l[i].is_finite() {
                support += self.qp.l[i] * neg;
            }
        }
        support <= -eps_inf * norm
    }

    fn dual_certificate(&self, dx: &DVector<f64>, eps_inf: f64) -> bool {
        let norm = dx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm <= 1e-14 {
            return false;
        }
        for j in 0..self.n {
            if (self.qp.p_diag[j] * dx[j]).abs() > eps_inf * norm {
                return false;
            }
        }
        let qd: f64 = self.qp.q.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
        if qd > -eps_inf * norm {
            return false;
        }
        let mdx = &self.m_dense * dx;
        for i in 0..self.m {
            if self.qp.u[i].is_finite() && mdx[i] > eps_inf * norm {
                return false;
            }
            if self.qp.l[i].is_finite() && mdx[i] < -eps_inf * norm {
                return false;
            }
        }
        true
    }

    /// Solves the KKT system of the active set detected from multiplier
    /// signs, with light regularization and iterative refinement. Returns
    /// the polished point if it improves both residuals.
    fn polish(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        const Y_TOL: f64 = 1e-10;
        const REG: f64 = 1e-9;
        let mut active = Vec::new();
        let mut target = Vec::new();
        for i in 0..self.m {
            if self.qp.l[i] == self.qp.u[i] {
                active.push(i);
                target.push(self.qp.l[i]);
            } else if self.y[i] > Y_TOL {
                active.push(i);
                target.push(self.qp.u[i]);
            } else if self.y[i] < -Y_TOL {
                active.push(i);
                target.push(self.qp.l[i]);
            }
        }
        let na = active.len();
        let dim = self.n + na;
        let mut kkt = DMatrix::zeros(dim, dim);
        for j in 0..self.n {
            kkt[(j, j)] = self.qp.p_diag[j] + REG;
        }
        for (k, &i) in active.iter().enumerate() {
            for j in 0..self.n {
                let v = self.m_dense[(i, j)];
                kkt[(self.n + k, j)] = v;
                kkt[(j, self.n + k)] = v;
            }
            kkt[(self.n + k, self.n + k)] = -REG;
        }
        let lu = kkt.lu();

        let mut rhs = DVector::zeros(dim);
        for j in 0..self.n {
            rhs[j] = -self.qp.q[j];
        }
        for (k, &t) in target.iter().enumerate() {
            rhs[self.n + k] = t;
        }
        let mut sol = lu.solve(&rhs)?;
        // Refine against the unregularized system.
        for _ in 0..2 {
            let mut resid = rhs.clone();
            for j in 0..self.n {
                let mut acc = self.qp.p_diag[j] * sol[j];
                for (k, &i) in active.iter().enumerate() {
                    acc += self.m_dense[(i, j)] * sol[self.n + k];
                }
                resid[j] -= acc;
            }
            for (k, &i) in active.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..self.n {
                    acc += self.m_dense[(i, j)] * sol[j];
                }
                resid[self.n + k] -= acc;
            }
            let corr = lu.solve(&resid)?;
            sol += corr;
        }

        let x = DVector::from_iterator(self.n, (0..self.n).map(|j| sol[j]));
        let mut y = DVector::zeros(self.m);
        for (k, &i) in active.iter().enumerate() {
            y[i] = sol[self.n + k];
        }
        // The polished point must stay feasible on the inactive rows.
        let mx = &self.m_dense * &x;
        for i in 0..self.m {
            if mx[i] > self.qp.u[i] + 1e-9 || mx[i] < self.qp.l[i] - 1e-9 {
                return None;
            }
        }
        Some((x, y))
    }
}

pub fn qp_solve(qp: &QuadraticProgram, opts: &QpOptions) -> Result<QpOutcome> {
    let mut ws = Workspace::new(qp)?;
    let mut x_prev = ws.x.clone();
    let mut y_prev = ws.y.clone();

    let mut iter = 0;
    while iter < opts.max_iters {
        iter += 1;
        ws.step();

        if iter % 25 == 0 || iter == 1 {
            let (r_prim, r_dual) = ws.residuals();
            if r_prim <= opts.eps && r_dual <= opts.eps {
                return Ok(QpOutcome::Optimal(finish(&ws, iter, r_prim, r_dual, opts)));
            }
            let dy = &ws.y - &y_prev;
            if ws.primal_certificate(&dy, opts.eps_inf) {
                return Ok(QpOutcome::PrimalInfeasible {
                    certificate: dy.iter().copied().collect(),
                });
            }
            let dx = &ws.x - &x_prev;
            if ws.dual_certificate(&dx, opts.eps_inf) {
                return Ok(QpOutcome::DualInfeasible {
                    certificate: dx.iter().copied().collect(),
                });
            }
            x_prev = ws.x.clone();
            y_prev = ws.y.clone();
            if iter % 50 == 0 {
                ws.rebalance(r_prim, r_dual)?;
            }
        }
    }

    let (r_prim, r_dual) = ws.residuals();
    if r_prim <= opts.eps && r_dual <= opts.eps {
        return Ok(QpOutcome::Optimal(finish(&ws, iter, r_prim, r_dual, opts)));
    }
    Ok(QpOutcome::MaxIterations(finish(
        &ws, iter, r_prim, r_dual, opts,
    )))
}

fn finish(ws: &Workspace, iterations: usize, r_prim: f64, r_dual: f64, opts: &QpOptions) -> QpSolution {
    let mut x: Vec<f64> = ws.x.iter().copied().collect();
    let mut y: Vec<f64> = ws.y.iter().copied().collect();
    let mut polished = false;
    let mut primal_residual = r_prim;
    let mut dual_residual = r_dual;

    if opts.polish {
        if let Some((px, py)) = ws.polish() {
            // Residuals of the polished candidate.
            let mx = &ws.m_dense * &px;
            let mut rp = 0.0f64;
            for i in 0..ws.m {
                rp = rp.max((mx[i] - mx[i].clamp(ws.qp.l[i], ws.qp.u[i])).abs());
            }
            let mty = ws.m_dense.transpose() * &py;
            let mut rd = 0.0f64;
            for j in 0..ws.n {
                rd = rd.max((ws.qp.p_diag[j] * px[j] + ws.qp.q[j] + mty[j]).abs());
            }
            if rp <= primal_residual.max(1e-12) && rd <= dual_residual.max(1e-12) {
                x = px.iter().copied().collect();
                y = py.iter().copied().collect();
                primal_residual = rp;
                dual_residual = rd;
                polished = true;
            }
        }
    }

    let objective = ws.objective(&x);
    QpSolution {
        x,
        y,
        objective,
        iterations,
        primal_residual,
        dual_residual,
        polished,
    }
}
