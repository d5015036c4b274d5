//! Damped least squares for nonlinear residual fits.
//!
//! Minimizes `0.5 ||r(x)||^2` with analytic Jacobians, Marquardt-style
//! diagonal scaling, and projection onto box bounds. Before the first
//! iteration the analytic Jacobian is checked once against central
//! finite differences; a disagreement aborts the solve, which turns
//! silent derivative bugs into loud errors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &[f64]) -> Vec<f64>;
    /// Jacobian of the residual vector, `n_residuals x n_params`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    fn lower(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY; self.n_params()]
    }
    fn upper(&self) -> Vec<f64> {
        vec![f64::INFINITY; self.n_params()]
    }
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    pub lambda0: f64,
    /// Step-norm threshold for convergence.
    pub step_tol: f64,
    /// Relative cost-decrease threshold for convergence.
    pub cost_tol: f64,
    /// Verify the analytic Jacobian at the starting point.
    pub check_jacobian: bool,
    pub fd_step: f64,
    pub fd_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 200,
            lambda0: 1e-3,
            step_tol: 1e-10,
            cost_tol: 1e-10,
            check_jacobian: true,
            fd_step: 1e-6,
            fd_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    /// Final cost `0.5 ||r||^2`.
    pub cost: f64,
    pub iterations: usize,
    /// False when the iteration stalled before meeting the tolerances;
    /// the best iterate seen is still returned.
    pub converged: bool,
    /// Residual trace: the starting cost followed by the cost after each
    /// accepted step, strictly decreasing.
    pub trace: Vec<f64>,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Central finite-difference Jacobian.
fn fd_jacobian(problem: &impl LeastSquares, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for col in 0..n {
        let h = step * (1.0 + x[col].abs());
        xp[col] = x[col] + h;
        let rp = problem.residuals(&xp);
        xp[col] = x[col] - h;
        let rm = problem.residuals(&xp);
        xp[col] = x[col];
        for row in 0..m {
            j[(row, col)] = (rp[row] - rm[row]) / (2.0 * h);
        }
    }
    j
}

fn verify_jacobian(problem: &impl LeastSquares, x: &[f64], opts: &LmOptions) -> Result<()> {
    let ja = problem.jacobian(x);
    let jf = fd_jacobian(problem, x, opts.fd_step);
    for row in 0..ja.nrows() {
        for col in 0..ja.ncols() {
            let a = ja[(row, col)];
            let f = jf[(row, col)];
            let rel = (a - f).abs() / (1.0 + f.abs());
            if rel > opts.fd_tol {
                return Err(Error::JacobianMismatch {
                    row,
                    col,
                    analytic: a,
                    fd: f,
                });
            }
        }
    }
    Ok(())
}

pub fn lm_solve(problem: &impl LeastSquares, x0: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let n = problem.n_params();
    assert_eq!(x0.len(), n);
    let lower = problem.lower();
    let upper = problem.upper();
    let clamp = |x: &mut [f64]| {
        for j in 0..n {
            x[j] = x[j].clamp(lower[j], upper[j]);
        }
    };

    let mut x = x0.to_vec();
    clamp(&mut x);
    if opts.check_jacobian {
        verify_jacobian(problem, &x, opts)?;
    }

    let mut r = problem.residuals(&x);
    let mut cost = cost_of(&r);
    let mut best = (x.clone(), cost);
    let mut lambda = opts.lambda0;
    let mut jac = problem.jacobian(&x);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = vec![cost];

    for _ in 0..opts.max_iters {
        iterations += 1;
        let jt = jac.transpose();
        let h = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < 1e-12 {
            converged = true;
            break;
        }

        // Try increasing damping until a step is accepted.
        let mut accepted = false;
        for _ in 0..60 {
            let mut damped = h.clone();
            for j in 0..n {
                let d = h[(j, j)].max(1e-12);
                damped[(j, j)] += lambda * d;
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda = (lambda * 2.0).min(1e12);
                    continue;
                }
            };
            let mut x_new = x.clone();
            for j in 0..n {
                x_new[j] += step[j];
            }
            clamp(&mut x_new);
            let r_new = problem.residuals(&x_new);
            let cost_new = cost_of(&r_new);
            if cost_new < cost {
                let step_norm: f64 = x_new
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_decrease = (cost - cost_new) / cost.max(1e-300);
                x = x_new;
                r = r_new;
                cost = cost_new;
                trace.push(cost);
                if cost < best.1 {
                    best = (x.clone(), cost);
                }
                lambda = (lambda * 0.5).max(1e-12);
                accepted = true;
                if step_norm < opts.step_tol * (1.0 + x_norm) || rel_decrease < opts.cost_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 2.0;
            if lambda > 1e10 {
                break;
            }
        }

        if converged {
            break;
        }
        if !accepted {
            // Damping exhausted without progress: stalled.
            break;
        }
        jac = problem.jacobian(&x);
    }

    let (x, cost) = best;
    Ok(LmReport {
        x,
        cost,
        iterations,
        converged,
        trace,
    })
}
