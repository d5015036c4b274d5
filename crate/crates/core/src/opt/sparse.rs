//! Compressed sparse column matrices and a sparse LU factorization with
//! product-form updates, sized for the basis systems inside the simplex
//! solver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse matrix in compressed sparse column form.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// positions are summed; exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for &(r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            per_col[c].push((r, v));
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in &mut per_col {
            col.sort_by_key(|&(r, _)| r);
            let mut k = 0;
            while k < col.len() {
                let r = col[k].0;
                let mut v = 0.0;
                while k < col.len() && col[k].0 == r {
                    v += col[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != 0.0 {
                    triplets.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Row indices and values of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    /// `y += A x` accumulated into a dense vector.
    pub fn accumulate_mul(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (r, v) in rows.iter().zip(vals) {
                y[*r] += v * xj;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.accumulate_mul(x, &mut y);
        y
    }

    /// `Aᵀ x` as a dense vector.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            let mut acc = 0.0;
            for (r, v) in rows.iter().zip(vals) {
                acc += v * x[*r];
            }
            y[j] = acc;
        }
        y
    }

    /// Dot product of column `j` with a dense vector.
    pub fn col_dot(&self, j: usize, x: &[f64]) -> f64 {
        let (rows, vals) = self.col(j);
        rows.iter().zip(vals).map(|(r, v)| v * x[*r]).sum()
    }

    /// Stacks `self` on top of `other` (matching column counts).
    pub fn vstack(&self, other: &CscMatrix) -> CscMatrix {
        assert_eq!(self.ncols, other.ncols);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (r, v) in rows.iter().zip(vals) {
                triplets.push((*r, j, *v));
            }
            let (rows, vals) = other.col(j);
            for (r, v) in rows.iter().zip(vals) {
                triplets.push((*r + self.nrows, j, *v));
            }
        }
        CscMatrix::from_triplets(self.nrows + other.nrows, self.ncols, &triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (r, v) in rows.iter().zip(vals) {
                m[(*r, j)] = *v;
            }
        }
        m
    }
}

/// Sparse LU factorization of a square matrix given by columns:
/// `P B Q = L U` with partial pivoting and columns processed in order of
/// increasing fill estimate.
pub struct LuFactors {
    m: usize,
    /// Column `t`: below-diagonal multipliers, indexed by original row.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Column `t`: above-diagonal entries, indexed by pivot position.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    /// Pivot position -> original row.
    perm_row: Vec<usize>,
    /// Original row -> pivot position.
    pinv: Vec<usize>,
    /// Pivot position -> original column index.
    col_order: Vec<usize>,
}

const PIVOT_TOL: f64 = 1e-12;

impl LuFactors {
    /// Factors the matrix whose `j`-th column is the sparse vector
    /// `cols[j]`. Fails with [`Error::SingularSystem`] if no acceptable
    /// pivot exists at some step.
    pub fn factor(cols: &[Vec<(usize, f64)>]) -> Result<Self> {
        let m = cols.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&j| (cols[j].len(), j));

        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut u_diag = Vec::with_capacity(m);
        let mut perm_row = Vec::with_capacity(m);
        let mut pinv = vec![usize::MAX; m];

        // Dense workspace with a touched list, indexed by original row.
        let mut work = vec![0.0; m];
        let mut touched = Vec::with_capacity(m);

        for &j in &order {
            for &(r, v) in &cols[j] {
                debug_assert!(r < m);
                if work[r] == 0.0 {
                    touched.push(r);
                }
                work[r] += v;
            }
            // Left-looking elimination: apply existing pivot columns in
            // position order.
            for t in 0..perm_row.len() {
                let coeff = work[perm_row[t]];
                if coeff == 0.0 {
                    continue;
                }
                for &(r, lv) in &l_cols[t] {
                    if work[r] == 0.0 {
                        touched.push(r);
                    }
                    work[r] -= lv * coeff;
                }
            }
            // Pick the largest remaining entry in an unpivoted row.
            let mut pivot_row = usize::MAX;
            let mut pivot_val = 0.0f64;
            for &r in &touched {
                if pinv[r] == usize::MAX && work[r].abs() > pivot_val.abs() {
                    pivot_row = r;
                    pivot_val = work[r];
                }
            }
            if pivot_row == usize::MAX || pivot_val.abs() < PIVOT_TOL {
                return Err(Error::SingularSystem);
            }

            let t = perm_row.len();
            let mut ucol = Vec::new();
            let mut lcol = Vec::new();
            for &r in &touched {
                let v = work[r];
                work[r] = 0.0;
                if v == 0.0 || r == pivot_row {
                    continue;
                }
                if pinv[r] != usize::MAX {
                    ucol.push((pinv[r], v));
                } else {
                    lcol.push((r, v / pivot_val));
                }
            }
            touched.clear();
            pinv[pivot_row] = t;
            perm_row.push(pivot_row);
            u_diag.push(pivot_val);
            u_cols.push(ucol);
            l_cols.push(lcol);
        }

        Ok(LuFactors {
            m,
            l_cols,
            u_cols,
            u_diag,
            perm_row,
            pinv,
            col_order: order,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Solves `B x = b` in place (`x` enters holding `b`).
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.m);
        // Forward pass L z = P b, working in original row space.
        for t in 0..self.m {
            let zt = x[self.perm_row[t]];
            if zt == 0.0 {
                continue;
            }
            for &(r, lv) in &self.l_cols[t] {
                x[r] -= lv * zt;
            }
        }
        // Move into pivot-position space for the U solve.
        let mut z = vec![0.0; self.m];
        for t in 0..self.m {
            z[t] = x[self.perm_row[t]];
        }
        for t in (0..self.m).rev() {
            let w = z[t] / self.u_diag[t];
            z[t] = w;
            if w == 0.0 {
                continue;
            }
            for &(s, uv) in &self.u_cols[t] {
                z[s] -= uv * w;
            }
        }
        for t in 0..self.m {
            x[self.col_order[t]] = z[t];
        }
    }

    /// Solves `Bᵀ y = c` in place (`x` enters holding `c`).
    pub fn solve_transpose_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.m);
        let mut z = vec![0.0; self.m];
        for t in 0..self.m {
            z[t] = x[self.col_order[t]];
        }
        // Forward pass Uᵀ z' = c', dotting against U columns.
        for t in 0..self.m {
            let mut acc = z[t];
            for &(s, uv) in &self.u_cols[t] {
                acc -= uv * z[s];
            }
            z[t] = acc / self.u_diag[t];
        }
        // Backward pass Lᵀ w = z', dotting against L columns.
        for t in (0..self.m).rev() {
            let mut acc = z[t];
            for &(r, lv) in &self.l_cols[t] {
                acc -= lv * z[self.pinv[r]];
            }
            z[t] = acc;
        }
        for t in 0..self.m {
            x[self.perm_row[t]] = z[t];
        }
    }
}

/// One product-form update: the basis column at `pos` was replaced, and
/// `alpha = B⁻¹ a_new` at the time of the swap.
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Outcome of a basis update attempt.
#[derive(Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Updated,
    /// The update would be numerically unsafe or the eta file is full;
    /// the caller must refactor from scratch.
    NeedsRefactor,
}

/// LU factors of a simplex basis plus a file of eta updates.
pub struct BasisFactorization {
    lu: LuFactors,
    etas: Vec<Eta>,
    max_etas: usize,
}

const ETA_PIVOT_TOL: f64 = 1e-8;

impl BasisFactorization {
    pub fn factor(cols: &[Vec<(usize, f64)>], max_etas: usize) -> Result<Self> {
        Ok(BasisFactorization {
            lu: LuFactors::factor(cols)?,
            etas: Vec::new(),
            max_etas,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    pub fn n_etas(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = b` in place.
    pub fn ftran(&self, x: &mut [f64]) {
        self.lu.solve_in_place(x);
        for eta in &self.etas {
            let t = x[eta.pos] / eta.pivot;
            x[eta.pos] = t;
            if t != 0.0 {
                for &(i, v) in &eta.entries {
                    x[i] -= v * t;
                }
            }
        }
    }

    /// Solves `Bᵀ y = c` in place.
    pub fn btran(&self, x: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut acc = x[eta.pos];
            for &(i, v) in &eta.entries {
                acc -= v * x[i];
            }
            x[eta.pos] = acc / eta.pivot;
        }
        self.lu.solve_transpose_in_place(x);
    }

    /// Records the replacement of the basis column at `pos`, where
    /// `alpha` is `B⁻¹ a_new` under the current factorization.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) -> UpdateOutcome {
        if self.etas.len() >= self.max_etas {
            return UpdateOutcome::NeedsRefactor;
        }
        let pivot = alpha[pos];
        let scale = alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if pivot.abs() < ETA_PIVOT_TOL || pivot.abs() < 1e-10 * scale {
            return UpdateOutcome::NeedsRefactor;
        }
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != pos && v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot,
            entries,
        });
        UpdateOutcome::Updated
    }
}
