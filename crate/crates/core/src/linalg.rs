//! Compressed sparse rows, a banded LU for mesh-ordered systems, and the
//! Galerkin triple products used by the coarse and reduced solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate entries are summed; columns are sorted within each row.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let s = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[s.clone()], &self.values[s])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum::<f64>()
            }),
        )
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = DVector::zeros(self.ncols);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// `self * X` for a dense `X`.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                for k in 0..x.ncols() {
                    y[(r, k)] += v * x[(c, k)];
                }
            }
        }
        y
    }

    /// `self^T * X` for a dense `X`.
    pub fn transpose_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.ncols, x.ncols());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                for k in 0..x.ncols() {
                    y[(c, k)] += v * x[(r, k)];
                }
            }
        }
        y
    }

    /// `alpha * self + beta * other`.
    pub fn add(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            let (c1, v1) = self.row(r);
            t.extend(c1.iter().zip(v1).map(|(&c, &v)| (r, c, alpha * v)));
            let (c2, v2) = other.row(r);
            t.extend(c2.iter().zip(v2).map(|(&c, &v)| (r, c, beta * v)));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    /// Sparse product `self * other`, one dense scratch row at a time.
    pub fn mul_sparse(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut seen = vec![false; other.ncols];
        let mut cols = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let (mut col_idx, mut values) = (Vec::new(), Vec::new());
        row_ptr.push(0);
        for r in 0..self.nrows {
            let (ac, av) = self.row(r);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&c, &b) in bc.iter().zip(bv) {
                    if !seen[c] {
                        seen[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                col_idx.push(c);
                values.push(acc[c]);
                acc[c] = 0.0;
                seen[c] = false;
            }
            cols.clear();
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `self * diag(d)`.
    pub fn scale_columns(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for (v, &c) in out.values.iter_mut().zip(&self.col_idx) {
            *v *= d[c];
        }
        out
    }

    /// Keeps the listed rows and columns, in the given order.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (k, &r) in rows.iter().enumerate() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if col_map[c] != usize::MAX {
                    t.push((k, col_map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.nrows).all(|r| {
            let (cols, vals) = self.row(r);
            cols.iter()
                .zip(vals)
                .all(|(&c, &v)| (v - self.get(c, r)).abs() <= rel_tol * scale)
        })
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.nrows)
            .flat_map(|r| self.row(r).0.iter().map(move |&c| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }
}

/// LU factorization without pivoting in band storage.
///
/// Intended for mesh-ordered finite-element systems (mass, stiffness, and
/// `M + dt * A * D` with positive diagonal `D`), which are safe to factor
/// without row exchanges.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch {
                expected: a.nrows,
                got: a.ncols,
            });
        }
        let n = a.nrows;
        let bw = a.bandwidth();
        let width = 2 * bw + 1;
        let mut data = vec![0.0; n * width];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                data[r * width + c + bw - r] += v;
            }
        }
        let tiny = 1e-300_f64.max(a.max_abs() * 1e-15 * f64::EPSILON);
        for k in 0..n {
            let piv = data[k * width + bw];
            if !piv.is_finite() || piv.abs() <= tiny {
                return Err(Error::SingularPivot { row: k, value: piv });
            }
            let kend = (k + bw + 1).min(n);
            let len = kend - k - 1;
            for r in k + 1..kend {
                let off = r * width + k + bw - r;
                let l = data[off] / piv;
                if l == 0.0 {
                    continue;
                }
                data[off] = l;
                let (head, tail) = data.split_at_mut(r * width);
                let krow = &head[k * width + bw + 1..k * width + bw + 1 + len];
                let start = k + 1 + bw - r;
                let rrow = &mut tail[start..start + len];
                for (x, y) in rrow.iter_mut().zip(krow) {
                    *x -= l * y;
                }
            }
        }
        Ok(Self { n, bw, width, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.width);
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            let mut s = x[r];
            for c in lo..r {
                s -= self.data[r * w + c + bw - r] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let hi = (r + bw + 1).min(n);
            let mut s = x[r];
            for c in r + 1..hi {
                s -= self.data[r * w + c + bw - r] * x[c];
            }
            x[r] = s / self.data[r * w + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> DVector<f64> {
        let mut x = DVector::from_column_slice(b);
        self.solve_in_place(x.as_mut_slice());
        x
    }
}

/// Normwise backward error `|b - A x|_inf / (|A|_inf |x|_inf + |b|_inf)`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = b
        .iter()
        .zip(ax.iter())
        .fold(0.0_f64, |m, (bi, ai)| m.max((bi - ai).abs()));
    let xn = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let denom = a.inf_norm() * xn + bn;
    if denom == 0.0 {
        0.0
    } else {
        r / denom
    }
}

/// Solves `A x = b` with one step of iterative refinement and checks the
/// backward error against `tol`.
pub fn solve_checked(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<DVector<f64>> {
    let lu = BandLu::factor(a)?;
    let mut x = lu.solve(b);
    let ax = a.matvec(x.as_slice());
    let r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    x += lu.solve(&r);
    let res = relative_residual(a, x.as_slice(), b);
    if !(res <= tol) {
        return Err(Error::SolverNonConvergence { residual: res });
    }
    Ok(x)
}

/// `P^T A diag(d) Q` as a dense matrix for sparse `P`, `A`, `Q`.
///
/// Every nonzero `a_jl` contributes the outer product of row `j` of `P` and
/// row `l` of `Q`, so the cost scales with `nnz(A)` times the row fill of the
/// bases rather than with their dense size.
pub fn galerkin_product(
    p: &CsrMatrix,
    a: &CsrMatrix,
    d: Option<&[f64]>,
    q: &CsrMatrix,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p.ncols, q.ncols);
    for j in 0..a.nrows {
        let (pc, pv) = p.row(j);
        if pc.is_empty() {
            continue;
        }
        let (acols, avals) = a.row(j);
        for (&l, &alv) in acols.iter().zip(avals) {
            let w = match d {
                Some(d) => alv * d[l],
                None => alv,
            };
            if w == 0.0 {
                continue;
            }
            let (qc, qv) = q.row(l);
            for (&pi, &pval) in pc.iter().zip(pv) {
                let s = pval * w;
                for (&qi, &qval) in qc.iter().zip(qv) {
                    out[(pi, qi)] += s * qval;
                }
            }
        }
    }
    out
}

/// Dense LU solve for the small reduced systems.
pub fn dense_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    a.lu().solve(b).ok_or(Error::SingularPivot {
        row: n,
        value: 0.0,
    })
}
