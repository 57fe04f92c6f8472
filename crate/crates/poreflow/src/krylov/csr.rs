//! Compressed sparse row matrices with the few kernels the solvers need.

use std::io::Write;

use crate::{Error, Result};

/// Square or rectangular sparse matrix in CSR layout with per-row sorted
/// column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Incremental row-by-row CSR constructor.
pub struct CsrBuilder {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn with_capacity(n_cols: usize, rows: usize, nnz: usize) -> Self {
        let mut b = Self::new(n_cols);
        b.row_ptr.reserve(rows);
        b.cols.reserve(nnz);
        b.vals.reserve(nnz);
        b
    }

    /// Append a row given entries with strictly increasing column indices.
    pub fn push_row(&mut self, entries: &[(u32, f64)]) {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|&(c, _)| (c as usize) < self.n_cols));
        for &(c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.row_ptr.len() - 1,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        }
    }
}

impl CsrMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Main diagonal, zero where not stored.
    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            y[i] = acc;
        }
    }

    pub fn spmv_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv(x, &mut y);
        y
    }

    /// Exact transpose with sorted columns.
    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.cols {
            counts[c as usize] += 1;
        }
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for i in 0..self.n_cols {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for i in 0..self.n_rows {
            let (rcols, rvals) = self.row(i);
            for (&c, &v) in rcols.iter().zip(rvals) {
                let slot = next[c as usize];
                cols[slot] = i as u32;
                vals[slot] = v;
                next[c as usize] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Sparse product `self * other` (Gustavson with a dense accumulator).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_cols, other.n_rows, "inner dimensions must agree");
        let mut builder = CsrBuilder::new(other.n_cols);
        let mut acc = vec![0.0f64; other.n_cols];
        let mut stamp = vec![usize::MAX; other.n_cols];
        let mut touched: Vec<u32> = Vec::new();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(j as usize);
                for (&l, &b) in bcols.iter().zip(bvals) {
                    let l = l as usize;
                    if stamp[l] != i {
                        stamp[l] = i;
                        touched.push(l as u32);
                        acc[l] = a * b;
                    } else {
                        acc[l] += a * b;
                    }
                }
            }
            touched.sort_unstable();
            entries.clear();
            for &l in &touched {
                entries.push((l, acc[l as usize]));
            }
            builder.push_row(&entries);
            touched.clear();
        }
        builder.finish()
    }

    /// Largest absolute difference to the transpose; 0 for symmetric matrices.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let t = self.transpose();
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(i, c as usize)).abs());
            }
        }
        worst
    }

    /// Write in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")
            .map_err(Error::Io)?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz()).map_err(Error::Io)?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, c as usize + 1, v).map_err(Error::Io)?;
            }
        }
        Ok(())
    }
}

/// Gauss-Seidel sweeps used as the multigrid smoother; `z` is updated in
/// place toward the solution of `A z = r`.
pub(crate) fn gauss_seidel_forward(a: &CsrMatrix, r: &[f64], z: &mut [f64]) {
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let mut acc = r[i];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c as usize == i {
                diag = v;
            } else {
                acc -= v * z[c as usize];
            }
        }
        if diag != 0.0 {
            z[i] = acc / diag;
        }
    }
}

pub(crate) fn gauss_seidel_backward(a: &CsrMatrix, r: &[f64], z: &mut [f64]) {
    for i in (0..a.n_rows()).rev() {
        let (cols, vals) = a.row(i);
        let mut acc = r[i];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c as usize == i {
                diag = v;
            } else {
                acc -= v * z[c as usize];
            }
        }
        if diag != 0.0 {
            z[i] = acc / diag;
        }
    }
}
