//! Sparse CSR matrices, a block accumulator for DG assembly, and iterative
//! solvers (CG, restarted GMRES) with a per-element block-Jacobi
//! preconditioner.

mod solvers;

pub use solvers::{cg, gmres, BlockJacobi, IdentityPrecond, Preconditioner, SolverReport};

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "spmv: x length mismatch");
        assert_eq!(y.len(), self.rows, "spmv: y length mismatch");
        // Row-parallel; each entry of y is produced by exactly one task, so
        // the result does not depend on the thread count.
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.spmv(x, &mut y);
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// max |A_ij - A_ji| / max |A_ij|; zero for an exactly symmetric matrix.
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut max_abs = 0.0f64;
        let mut max_defect = 0.0f64;
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                max_abs = max_abs.max(v.abs());
                max_defect = max_defect.max((v - self.get(j, i)).abs());
            }
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_defect / max_abs
        }
    }

    /// s A with the same pattern.
    pub fn scaled(&self, s: f64) -> CsrMatrix {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// A + s B, requiring equal dimensions (patterns may differ).
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.rows {
            let (mut a, enda) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut b, endb) = (other.row_ptr[i], other.row_ptr[i + 1]);
            while a < enda || b < endb {
                let ca = if a < enda { self.col_idx[a] } else { usize::MAX };
                let cb = if b < endb { other.col_idx[b] } else { usize::MAX };
                if ca < cb {
                    col_idx.push(ca);
                    values.push(self.values[a]);
                    a += 1;
                } else if cb < ca {
                    col_idx.push(cb);
                    values.push(s * other.values[b]);
                    b += 1;
                } else {
                    col_idx.push(ca);
                    values.push(self.values[a] + s * other.values[b]);
                    a += 1;
                    b += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Dense copy, for oracle comparisons on small systems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    /// Dump in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Assembles dense element/element blocks into a CSR matrix. Blocks are
/// accumulated in a fixed (row-element, col-element) order, so the result is
/// identical regardless of how the local matrices were computed.
pub struct BlockAccumulator {
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    index: BTreeMap<(usize, usize), usize>,
    data: Vec<Vec<f64>>,
}

impl BlockAccumulator {
    /// `row_offsets` / `col_offsets` give the global dof offset per element
    /// (length n_elements + 1).
    pub fn new(row_offsets: Vec<usize>, col_offsets: Vec<usize>) -> Self {
        BlockAccumulator {
            row_offsets,
            col_offsets,
            index: BTreeMap::new(),
            data: Vec::new(),
        }
    }

    fn block_dims(&self, er: usize, ec: usize) -> (usize, usize) {
        (
            self.row_offsets[er + 1] - self.row_offsets[er],
            self.col_offsets[ec + 1] - self.col_offsets[ec],
        )
    }

    /// Add a dense local block for the element pair `(er, ec)`, row-major.
    pub fn add_block(&mut self, er: usize, ec: usize, local: &[f64]) {
        let (nr, nc) = self.block_dims(er, ec);
        assert_eq!(local.len(), nr * nc, "local block size mismatch");
        let slot = match self.index.get(&(er, ec)) {
            Some(&s) => s,
            None => {
                let s = self.data.len();
                self.index.insert((er, ec), s);
                self.data.push(vec![0.0; nr * nc]);
                s
            }
        };
        for (d, v) in self.data[slot].iter_mut().zip(local) {
            *d += v;
        }
    }

    /// Flatten into CSR.
    pub fn into_csr(self) -> CsrMatrix {
        let n_row_el = self.row_offsets.len() - 1;
        let rows = *self.row_offsets.last().unwrap();
        let cols = *self.col_offsets.last().unwrap();
        // Per row element, the column elements in ascending order.
        let mut per_row_el: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_row_el];
        for (&(er, ec), &slot) in &self.index {
            per_row_el[er].push((ec, slot));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for er in 0..n_row_el {
            let nr = self.row_offsets[er + 1] - self.row_offsets[er];
            for r in 0..nr {
                for &(ec, slot) in &per_row_el[er] {
                    let c0 = self.col_offsets[ec];
                    let nc = self.col_offsets[ec + 1] - c0;
                    let block = &self.data[slot];
                    for c in 0..nc {
                        let v = block[r * nc + c];
                        col_idx.push(c0 + c);
                        values.push(v);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Solve A x = b directly through a dense LU factorization. Intended for
/// small systems (preconditioner blocks, test oracles).
pub fn dense_solve(a: &nalgebra::DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = nalgebra::DVector::from_column_slice(b);
    let lu = a.clone().lu();
    match lu.solve(&rhs) {
        Some(x) => Ok(x.as_slice().to_vec()),
        None => Err(Error::SingularSystem("dense LU factorization failed".into())),
    }
}
