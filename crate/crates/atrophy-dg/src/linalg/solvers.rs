//! Conjugate gradients and restarted GMRES, both optionally preconditioned.
//! Inner products are accumulated sequentially so results are bit-identical
//! across thread counts.

use nalgebra::DMatrix;

use super::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolverReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub trait Preconditioner: Sync {
    /// z = M^{-1} r.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPrecond;

impl Preconditioner for IdentityPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Exact inverse of the block diagonal of a matrix, with blocks given by
/// consecutive dof ranges (one per mesh element in DG assemblies).
pub struct BlockJacobi {
    offsets: Vec<usize>,
    inverses: Vec<DMatrix<f64>>,
}

impl BlockJacobi {
    /// `offsets` lists the block boundaries (length n_blocks + 1) and must
    /// span all rows of `a`.
    pub fn new(a: &CsrMatrix, offsets: &[usize]) -> Result<Self> {
        assert_eq!(
            *offsets.last().expect("empty block layout"),
            a.rows,
            "block layout does not span the matrix"
        );
        let mut inverses = Vec::with_capacity(offsets.len() - 1);
        for b in 0..offsets.len() - 1 {
            let (lo, hi) = (offsets[b], offsets[b + 1]);
            let n = hi - lo;
            let mut block = DMatrix::zeros(n, n);
            for i in lo..hi {
                for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                    let j = a.col_idx[k];
                    if j >= lo && j < hi {
                        block[(i - lo, j - lo)] = a.values[k];
                    }
                }
            }
            let inv = block.clone().try_inverse().ok_or_else(|| {
                Error::SingularSystem(format!("block {b} of the block-Jacobi preconditioner"))
            })?;
            inverses.push(inv);
        }
        Ok(BlockJacobi {
            offsets: offsets.to_vec(),
            inverses,
        })
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for (b, inv) in self.inverses.iter().enumerate() {
            let (lo, hi) = (self.offsets[b], self.offsets[b + 1]);
            for i in lo..hi {
                let mut acc = 0.0;
                for j in lo..hi {
                    acc += inv[(i - lo, j - lo)] * r[j];
                }
                z[i] = acc;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for symmetric positive definite A.
///
/// Returns the iterate and a report; a diverged solve still returns the best
/// iterate with `converged = false`. A non-positive curvature `p^T A p`
/// aborts with an indefinite-matrix error, which doubles as an SPD check.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    maxit: usize,
    precond: &dyn Preconditioner,
) -> Result<(Vec<f64>, SolverReport)> {
    if a.rows != a.cols || a.rows != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "cg: A is {}x{}, b has {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolverReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.mul_vec(&x);
        for i in 0..n {
            r[i] -= ax[i];
        }
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / b_norm;
    if res <= tol {
        return Ok((
            x,
            SolverReport {
                iterations: 0,
                residual: res,
                converged: true,
            },
        ));
    }
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        a.spmv(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::IndefiniteMatrix {
                iteration: it,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / b_norm;
        if res <= tol {
            return Ok((
                x,
                SolverReport {
                    iterations: it,
                    residual: res,
                    converged: true,
                },
            ));
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        x,
        SolverReport {
            iterations: maxit,
            residual: res,
            converged: false,
        },
    ))
}

/// Left-preconditioned restarted GMRES. The report carries the true
/// (unpreconditioned) relative residual of the returned iterate.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    restart: usize,
    tol: f64,
    maxit: usize,
    precond: &dyn Preconditioner,
) -> Result<(Vec<f64>, SolverReport)> {
    if a.rows != a.cols || a.rows != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "gmres: A is {}x{}, b has {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolverReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let m = restart.max(1);
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let mut total_iters = 0usize;

    let true_residual = |x: &[f64]| -> f64 {
        let ax = a.mul_vec(x);
        let mut r2 = 0.0;
        for i in 0..n {
            let d = b[i] - ax[i];
            r2 += d * d;
        }
        r2.sqrt() / b_norm
    };

    'outer: while total_iters < maxit {
        // Preconditioned residual.
        let ax = a.mul_vec(&x);
        let mut r_raw = vec![0.0; n];
        for i in 0..n {
            r_raw[i] = b[i] - ax[i];
        }
        let mut r = vec![0.0; n];
        precond.apply(&r_raw, &mut r);
        let beta = norm(&r);
        if beta == 0.0 {
            break;
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|&t| t / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            let avk = a.mul_vec(&v[k]);
            let mut w = vec![0.0; n];
            precond.apply(&avk, &mut w);
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * vj[i];
                }
            }
            let hk1 = norm(&w);
            h[k + 1][k] = hk1;
            // Apply stored Givens rotations.
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + hk1 * hk1).sqrt();
            if denom == 0.0 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hk1 / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let approx_res = g[k + 1].abs() / beta;
            if hk1 == 0.0 || approx_res <= tol * 0.1 || total_iters >= maxit {
                break;
            }
            v.push(w.iter().map(|&t| t / hk1).collect());
        }
        // Back-substitute the triangular system and update x.
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, &yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * v[j][i];
            }
        }
        let res = true_residual(&x);
        if res <= tol {
            return Ok((
                x,
                SolverReport {
                    iterations: total_iters,
                    residual: res,
                    converged: true,
                },
            ));
        }
        if total_iters >= maxit {
            break 'outer;
        }
    }
    let res = true_residual(&x);
    Ok((
        x,
        SolverReport {
            iterations: total_iters,
            residual: res,
            converged: res <= tol,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockAccumulator;

    fn identity(n: usize) -> CsrMatrix {
        let mut acc = BlockAccumulator::new(vec![0, n], vec![0, n]);
        let mut block = vec![0.0; n * n];
        for i in 0..n {
            block[i * n + i] = 1.0;
        }
        acc.add_block(0, 0, &block);
        acc.into_csr()
    }

    #[test]
    fn cg_identity_one_iteration() {
        let a = identity(4);
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let (x, rep) = cg(&a, &b, None, 1e-12, 10, &IdentityPrecond).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
        assert_eq!(x, b);
    }

    #[test]
    fn cg_diagonal() {
        let mut acc = BlockAccumulator::new(vec![0, 2], vec![0, 2]);
        acc.add_block(0, 0, &[1.0, 0.0, 0.0, 4.0]);
        let a = acc.into_csr();
        let (x, rep) = cg(&a, &[1.0, 4.0], None, 1e-14, 10, &IdentityPrecond).unwrap();
        assert!(rep.converged);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cg_breakdown_on_indefinite() {
        let mut acc = BlockAccumulator::new(vec![0, 2], vec![0, 2]);
        acc.add_block(0, 0, &[1.0, 0.0, 0.0, -4.0]);
        let a = acc.into_csr();
        let err = cg(&a, &[0.0, 1.0], None, 1e-12, 10, &IdentityPrecond);
        assert!(matches!(err, Err(Error::IndefiniteMatrix { .. })));
    }

    #[test]
    fn gmres_identity_and_nonsymmetric() {
        let a = identity(3);
        let b = vec![1.0, -1.0, 2.0];
        let (x, rep) = gmres(&a, &b, None, 10, 1e-12, 50, &IdentityPrecond).unwrap();
        assert!(rep.converged);
        for i in 0..3 {
            assert!((x[i] - b[i]).abs() < 1e-12);
        }

        // [[2, 1], [0, 3]] x = (3, 3) -> x = (1, 1).
        let mut acc = BlockAccumulator::new(vec![0, 2], vec![0, 2]);
        acc.add_block(0, 0, &[2.0, 1.0, 0.0, 3.0]);
        let a = acc.into_csr();
        let (x, rep) = gmres(&a, &[3.0, 3.0], None, 10, 1e-12, 50, &IdentityPrecond).unwrap();
        assert!(rep.converged);
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn solvers_match_dense_oracle_on_random_spd() {
        // Deterministic pseudo-random SPD system, checked against dense LU.
        let n = 24;
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                dense[(i, j)] = next();
            }
        }
        let spd = &dense * dense.transpose() + nalgebra::DMatrix::identity(n, n) * n as f64;
        let mut acc = BlockAccumulator::new(vec![0, n], vec![0, n]);
        let flat: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| spd[(i, j)])
            .collect();
        acc.add_block(0, 0, &flat);
        let a = acc.into_csr();
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let x_ref = crate::linalg::dense_solve(&spd, &b).unwrap();

        let (x_cg, rep) = cg(&a, &b, None, 1e-12, 1000, &IdentityPrecond).unwrap();
        assert!(rep.converged);
        let (x_gm, rep2) = gmres(&a, &b, None, 30, 1e-12, 1000, &IdentityPrecond).unwrap();
        assert!(rep2.converged);
        let scale: f64 = x_ref.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..n {
            assert!((x_cg[i] - x_ref[i]).abs() < 1e-8 * scale);
            assert!((x_gm[i] - x_ref[i]).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn block_jacobi_exact_on_block_diagonal() {
        let mut acc = BlockAccumulator::new(vec![0, 2, 4], vec![0, 2, 4]);
        acc.add_block(0, 0, &[4.0, 1.0, 1.0, 3.0]);
        acc.add_block(1, 1, &[5.0, 2.0, 2.0, 6.0]);
        let a = acc.into_csr();
        let bj = BlockJacobi::new(&a, &[0, 2, 4]).unwrap();
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let (x, rep) = cg(&a, &b, None, 1e-12, 10, &bj).unwrap();
        assert!(rep.converged && rep.iterations <= 1, "{rep:?}");
        let resid = {
            let ax = a.mul_vec(&x);
            ax.iter()
                .zip(&b)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0f64, f64::max)
        };
        assert!(resid < 1e-10);
    }

    #[test]
    fn block_jacobi_singular_block_rejected() {
        let mut acc = BlockAccumulator::new(vec![0, 2], vec![0, 2]);
        acc.add_block(0, 0, &[1.0, 1.0, 1.0, 1.0]);
        let a = acc.into_csr();
        assert!(matches!(
            BlockJacobi::new(&a, &[0, 2]),
            Err(Error::SingularSystem(_))
        ));
    }
}
