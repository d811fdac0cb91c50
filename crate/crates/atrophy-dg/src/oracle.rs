//! Dense, loop-naive reference assemblies used by the verification suite.
//!
//! Every routine here rebuilds an operator entry by entry from the full
//! tensor trace definitions (outer products, double contractions), without
//! the block accumulation, sign shortcuts, or sparsity logic of the
//! production assembly in [`crate::forms`]. The quadrature rules are the
//! same ones the production path requests, so agreement is expected at
//! machine precision.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::fespace::{element_quadrature, face_quadrature, DgSpace};
use crate::forms::{penalty_eta, penalty_xi, PenaltyParams};
use crate::geometry::{
    ddot, dot, largest_eigenvalue_sym, mat_add, mat_scale, mat_vec, outer, sym, trace, Mat3,
    Vec3, ZERO_MAT,
};
use crate::mesh::FacePartition;

/// Full gradient tensor of the vector dof `phi e_c`: row `c` holds the
/// scalar gradient.
fn grad_tensor(grad: Vec3, c: usize) -> Mat3 {
    let mut g = ZERO_MAT;
    g[c] = grad;
    g
}

fn stress(grad_psi: &Mat3, mu: f64, lambda: f64, dim: usize) -> Mat3 {
    let mut p = mat_scale(&sym(grad_psi), 2.0 * mu);
    let tr = trace(grad_psi);
    for d in 0..dim {
        p[d][d] += lambda * tr;
    }
    p
}

/// Symmetric outer-product jump contribution of one side:
/// `(psi (x) n_side + n_side (x) psi) / 2`.
fn jump_tensor(psi: Vec3, n_side: Vec3) -> Mat3 {
    mat_scale(
        &mat_add(&outer(psi, n_side), &outer(n_side, psi)),
        0.5,
    )
}

fn unit(c: usize, v: f64) -> Vec3 {
    let mut out = [0.0; 3];
    out[c] = v;
    out
}

/// Weighted mass matrix, densely assembled.
pub fn dense_mass(space: &DgSpace, weight: impl Fn(usize, Vec3) -> f64) -> DMatrix<f64> {
    let n = space.n_dofs();
    let nc = space.components;
    let mut m = DMatrix::zeros(n, n);
    for e in 0..space.n_elements() {
        let (rule, _) = space.mass_quadrature(e);
        let offset = space.element_dofs(e).start;
        let nm = space.n_local_modes(e);
        for (q, &x) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * weight(e, x);
            let vals = space.basis(e).values(x);
            for mi in 0..nm {
                for ci in 0..nc {
                    for mj in 0..nm {
                        for cj in 0..nc {
                            if ci == cj {
                                m[(offset + mi * nc + ci, offset + mj * nc + cj)] +=
                                    w * vals[mi] * vals[mj];
                            }
                        }
                    }
                }
            }
        }
    }
    m
}

/// SIP diffusion operator, densely assembled from the trace definitions.
pub fn dense_diffusion(
    space: &DgSpace,
    d_of: impl Fn(usize) -> Mat3,
    alpha: f64,
    part: &FacePartition,
    pen: &PenaltyParams,
) -> Result<DMatrix<f64>> {
    let mesh = &space.mesh;
    let n = space.n_dofs();
    let mut m = DMatrix::zeros(n, n);
    let d_k: Vec<f64> = (0..space.n_elements())
        .map(|e| largest_eigenvalue_sym(&d_of(e), mesh.dim))
        .collect();

    for e in 0..space.n_elements() {
        let p = space.degree(e);
        let rule = element_quadrature(mesh, e, 2 * p + 1)?;
        let offset = space.element_dofs(e).start;
        let d = d_of(e);
        for (q, &x) in rule.points.iter().enumerate() {
            let ev = space.eval_basis(e, x);
            for i in 0..ev.values.len() {
                for j in 0..ev.values.len() {
                    m[(offset + i, offset + j)] +=
                        rule.weights[q] * dot(mat_vec(&d, ev.gradients[j]), ev.gradients[i]);
                }
            }
        }
    }

    for fid in part.form_faces() {
        let face = &mesh.faces[fid];
        let p = space.degree(face.plus);
        let rule = face_quadrature(mesh, face, 2 * p + 1)?;
        let eta = penalty_eta(mesh, part, fid, &|e| d_k[e], alpha, p, pen.eta0)?;
        let sides: Vec<(usize, f64)> = match face.minus() {
            Some(em) => vec![(face.plus, 1.0), (em, -1.0)],
            None => vec![(face.plus, 1.0)],
        };
        let avg = if sides.len() == 2 { 0.5 } else { 1.0 };
        for (q, &x) in rule.points.iter().enumerate() {
            let w = rule.weights[q];
            // One-sided evaluations.
            let evals: Vec<_> = sides
                .iter()
                .map(|&(e, _)| (space.element_dofs(e).start, space.eval_basis(e, x), d_of(e)))
                .collect();
            for (si, &(_, sgn_i)) in sides.iter().enumerate() {
                let (off_i, ev_i, d_i) = &evals[si];
                for ii in 0..ev_i.values.len() {
                    // jump vector of the test function, flux of the test fn
                    let jump_i = crate::geometry::scale(face.normal, sgn_i * ev_i.values[ii]);
                    let flux_i = mat_vec(d_i, ev_i.gradients[ii]);
                    for (sj, &(_, sgn_j)) in sides.iter().enumerate() {
                        let (off_j, ev_j, d_j) = &evals[sj];
                        for jj in 0..ev_j.values.len() {
                            let jump_j =
                                crate::geometry::scale(face.normal, sgn_j * ev_j.values[jj]);
                            let flux_j = mat_vec(d_j, ev_j.gradients[jj]);
                            let mut v = eta * dot(jump_j, jump_i);
                            v -= avg * dot(flux_j, jump_i);
                            v -= avg * dot(flux_i, jump_j);
                            m[(off_i + ii, off_j + jj)] += w * v;
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// SIP elasticity operator, densely assembled from the tensor definitions.
pub fn dense_elasticity(
    space: &DgSpace,
    mu: f64,
    lambda: f64,
    part: &FacePartition,
    pen: &PenaltyParams,
) -> Result<DMatrix<f64>> {
    let mesh = &space.mesh;
    let dim = mesh.dim;
    let nc = space.components;
    let n = space.n_dofs();
    let mut m = DMatrix::zeros(n, n);

    for e in 0..space.n_elements() {
        let p = space.degree(e);
        let rule = element_quadrature(mesh, e, 2 * p + 1)?;
        let offset = space.element_dofs(e).start;
        let nm = space.n_local_modes(e);
        for (q, &x) in rule.points.iter().enumerate() {
            let ev = space.eval_basis(e, x);
            let w = rule.weights[q];
            for mi in 0..nm {
                for ci in 0..nc {
                    let gi = grad_tensor(ev.gradients[mi], ci);
                    let ei = sym(&gi);
                    let divi = trace(&gi);
                    for mj in 0..nm {
                        for cj in 0..nc {
                            let gj = grad_tensor(ev.gradients[mj], cj);
                            let ej = sym(&gj);
                            let divj = trace(&gj);
                            let v = 2.0 * mu * ddot(&ej, &ei) + lambda * divj * divi;
                            m[(offset + mi * nc + ci, offset + mj * nc + cj)] += w * v;
                        }
                    }
                }
            }
        }
    }

    for fid in part.form_faces() {
        let face = &mesh.faces[fid];
        let p = space.degree(face.plus);
        let rule = face_quadrature(mesh, face, 2 * p + 1)?;
        let xi = penalty_xi(mesh, part, fid, mu, lambda, p, pen.xi0)?;
        let sides: Vec<(usize, f64)> = match face.minus() {
            Some(em) => vec![(face.plus, 1.0), (em, -1.0)],
            None => vec![(face.plus, 1.0)],
        };
        let avg = if sides.len() == 2 { 0.5 } else { 1.0 };
        for (q, &x) in rule.points.iter().enumerate() {
            let w = rule.weights[q];
            let evals: Vec<_> = sides
                .iter()
                .map(|&(e, _)| (space.element_dofs(e).start, space.eval_basis(e, x)))
                .collect();
            for (si, &(_, sgn_i)) in sides.iter().enumerate() {
                let (off_i, ev_i) = &evals[si];
                let n_i = crate::geometry::scale(face.normal, sgn_i);
                for mi in 0..ev_i.values.len() {
                    for ci in 0..nc {
                        let psi_i = unit(ci, ev_i.values[mi]);
                        let jump_i = jump_tensor(psi_i, n_i);
                        let stress_i = stress(&grad_tensor(ev_i.gradients[mi], ci), mu, lambda, dim);
                        for (sj, &(_, sgn_j)) in sides.iter().enumerate() {
                            let (off_j, ev_j) = &evals[sj];
                            let n_j = crate::geometry::scale(face.normal, sgn_j);
                            for mj in 0..ev_j.values.len() {
                                for cj in 0..nc {
                                    let psi_j = unit(cj, ev_j.values[mj]);
                                    let jump_j = jump_tensor(psi_j, n_j);
                                    let stress_j =
                                        stress(&grad_tensor(ev_j.gradients[mj], cj), mu, lambda, dim);
                                    // {P(u)} : [[v]] needs P n on the shared
                                    // face normal; the jump tensors already
                                    // carry the side normals.
                                    let mut v = xi * ddot(&jump_j, &jump_i);
                                    v -= avg * ddot(&stress_j, &jump_i);
                                    v -= avg * ddot(&stress_i, &jump_j);
                                    m[(off_i + mi * nc + ci, off_j + mj * nc + cj)] += w * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Atrophy-displacement coupling, densely assembled; rows over the
/// displacement space, columns over the atrophy space.
pub fn dense_coupling(
    gspace: &DgSpace,
    vspace: &DgSpace,
    mu: f64,
    lambda: f64,
    part: &FacePartition,
) -> Result<DMatrix<f64>> {
    let mesh = &vspace.mesh;
    let dim = mesh.dim;
    let nc = vspace.components;
    let coef = 2.0 * mu + dim as f64 * lambda;
    let mut m = DMatrix::zeros(vspace.n_dofs(), gspace.n_dofs());

    for e in 0..vspace.n_elements() {
        let order = gspace.degree(e) + vspace.degree(e) + 1;
        let rule = element_quadrature(mesh, e, order)?;
        let off_v = vspace.element_dofs(e).start;
        let off_g = gspace.element_dofs(e).start;
        for (q, &x) in rule.points.iter().enumerate() {
            let w = rule.weights[q];
            let evv = vspace.eval_basis(e, x);
            let qv = gspace.basis(e).values(x);
            for mi in 0..evv.values.len() {
                for ci in 0..nc {
                    let div = trace(&grad_tensor(evv.gradients[mi], ci));
                    for (j, qj) in qv.iter().enumerate() {
                        m[(off_v + mi * nc + ci, off_g + j)] += w * coef * qj * div;
                    }
                }
            }
        }
    }

    for fid in part.form_faces() {
        let face = &mesh.faces[fid];
        let order = gspace.degree(face.plus) + vspace.degree(face.plus) + 1;
        let rule = face_quadrature(mesh, face, order)?;
        let sides: Vec<(usize, f64)> = match face.minus() {
            Some(em) => vec![(face.plus, 1.0), (em, -1.0)],
            None => vec![(face.plus, 1.0)],
        };
        let avg = if sides.len() == 2 { 0.5 } else { 1.0 };
        for (q, &x) in rule.points.iter().enumerate() {
            let w = rule.weights[q];
            for &(e_v, sgn_v) in &sides {
                let off_v = vspace.element_dofs(e_v).start;
                let evv = vspace.eval_basis(e_v, x);
                let n_v = crate::geometry::scale(face.normal, sgn_v);
                for &(e_g, _) in &sides {
                    let off_g = gspace.element_dofs(e_g).start;
                    let qv = gspace.basis(e_g).values(x);
                    for mi in 0..evv.values.len() {
                        for ci in 0..nc {
                            let jump = jump_tensor(unit(ci, evv.values[mi]), n_v);
                            for (j, qj) in qv.iter().enumerate() {
                                // {q I} : [[psi]]
                                let mut qi = ZERO_MAT;
                                for d in 0..dim {
                                    qi[d][d] = avg * qj;
                                }
                                m[(off_v + mi * nc + ci, off_g + j)] -=
                                    w * coef * ddot(&qi, &jump);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Relative max-norm distance between a sparse matrix and a dense reference.
pub fn max_rel_diff(a: &crate::linalg::CsrMatrix, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.rows, b.nrows());
    assert_eq!(a.cols, b.ncols());
    let scale = b.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    let mut worst = 0.0f64;
    for i in 0..a.rows {
        for j in 0..a.cols {
            worst = worst.max((a.get(i, j) - b[(i, j)]).abs());
        }
    }
    worst / scale
}
