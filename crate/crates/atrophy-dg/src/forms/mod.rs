//! Assembly of the interior-penalty bilinear forms and right-hand sides:
//! the SIP diffusion operator, the SIP elasticity operator, the
//! atrophy-displacement coupling, weighted mass matrices, penalty functions,
//! and the Nitsche liftings of boundary data.
//!
//! Dirichlet data is imposed weakly through the trace conventions of the
//! forms (never by row elimination), which keeps every operator symmetric.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{face_quadrature, DgField, DgSpace};
use crate::geometry::{dot, largest_eigenvalue_sym, Mat3, Vec3};
use crate::linalg::{BlockAccumulator, CsrMatrix};
use crate::mesh::{FacePartition, Mesh};

/// Dimensionless stabilization constants of the penalty functions.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyParams {
    pub eta0: f64,
    pub xi0: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        // "Sufficiently large" constants, validated by the coercivity tests.
        PenaltyParams {
            eta0: 10.0,
            xi0: 10.0,
        }
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Facewise penalty value shared by `penalty_eta` and `penalty_xi`:
/// `coef * p^2 / h` with harmonic averages across interior faces.
fn face_penalty(mesh: &Mesh, face: usize, coef: &dyn Fn(usize) -> f64, p: usize, c0: f64) -> f64 {
    let f = &mesh.faces[face];
    let p2 = (p * p) as f64;
    match f.minus() {
        Some(minus) => {
            let ch = harmonic(coef(f.plus), coef(minus));
            let hh = harmonic(
                mesh.elements[f.plus].diameter,
                mesh.elements[minus].diameter,
            );
            c0 * ch * p2 / hh
        }
        None => c0 * coef(f.plus) * p2 / mesh.elements[f.plus].diameter,
    }
}

fn reject_neumann(part: &FacePartition, face: usize) -> Result<()> {
    if part.neumann.binary_search(&face).is_ok() {
        return Err(Error::InvalidParameter(format!(
            "face {face} lies on the Neumann boundary; no penalty is defined there"
        )));
    }
    Ok(())
}

/// Diffusion penalty `eta = eta0 * max{d^K, alpha} p^2 / h`, with harmonic
/// averages of `d^K` and `h` across interior faces. `d_k` maps an element to
/// the largest eigenvalue of its diffusion tensor.
pub fn penalty_eta(
    mesh: &Mesh,
    part: &FacePartition,
    face: usize,
    d_k: &dyn Fn(usize) -> f64,
    alpha: f64,
    p: usize,
    eta0: f64,
) -> Result<f64> {
    reject_neumann(part, face)?;
    let f = &mesh.faces[face];
    let p2 = (p * p) as f64;
    Ok(match f.minus() {
        Some(minus) => {
            let dh = harmonic(d_k(f.plus), d_k(minus));
            let hh = harmonic(
                mesh.elements[f.plus].diameter,
                mesh.elements[minus].diameter,
            );
            eta0 * dh.max(alpha) * p2 / hh
        }
        None => {
            eta0 * d_k(f.plus).max(alpha) * p2 / mesh.elements[f.plus].diameter
        }
    })
}

/// Elasticity penalty `xi = xi0 * C_E p^2 / h` with
/// `C_E = 2 mu + dim lambda`, the largest eigenvalue of the isotropic
/// elasticity tensor, harmonically averaged across interior faces.
pub fn penalty_xi(
    mesh: &Mesh,
    part: &FacePartition,
    face: usize,
    mu: f64,
    lambda: f64,
    p: usize,
    xi0: f64,
) -> Result<f64> {
    reject_neumann(part, face)?;
    let ce = 2.0 * mu + mesh.dim as f64 * lambda;
    Ok(face_penalty(mesh, face, &|_| ce, p, xi0))
}

fn offsets_of(space: &DgSpace) -> Vec<usize> {
    let mut out: Vec<usize> = (0..space.n_elements())
        .map(|e| space.element_dofs(e).start)
        .collect();
    out.push(space.n_dofs());
    out
}

/// Weighted mass matrix `(w phi_j, phi_i)` using the cached default volume
/// rule (order 2p + 2). For vector spaces the weight acts componentwise.
pub fn assemble_mass(space: &DgSpace, weight: impl Fn(usize, Vec3) -> f64 + Sync) -> CsrMatrix {
    let nc = space.components;
    let locals: Vec<Vec<f64>> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let (rule, vals) = space.mass_quadrature(e);
            let n = space.n_local_modes(e);
            let mut scalar = vec![0.0; n * n];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * weight(e, x);
                let v = &vals[q];
                for i in 0..n {
                    let wvi = w * v[i];
                    for j in 0..n {
                        scalar[i * n + j] += wvi * v[j];
                    }
                }
            }
            if nc == 1 {
                scalar
            } else {
                let nd = n * nc;
                let mut block = vec![0.0; nd * nd];
                for i in 0..n {
                    for j in 0..n {
                        for c in 0..nc {
                            block[(i * nc + c) * nd + (j * nc + c)] = scalar[i * n + j];
                        }
                    }
                }
                block
            }
        })
        .collect();
    let offsets = offsets_of(space);
    let mut acc = BlockAccumulator::new(offsets.clone(), offsets);
    for (e, local) in locals.into_iter().enumerate() {
        acc.add_block(e, e, &local);
    }
    acc.into_csr()
}

/// Weighted mass matrix whose weight is a mapped DG field on the same
/// space: `(map(field(x)) phi_j, phi_i)`. Uses the cached basis values of
/// the default volume rule, avoiding per-point basis re-evaluation.
pub fn assemble_mass_field_weight(
    space: &DgSpace,
    field: &DgField,
    map: impl Fn(f64) -> f64 + Sync,
) -> CsrMatrix {
    assert!(
        std::sync::Arc::ptr_eq(&field.space.mesh, &space.mesh)
            && field.space.n_dofs() == space.n_dofs(),
        "field-weighted mass needs the weight field on the same space"
    );
    let locals: Vec<Vec<f64>> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let (rule, vals) = space.mass_quadrature(e);
            let n = space.n_local_modes(e);
            let mut local = vec![0.0; n * n];
            for (q, w0) in rule.weights.iter().enumerate() {
                let w = w0 * map(field.eval_scalar_with(e, &vals[q]));
                let v = &vals[q];
                for i in 0..n {
                    let wvi = w * v[i];
                    for j in 0..n {
                        local[i * n + j] += wvi * v[j];
                    }
                }
            }
            local
        })
        .collect();
    let offsets = offsets_of(space);
    let mut acc = BlockAccumulator::new(offsets.clone(), offsets);
    for (e, local) in locals.into_iter().enumerate() {
        acc.add_block(e, e, &local);
    }
    acc.into_csr()
}

/// Load vector `(f, phi_i)` for a scalar space.
pub fn volume_rhs_scalar(space: &DgSpace, f: impl Fn(Vec3) -> f64 + Sync) -> Vec<f64> {
    let chunks: Vec<(usize, Vec<f64>)> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let (rule, vals) = space.mass_quadrature(e);
            let n = space.n_local_modes(e);
            let mut local = vec![0.0; n];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * f(x);
                for (m, lv) in local.iter_mut().enumerate() {
                    *lv += w * vals[q][m];
                }
            }
            (space.element_dofs(e).start, local)
        })
        .collect();
    let mut out = vec![0.0; space.n_dofs()];
    for (offset, local) in chunks {
        out[offset..offset + local.len()].copy_from_slice(&local);
    }
    out
}

/// Load vector `(f, psi_i)` for a vector space.
pub fn volume_rhs_vector(space: &DgSpace, f: impl Fn(Vec3) -> Vec3 + Sync) -> Vec<f64> {
    let nc = space.components;
    let chunks: Vec<(usize, Vec<f64>)> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let (rule, vals) = space.mass_quadrature(e);
            let n = space.n_local_modes(e);
            let mut local = vec![0.0; n * nc];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q];
                let fx = f(x);
                for m in 0..n {
                    for c in 0..nc {
                        local[m * nc + c] += w * vals[q][m] * fx[c];
                    }
                }
            }
            (space.element_dofs(e).start, local)
        })
        .collect();
    let mut out = vec![0.0; space.n_dofs()];
    for (offset, local) in chunks {
        out[offset..offset + local.len()].copy_from_slice(&local);
    }
    out
}

fn check_spd(d: &Mat3, dim: usize, element: usize) -> Result<()> {
    for i in 0..dim {
        for j in 0..dim {
            if (d[i][j] - d[j][i]).abs() > 1e-10 * d[i][j].abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "diffusion tensor on element {element} is not symmetric"
                )));
            }
        }
    }
    // Sylvester's criterion on leading minors.
    let m1 = d[0][0];
    let m2 = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    let ok = match dim {
        2 => m1 > 0.0 && m2 > 0.0,
        3 => m1 > 0.0 && m2 > 0.0 && crate::geometry::det(d, 3) > 0.0,
        _ => false,
    };
    if !ok {
        return Err(Error::InvalidParameter(format!(
            "diffusion tensor on element {element} is not positive definite"
        )));
    }
    Ok(())
}

/// Scalar basis traces of one element on a set of face quadrature points.
struct SideTrace {
    /// values[q][m]
    values: Vec<Vec<f64>>,
    /// gradients[q][m]
    gradients: Vec<Vec<Vec3>>,
}

fn side_trace(space: &DgSpace, element: usize, points: &[Vec3]) -> SideTrace {
    let mut values = Vec::with_capacity(points.len());
    let mut gradients = Vec::with_capacity(points.len());
    for &x in points {
        let ev = space.eval_basis(element, x);
        values.push(ev.values);
        gradients.push(ev.gradients);
    }
    SideTrace { values, gradients }
}

/// SIP discretization of the diffusion operator:
/// volume `D grad c . grad w`, face penalty `eta [c][w]`, and the symmetric
/// consistency terms over interior and Dirichlet faces.
pub fn assemble_diffusion_sip(
    space: &DgSpace,
    d_of: impl Fn(usize) -> Mat3 + Sync,
    alpha: f64,
    part: &FacePartition,
    pen: &PenaltyParams,
) -> Result<CsrMatrix> {
    let mesh = &space.mesh;
    let dim = mesh.dim;
    let n_el = space.n_elements();
    let mut d_k = vec![0.0; n_el];
    for (e, dk) in d_k.iter_mut().enumerate() {
        let d = d_of(e);
        check_spd(&d, dim, e)?;
        *dk = largest_eigenvalue_sym(&d, dim);
    }

    // Volume terms.
    let volume: Vec<Vec<f64>> = (0..n_el)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let p = space.degree(e);
            let rule = crate::fespace::element_quadrature(mesh, e, 2 * p + 1)?;
            let d = d_of(e);
            let n = space.n_local_modes(e);
            let mut local = vec![0.0; n * n];
            for (q, &x) in rule.points.iter().enumerate() {
                let ev = space.eval_basis(e, x);
                let w = rule.weights[q];
                // D grad(phi_j) precomputed per mode.
                let dg: Vec<Vec3> = ev
                    .gradients
                    .iter()
                    .map(|g| crate::geometry::mat_vec(&d, *g))
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        local[i * n + j] += w * dot(dg[j], ev.gradients[i]);
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;

    // Face terms: (face id, blocks as (row el, col el, local)).
    type FaceBlocks = Vec<(usize, usize, Vec<f64>)>;
    let face_ids: Vec<usize> = part.form_faces().collect();
    let face_blocks: Vec<FaceBlocks> = face_ids
        .par_iter()
        .map(|&fid| -> Result<FaceBlocks> {
            let face = &mesh.faces[fid];
            let ep = face.plus;
            let p = space.degree(ep);
            let order = 2 * p + 1;
            let rule = face_quadrature(mesh, face, order)?;
            let n = face.normal;
            let eta = penalty_eta(mesh, part, fid, &|e| d_k[e], alpha, p, pen.eta0)?;
            match face.minus() {
                None => {
                    let tr = side_trace(space, ep, &rule.points);
                    let dmat = d_of(ep);
                    let nm = space.n_local_modes(ep);
                    let mut local = vec![0.0; nm * nm];
                    for q in 0..rule.len() {
                        let w = rule.weights[q];
                        let v = &tr.values[q];
                        let flux: Vec<f64> = tr.gradients[q]
                            .iter()
                            .map(|g| dot(crate::geometry::mat_vec(&dmat, *g), n))
                            .collect();
                        for i in 0..nm {
                            for j in 0..nm {
                                local[i * nm + j] +=
                                    w * (eta * v[j] * v[i] - flux[j] * v[i] - v[j] * flux[i]);
                            }
                        }
                    }
                    Ok(vec![(ep, ep, local)])
                }
                Some(em) => {
                    let sides = [ep, em];
                    let signs = [1.0, -1.0];
                    let traces = [
                        side_trace(space, ep, &rule.points),
                        side_trace(space, em, &rule.points),
                    ];
                    let dmats = [d_of(ep), d_of(em)];
                    let nms = [space.n_local_modes(ep), space.n_local_modes(em)];
                    let mut blocks: FaceBlocks = Vec::with_capacity(4);
                    for (si, &eside_i) in sides.iter().enumerate() {
                        for (sj, &eside_j) in sides.iter().enumerate() {
                            let (ni, nj) = (nms[si], nms[sj]);
                            let mut local = vec![0.0; ni * nj];
                            for q in 0..rule.len() {
                                let w = rule.weights[q];
                                let vi = &traces[si].values[q];
                                let vj = &traces[sj].values[q];
                                let flux_j: Vec<f64> = traces[sj].gradients[q]
                                    .iter()
                                    .map(|g| dot(crate::geometry::mat_vec(&dmats[sj], *g), n))
                                    .collect();
                                let flux_i: Vec<f64> = traces[si].gradients[q]
                                    .iter()
                                    .map(|g| dot(crate::geometry::mat_vec(&dmats[si], *g), n))
                                    .collect();
                                for i in 0..ni {
                                    for j in 0..nj {
                                        // eta (sigma_j v_j)(sigma_i v_i)
                                        //  - {D grad v_j}.n (sigma_i v_i)
                                        //  - (sigma_j v_j) {D grad v_i}.n
                                        local[i * nj + j] += w
                                            * (eta * signs[sj] * vj[j] * signs[si] * vi[i]
                                                - 0.5 * flux_j[j] * signs[si] * vi[i]
                                                - signs[sj] * vj[j] * 0.5 * flux_i[i]);
                                    }
                                }
                            }
                            blocks.push((eside_i, eside_j, local));
                        }
                    }
                    Ok(blocks)
                }
            }
        })
        .collect::<Result<_>>()?;

    let offsets = offsets_of(space);
    let mut acc = BlockAccumulator::new(offsets.clone(), offsets);
    for (e, local) in volume.into_iter().enumerate() {
        acc.add_block(e, e, &local);
    }
    for blocks in face_blocks {
        for (er, ec, local) in blocks {
            acc.add_block(er, ec, &local);
        }
    }
    Ok(acc.into_csr())
}

/// Nitsche lifting of diffusion boundary data into the right-hand side:
/// `int_FD eta c_D w - c_D D grad w . n` plus `int_FN h_N w`.
pub fn diffusion_boundary_rhs(
    space: &DgSpace,
    part: &FacePartition,
    d_of: impl Fn(usize) -> Mat3 + Sync,
    alpha: f64,
    pen: &PenaltyParams,
    dirichlet: impl Fn(Vec3) -> f64 + Sync,
    neumann: impl Fn(Vec3) -> f64 + Sync,
) -> Result<Vec<f64>> {
    let mesh = &space.mesh;
    let n_el = space.n_elements();
    let mut d_k = vec![0.0; n_el];
    for (e, dk) in d_k.iter_mut().enumerate() {
        *dk = largest_eigenvalue_sym(&d_of(e), mesh.dim);
    }
    let mut out = vec![0.0; space.n_dofs()];
    let chunks: Vec<(usize, Vec<f64>)> = part
        .dirichlet
        .par_iter()
        .map(|&fid| -> Result<(usize, Vec<f64>)> {
            let face = &mesh.faces[fid];
            let e = face.plus;
            let p = space.degree(e);
            let rule = face_quadrature(mesh, face, 2 * p + 2)?;
            let eta = penalty_eta(mesh, part, fid, &|el| d_k[el], alpha, p, pen.eta0)?;
            let d = d_of(e);
            let n = face.normal;
            let nm = space.n_local_modes(e);
            let mut local = vec![0.0; nm];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q];
                let cd = dirichlet(x);
                let ev = space.eval_basis(e, x);
                for m in 0..nm {
                    let flux = dot(crate::geometry::mat_vec(&d, ev.gradients[m]), n);
                    local[m] += w * (eta * cd * ev.values[m] - cd * flux);
                }
            }
            Ok((space.element_dofs(e).start, local))
        })
        .collect::<Result<_>>()?;
    for (offset, local) in chunks {
        for (m, v) in local.into_iter().enumerate() {
            out[offset + m] += v;
        }
    }
    let chunks: Vec<(usize, Vec<f64>)> = part
        .neumann
        .par_iter()
        .map(|&fid| -> Result<(usize, Vec<f64>)> {
            let face = &mesh.faces[fid];
            let e = face.plus;
            let p = space.degree(e);
            let rule = face_quadrature(mesh, face, 2 * p + 2)?;
            let nm = space.n_local_modes(e);
            let mut local = vec![0.0; nm];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * neumann(x);
                let vals = space.basis(e).values(x);
                for m in 0..nm {
                    local[m] += w * vals[m];
                }
            }
            Ok((space.element_dofs(e).start, local))
        })
        .collect::<Result<_>>()?;
    for (offset, local) in chunks {
        for (m, v) in local.into_iter().enumerate() {
            out[offset + m] += v;
        }
    }
    Ok(out)
}

/// Traction contribution `[P_E(psi) n]_a` for the vector dof `phi e_c`:
/// `mu (delta_{a c} grad(phi).n + n_c d_a phi) + lambda d_c phi n_a`.
#[inline]
fn stress_flux(grad: Vec3, gn: f64, c: usize, a: usize, n: Vec3, mu: f64, lambda: f64) -> f64 {
    let mut v = mu * n[c] * grad[a] + lambda * grad[c] * n[a];
    if a == c {
        v += mu * gn;
    }
    v
}

/// SIP discretization of linearized elasticity: volume
/// `2 mu eps(u):eps(v) + lambda div(u) div(v)`, face penalty on the
/// symmetric outer-product jump, and the symmetric stress consistency terms
/// over interior and Dirichlet faces of the displacement field.
pub fn assemble_elasticity_sip(
    space: &DgSpace,
    mu: f64,
    lambda: f64,
    part: &FacePartition,
    pen: &PenaltyParams,
) -> Result<CsrMatrix> {
    let mesh = &space.mesh;
    let dim = mesh.dim;
    let nc = space.components;
    if nc != dim {
        return Err(Error::DimensionMismatch(format!(
            "elasticity needs a vector space with {dim} components, got {nc}"
        )));
    }
    let n_el = space.n_elements();

    let volume: Vec<Vec<f64>> = (0..n_el)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let p = space.degree(e);
            let rule = crate::fespace::element_quadrature(mesh, e, 2 * p + 1)?;
            let n = space.n_local_modes(e);
            let nd = n * nc;
            let mut local = vec![0.0; nd * nd];
            for (q, &x) in rule.points.iter().enumerate() {
                let ev = space.eval_basis(e, x);
                let w = rule.weights[q];
                for mi in 0..n {
                    let gi = ev.gradients[mi];
                    for mj in 0..n {
                        let gj = ev.gradients[mj];
                        let gg = dot(gi, gj);
                        for ci in 0..nc {
                            let row = mi * nc + ci;
                            for cj in 0..nc {
                                // 2 mu eps(psi_j):eps(psi_i)
                                //   = mu (delta_{ci cj} grad_j.grad_i + d_{ci}phi_j d_{cj}phi_i)
                                // lambda div(psi_j) div(psi_i)
                                //   = lambda d_{cj}phi_j d_{ci}phi_i
                                let mut v = mu * gj[ci] * gi[cj] + lambda * gj[cj] * gi[ci];
                                if ci == cj {
                                    v += mu * gg;
                                }
                                local[row * nd + (mj * nc + cj)] += w * v;
                            }
                        }
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;

    type FaceBlocks = Vec<(usize, usize, Vec<f64>)>;
    let face_ids: Vec<usize> = part.form_faces().collect();
    let face_blocks: Vec<FaceBlocks> = face_ids
        .par_iter()
        .map(|&fid| -> Result<FaceBlocks> {
            let face = &mesh.faces[fid];
            let ep = face.plus;
            let p = space.degree(ep);
            let rule = face_quadrature(mesh, face, 2 * p + 1)?;
            let n = face.normal;
            let xi = penalty_xi(mesh, part, fid, mu, lambda, p, pen.xi0)?;
            let (sides, avg): (Vec<usize>, f64) = match face.minus() {
                Some(em) => (vec![ep, em], 0.5),
                None => (vec![ep], 1.0),
            };
            let signs = [1.0, -1.0];
            let traces: Vec<SideTrace> = sides
                .iter()
                .map(|&e| side_trace(space, e, &rule.points))
                .collect();
            let mut blocks: FaceBlocks = Vec::with_capacity(sides.len() * sides.len());
            for (si, &el_i) in sides.iter().enumerate() {
                for (sj, &el_j) in sides.iter().enumerate() {
                    let (ni, nj) = (space.n_local_modes(el_i), space.n_local_modes(el_j));
                    let (ndi, ndj) = (ni * nc, nj * nc);
                    let mut local = vec![0.0; ndi * ndj];
                    for q in 0..rule.len() {
                        let w = rule.weights[q];
                        let vi = &traces[si].values[q];
                        let vj = &traces[sj].values[q];
                        let gi = &traces[si].gradients[q];
                        let gj = &traces[sj].gradients[q];
                        let gni: Vec<f64> = gi.iter().map(|g| dot(*g, n)).collect();
                        let gnj: Vec<f64> = gj.iter().map(|g| dot(*g, n)).collect();
                        for mi in 0..ni {
                            for ci in 0..nc {
                                let row = mi * nc + ci;
                                for mj in 0..nj {
                                    for cj in 0..nc {
                                        // Penalty: xi [[u]]:[[v]] with
                                        // [[phi e_c]] = sigma/2 (phi e_c (x) n + n (x) phi e_c):
                                        // contraction = phi_j phi_i sigma_j sigma_i
                                        //   (delta_{ci cj} + n_ci n_cj) / 2.
                                        let mut v = xi
                                            * signs[sj]
                                            * signs[si]
                                            * vj[mj]
                                            * vi[mi]
                                            * 0.5
                                            * (if ci == cj { 1.0 } else { 0.0 } + n[ci] * n[cj]);
                                        // Consistency: -({P(u)}:[[v]] + [[u]]:{P(v)}); for
                                        // symmetric P, P:[[phi e_c]] = sigma phi (P n)_c.
                                        let tj = stress_flux(gj[mj], gnj[mj], cj, ci, n, mu, lambda);
                                        let ti = stress_flux(gi[mi], gni[mi], ci, cj, n, mu, lambda);
                                        v -= avg * tj * signs[si] * vi[mi];
                                        v -= avg * ti * signs[sj] * vj[mj];
                                        local[row * ndj + (mj * nc + cj)] += w * v;
                                    }
                                }
                            }
                        }
                    }
                    blocks.push((el_i, el_j, local));
                }
            }
            Ok(blocks)
        })
        .collect::<Result<_>>()?;

    let offsets = offsets_of(space);
    let mut acc = BlockAccumulator::new(offsets.clone(), offsets);
    for (e, local) in volume.into_iter().enumerate() {
        acc.add_block(e, e, &local);
    }
    for blocks in face_blocks {
        for (er, ec, local) in blocks {
            acc.add_block(er, ec, &local);
        }
    }
    Ok(acc.into_csr())
}

/// Nitsche lifting of displacement boundary data plus the Neumann traction
/// term `(h_u, v)` on the traction boundary.
pub fn elasticity_boundary_rhs(
    space: &DgSpace,
    part: &FacePartition,
    mu: f64,
    lambda: f64,
    pen: &PenaltyParams,
    dirichlet: impl Fn(Vec3) -> Vec3 + Sync,
    traction: impl Fn(Vec3) -> Vec3 + Sync,
) -> Result<Vec<f64>> {
    let mesh = &space.mesh;
    let nc = space.components;
    let mut out = vec![0.0; space.n_dofs()];
    let chunks: Vec<(usize, Vec<f64>)> = part
        .dirichlet
        .par_iter()
        .map(|&fid| -> Result<(usize, Vec<f64>)> {
            let face = &mesh.faces[fid];
            let e = face.plus;
            let p = space.degree(e);
            let rule = face_quadrature(mesh, face, 2 * p + 2)?;
            let xi = penalty_xi(mesh, part, fid, mu, lambda, p, pen.xi0)?;
            let n = face.normal;
            let nm = space.n_local_modes(e);
            let mut local = vec![0.0; nm * nc];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q];
                let ud = dirichlet(x);
                let udn = dot(ud, n);
                let ev = space.eval_basis(e, x);
                for m in 0..nm {
                    let gn = dot(ev.gradients[m], n);
                    for c in 0..nc {
                        // xi D_u : [[psi]] = xi phi (D_u n)_c with
                        // (D_u n)_c = (u_D_c + n_c (u_D . n)) / 2.
                        let mut v = xi * ev.values[m] * 0.5 * (ud[c] + n[c] * udn);
                        // - D_u : P(psi) = - u_D . (P(psi) n).
                        for a in 0..nc {
                            v -= ud[a] * stress_flux(ev.gradients[m], gn, c, a, n, mu, lambda);
                        }
                        local[m * nc + c] += w * v;
                    }
                }
            }
            Ok((space.element_dofs(e).start, local))
        })
        .collect::<Result<_>>()?;
    for (offset, local) in chunks {
        for (k, v) in local.into_iter().enumerate() {
            out[offset + k] += v;
        }
    }
    let chunks: Vec<(usize, Vec<f64>)> = part
        .neumann
        .par_iter()
        .map(|&fid| -> Result<(usize, Vec<f64>)> {
            let face = &mesh.faces[fid];
            let e = face.plus;
            let p = space.degree(e);
            let rule = face_quadrature(mesh, face, 2 * p + 2)?;
            let nm = space.n_local_modes(e);
            let mut local = vec![0.0; nm * nc];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q];
                let h = traction(x);
                let vals = space.basis(e).values(x);
                for m in 0..nm {
                    for c in 0..nc {
                        local[m * nc + c] += w * vals[m] * h[c];
                    }
                }
            }
            Ok((space.element_dofs(e).start, local))
        })
        .collect::<Result<_>>()?;
    for (offset, local) in chunks {
        for (k, v) in local.into_iter().enumerate() {
            out[offset + k] += v;
        }
    }
    Ok(out)
}

/// Atrophy-displacement coupling: rows over the displacement space, columns
/// over the atrophy space,
/// `B[(i, j)] = (2 mu + d lambda) [ (q_j, div psi_i) - <{q_j I}, [[psi_i]]> ]`
/// with face terms over interior and Dirichlet faces of the displacement
/// field. The elasticity step applies it as `K_E U = F_E + B g`.
pub fn assemble_coupling(
    gspace: &DgSpace,
    vspace: &DgSpace,
    mu: f64,
    lambda: f64,
    part: &FacePartition,
) -> Result<CsrMatrix> {
    let mesh = &vspace.mesh;
    if !std::sync::Arc::ptr_eq(&gspace.mesh, &vspace.mesh) {
        return Err(Error::DimensionMismatch(
            "coupling requires both spaces on the same mesh".into(),
        ));
    }
    let dim = mesh.dim;
    let nc = vspace.components;
    let coef = 2.0 * mu + dim as f64 * lambda;
    let n_el = vspace.n_elements();

    let volume: Vec<Vec<f64>> = (0..n_el)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let order = gspace.degree(e) + vspace.degree(e) + 1;
            let rule = crate::fespace::element_quadrature(mesh, e, order)?;
            let nv = vspace.n_local_modes(e);
            let ng = gspace.n_local_modes(e);
            let ndv = nv * nc;
            let mut local = vec![0.0; ndv * ng];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * coef;
                let evv = vspace.eval_basis(e, x);
                let qv = gspace.basis(e).values(x);
                for mi in 0..nv {
                    for ci in 0..nc {
                        let row = mi * nc + ci;
                        let divv = evv.gradients[mi][ci];
                        for j in 0..ng {
                            local[row * ng + j] += w * qv[j] * divv;
                        }
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;

    type FaceBlocks = Vec<(usize, usize, Vec<f64>)>;
    let face_ids: Vec<usize> = part.form_faces().collect();
    let face_blocks: Vec<FaceBlocks> = face_ids
        .par_iter()
        .map(|&fid| -> Result<FaceBlocks> {
            let face = &mesh.faces[fid];
            let ep = face.plus;
            let order = gspace.degree(ep) + vspace.degree(ep) + 1;
            let rule = face_quadrature(mesh, face, order)?;
            let n = face.normal;
            let (sides, avg): (Vec<usize>, f64) = match face.minus() {
                Some(em) => (vec![ep, em], 0.5),
                None => (vec![ep], 1.0),
            };
            let signs = [1.0, -1.0];
            let mut blocks: FaceBlocks = Vec::new();
            for (si, &el_v) in sides.iter().enumerate() {
                let vv = side_trace(vspace, el_v, &rule.points);
                for &el_g in &sides {
                    let ng = gspace.n_local_modes(el_g);
                    let nv = vspace.n_local_modes(el_v);
                    let ndv = nv * nc;
                    let gv: Vec<Vec<f64>> = rule
                        .points
                        .iter()
                        .map(|&x| gspace.basis(el_g).values(x))
                        .collect();
                    let mut local = vec![0.0; ndv * ng];
                    for q in 0..rule.len() {
                        // {q I} : [[psi]] = avg * q * sigma_i * phi_i * n_ci.
                        let w = rule.weights[q] * coef * avg * signs[si];
                        for mi in 0..nv {
                            for ci in 0..nc {
                                let row = mi * nc + ci;
                                let t = w * vv.values[q][mi] * n[ci];
                                for j in 0..ng {
                                    local[row * ng + j] -= t * gv[q][j];
                                }
                            }
                        }
                    }
                    blocks.push((el_v, el_g, local));
                }
            }
            Ok(blocks)
        })
        .collect::<Result<_>>()?;

    let row_offsets = offsets_of(vspace);
    let col_offsets = offsets_of(gspace);
    let mut acc = BlockAccumulator::new(row_offsets, col_offsets);
    for (e, local) in volume.into_iter().enumerate() {
        acc.add_block(e, e, &local);
    }
    for blocks in face_blocks {
        for (er, ec, local) in blocks {
            acc.add_block(er, ec, &local);
        }
    }
    Ok(acc.into_csr())
}

/// Linear part of the logistic law: the weighted mass matrix
/// `M_beta = ((1/tau)(1 - 2/beta) q_j, q_i)` and the load
/// `F_g = ((1/tau)(1 - 1/beta), q_i)`, with `beta` sampled pointwise.
pub fn assemble_logistic(
    gspace: &DgSpace,
    beta: impl Fn(usize, Vec3) -> f64 + Sync,
    tau: f64,
) -> (CsrMatrix, Vec<f64>) {
    let m_beta = assemble_mass(gspace, |e, x| (1.0 - 2.0 / beta(e, x)) / tau);
    // The load needs the element index; inline the same loop as
    // volume_rhs_scalar with an element-aware integrand.
    let chunks: Vec<(usize, Vec<f64>)> = (0..gspace.n_elements())
        .into_par_iter()
        .map(|e| {
            let (rule, vals) = gspace.mass_quadrature(e);
            let n = gspace.n_local_modes(e);
            let mut local = vec![0.0; n];
            for (q, &x) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * (1.0 - 1.0 / beta(e, x)) / tau;
                for (m, lv) in local.iter_mut().enumerate() {
                    *lv += w * vals[q][m];
                }
            }
            (gspace.element_dofs(e).start, local)
        })
        .collect();
    let mut f_g = vec![0.0; gspace.n_dofs()];
    for (offset, local) in chunks {
        f_g[offset..offset + local.len()].copy_from_slice(&local);
    }
    (m_beta, f_g)
}

/// Nonlinear part of the logistic law: `M~_beta(g*) = ((g*/(tau beta)) q_j, q_i)`
/// with the extrapolated atrophy field sampled pointwise.
pub fn assemble_logistic_nonlinear(
    gspace: &DgSpace,
    g_star: &DgField,
    beta: impl Fn(usize, Vec3) -> f64 + Sync,
    tau: f64,
) -> CsrMatrix {
    assemble_mass(gspace, |e, x| {
        g_star.eval_scalar(e, x) / (tau * beta(e, x))
    })
}

/// One snapshot of every operator and load of the coupled system, assembled
/// for given extrapolated fields. The time stepper caches the stationary
/// pieces itself; this container mainly serves verification.
pub struct AssembledSystem {
    pub m_c: CsrMatrix,
    pub a_c: CsrMatrix,
    pub m_alpha: CsrMatrix,
    pub m_tilde_alpha: CsrMatrix,
    pub m_g: CsrMatrix,
    pub m_beta: CsrMatrix,
    pub m_tilde_beta: CsrMatrix,
    pub k_e: CsrMatrix,
    pub b_g: CsrMatrix,
    pub f_c: Vec<f64>,
    pub f_g: Vec<f64>,
    pub f_e: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_system(
    cspace: &DgSpace,
    gspace: &DgSpace,
    vspace: &DgSpace,
    params: &crate::physics::ModelParams,
    part_c: &FacePartition,
    part_u: &FacePartition,
    c_star: &DgField,
    g_star: &DgField,
) -> Result<AssembledSystem> {
    let pen = PenaltyParams {
        eta0: params.eta0,
        xi0: params.xi0,
    };
    let d = params.diffusion()?;
    let beta = |e: usize, x: Vec3| {
        crate::physics::beta_of_c(c_star.eval_scalar(e, x), params.gamma, params.c_cr)
    };
    let (m_beta, f_g) = assemble_logistic(gspace, beta, params.tau);
    let m_tilde_beta = assemble_logistic_nonlinear(gspace, g_star, beta, params.tau);
    Ok(AssembledSystem {
        m_c: assemble_mass(cspace, |_, _| 1.0),
        a_c: assemble_diffusion_sip(cspace, |_| d, params.alpha, part_c, &pen)?,
        m_alpha: assemble_mass(cspace, |_, _| params.alpha),
        m_tilde_alpha: assemble_mass(cspace, |e, x| params.alpha * c_star.eval_scalar(e, x)),
        m_g: assemble_mass(gspace, |_, _| 1.0),
        m_beta,
        m_tilde_beta,
        k_e: assemble_elasticity_sip(vspace, params.mu, params.lambda, part_u, &pen)?,
        b_g: assemble_coupling(gspace, vspace, params.mu, params.lambda, part_u)?,
        f_c: vec![0.0; cspace.n_dofs()],
        f_g,
        f_e: vec![0.0; vspace.n_dofs()],
    })
}
