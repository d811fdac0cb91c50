//! Generated meshes: structured grids on boxes, annuli, and agglomerated
//! quad grids.

use super::{Mesh, QuadGrid};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Axis-aligned box; the z extent is ignored for 2D meshes.
#[derive(Debug, Clone, Copy)]
pub struct DomainBox {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl DomainBox {
    pub fn unit() -> Self {
        DomainBox {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        DomainBox { lo, hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemKind {
    Tri,
    Quad,
    Tet,
}

/// Build a conforming structured mesh of `cells` cells per axis on `domain`.
///
/// Quad cells become 4-gon polygons, triangle cells split each quad along
/// one diagonal, and tetrahedra use the 6-tet Kuhn split of each cube (all
/// six tets share the cube's main diagonal, so neighbouring cubes induce
/// matching facet triangulations).
pub fn build_structured(
    dim: usize,
    cells: usize,
    kind: ElemKind,
    domain: DomainBox,
) -> Result<Mesh> {
    if cells < 1 {
        return Err(Error::InvalidParameter(
            "cells_per_axis must be at least 1".into(),
        ));
    }
    match (dim, kind) {
        (2, ElemKind::Tri) | (2, ElemKind::Quad) => build_2d(cells, kind, domain),
        (3, ElemKind::Tet) => build_tets(cells, domain),
        (2, ElemKind::Tet) => Err(Error::InvalidParameter(
            "tetrahedra require dim = 3".into(),
        )),
        (3, _) => Err(Error::InvalidParameter(
            "3D structured meshes support only tetrahedra".into(),
        )),
        (d, _) => Err(Error::InvalidParameter(format!(
            "dimension must be 2 or 3, got {d}"
        ))),
    }
}

fn boundary_tag_2d(mid: Vec3, lo: Vec3, hi: Vec3) -> Option<String> {
    let tol = 1e-12 * (hi[0] - lo[0]).abs().max(hi[1] - lo[1]).max(1.0);
    if (mid[0] - lo[0]).abs() < tol {
        Some("left".into())
    } else if (mid[0] - hi[0]).abs() < tol {
        Some("right".into())
    } else if (mid[1] - lo[1]).abs() < tol {
        Some("bottom".into())
    } else if (mid[1] - hi[1]).abs() < tol {
        Some("top".into())
    } else {
        None
    }
}

fn boundary_tag_3d(mid: Vec3, lo: Vec3, hi: Vec3) -> Option<String> {
    let tol = 1e-12
        * (hi[0] - lo[0])
            .abs()
            .max(hi[1] - lo[1])
            .max(hi[2] - lo[2])
            .max(1.0);
    if (mid[0] - lo[0]).abs() < tol {
        Some("left".into())
    } else if (mid[0] - hi[0]).abs() < tol {
        Some("right".into())
    } else if (mid[1] - lo[1]).abs() < tol {
        Some("bottom".into())
    } else if (mid[1] - hi[1]).abs() < tol {
        Some("top".into())
    } else if (mid[2] - lo[2]).abs() < tol {
        Some("back".into())
    } else if (mid[2] - hi[2]).abs() < tol {
        Some("front".into())
    } else {
        None
    }
}

fn build_2d(n: usize, kind: ElemKind, domain: DomainBox) -> Result<Mesh> {
    let (lo, hi) = (domain.lo, domain.hi);
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::InvalidParameter("empty domain box".into()));
    }
    let nv = n + 1;
    let mut vertices = Vec::with_capacity(nv * nv);
    for j in 0..nv {
        for i in 0..nv {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
            vertices.push([x, y, 0.0]);
        }
    }
    let vid = |i: usize, j: usize| j * nv + i;
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v11 = vid(i + 1, j + 1);
            let v01 = vid(i, j + 1);
            match kind {
                ElemKind::Quad => cells.push(vec![v00, v10, v11, v01]),
                ElemKind::Tri => {
                    cells.push(vec![v00, v10, v11]);
                    cells.push(vec![v00, v11, v01]);
                }
                ElemKind::Tet => unreachable!(),
            }
        }
    }
    let grid = (kind == ElemKind::Quad).then_some(QuadGrid {
        cells_per_axis: n,
        lo,
        hi,
    });
    Mesh::from_polygons_with_grid(vertices, cells, |_, mid| boundary_tag_2d(mid, lo, hi), grid)
}

fn build_tets(n: usize, domain: DomainBox) -> Result<Mesh> {
    let (lo, hi) = (domain.lo, domain.hi);
    if !(hi[0] > lo[0] && hi[1] > lo[1] && hi[2] > lo[2]) {
        return Err(Error::InvalidParameter("empty domain box".into()));
    }
    let nv = n + 1;
    let mut vertices = Vec::with_capacity(nv * nv * nv);
    for k in 0..nv {
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([
                    lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                    lo[2] + (hi[2] - lo[2]) * k as f64 / n as f64,
                ]);
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| (k * nv + j) * nv + i;
    // Kuhn split: one tet per permutation of the axis order, walking from the
    // low corner to the high corner of the cube.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in &PERMS {
                    let mut idx = [i, j, k];
                    let mut tet = [vid(idx[0], idx[1], idx[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        idx[axis] += 1;
                        tet[step + 1] = vid(idx[0], idx[1], idx[2]);
                    }
                    cells.push(tet);
                }
            }
        }
    }
    Mesh::from_tetrahedra(vertices, cells, |_, mid| boundary_tag_3d(mid, lo, hi))
}

/// Quad mesh of the annulus `r_in <= |x| <= r_out` with vertices on the two
/// circles. Inner boundary faces are tagged `inner`, outer ones `outer`.
pub fn build_annulus(r_in: f64, r_out: f64, n_radial: usize, n_angular: usize) -> Result<Mesh> {
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < r_in < r_out, got r_in = {r_in}, r_out = {r_out}"
        )));
    }
    if n_radial < 1 || n_angular < 3 {
        return Err(Error::InvalidParameter(
            "need n_radial >= 1 and n_angular >= 3".into(),
        ));
    }
    let mut vertices = Vec::with_capacity((n_radial + 1) * n_angular);
    for ir in 0..=n_radial {
        let r = r_in + (r_out - r_in) * ir as f64 / n_radial as f64;
        for ia in 0..n_angular {
            let t = 2.0 * std::f64::consts::PI * ia as f64 / n_angular as f64;
            vertices.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let vid = |ir: usize, ia: usize| ir * n_angular + (ia % n_angular);
    let mut cells = Vec::with_capacity(n_radial * n_angular);
    for ir in 0..n_radial {
        for ia in 0..n_angular {
            cells.push(vec![
                vid(ir, ia),
                vid(ir + 1, ia),
                vid(ir + 1, ia + 1),
                vid(ir, ia + 1),
            ]);
        }
    }
    let r_mid = 0.5 * (r_in + r_out);
    Mesh::from_polygons(vertices, cells, |_, mid| {
        let r = (mid[0] * mid[0] + mid[1] * mid[1]).sqrt();
        Some(if r < r_mid { "inner".into() } else { "outer".into() })
    })
}

/// Merge `group_edge x group_edge` blocks of a structured quad mesh into
/// polygonal elements. Interior faces of each block disappear; the remaining
/// faces are the original fine edges, so the boundary face set is preserved.
pub fn agglomerate(mesh: &Mesh, group_edge: usize) -> Result<Mesh> {
    let grid = mesh.quad_grid.clone().ok_or_else(|| {
        Error::InvalidParameter("agglomerate requires a structured quad mesh".into())
    })?;
    let n = grid.cells_per_axis;
    if group_edge == 0 || n % group_edge != 0 {
        return Err(Error::InvalidParameter(format!(
            "group_edge {group_edge} does not divide cells_per_axis {n}"
        )));
    }
    let g = n / group_edge;
    let nv = n + 1;
    let vid = |i: usize, j: usize| j * nv + i;
    let mut cells = Vec::with_capacity(g * g);
    for gj in 0..g {
        for gi in 0..g {
            // Walk the perimeter of the block counter-clockwise, emitting
            // every fine vertex so block interfaces stay conforming.
            let (i0, j0) = (gi * group_edge, gj * group_edge);
            let (i1, j1) = (i0 + group_edge, j0 + group_edge);
            let mut loop_ids = Vec::with_capacity(4 * group_edge);
            for i in i0..i1 {
                loop_ids.push(vid(i, j0));
            }
            for j in j0..j1 {
                loop_ids.push(vid(i1, j));
            }
            for i in (i0 + 1..=i1).rev() {
                loop_ids.push(vid(i, j1));
            }
            for j in (j0 + 1..=j1).rev() {
                loop_ids.push(vid(i0, j));
            }
            cells.push(loop_ids);
        }
    }
    let (lo, hi) = (grid.lo, grid.hi);
    Mesh::from_polygons_with_grid(
        mesh.vertices.clone(),
        cells,
        |_, mid| boundary_tag_2d(mid, lo, hi),
        (group_edge == 1).then_some(grid.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{add, norm, scale, sub};

    #[test]
    fn rejects_bad_dimension() {
        assert!(build_structured(4, 2, ElemKind::Quad, DomainBox::unit()).is_err());
        assert!(build_structured(2, 2, ElemKind::Tet, DomainBox::unit()).is_err());
        assert!(build_structured(3, 2, ElemKind::Quad, DomainBox::unit()).is_err());
        assert!(build_structured(2, 0, ElemKind::Quad, DomainBox::unit()).is_err());
    }

    #[test]
    fn annulus_measure_matches_chord_polygon_area() {
        let (r_in, r_out, na) = (0.05, 0.1, 16usize);
        let mesh = build_annulus(r_in, r_out, 4, na).unwrap();
        assert_eq!(mesh.n_elements(), 64);
        // Chord polygon area between the two circles.
        let dt = 2.0 * std::f64::consts::PI / na as f64;
        let poly_area = 0.5 * (r_out * r_out - r_in * r_in) * na as f64 * dt.sin();
        assert!((mesh.total_measure() - poly_area).abs() < 1e-12);
        // Polygonal approximation of the circular annulus.
        let exact = std::f64::consts::PI * (r_out * r_out - r_in * r_in);
        assert!((mesh.total_measure() - exact).abs() / exact < 0.03);
    }

    #[test]
    fn annulus_coarsest_and_errors() {
        assert!(build_annulus(0.05, 0.1, 1, 4).is_ok());
        assert!(build_annulus(0.1, 0.05, 4, 16).is_err());
        assert!(build_annulus(0.0, 0.1, 4, 16).is_err());
    }

    #[test]
    fn agglomerate_4x4_by_2() {
        let fine = build_structured(2, 4, ElemKind::Quad, DomainBox::unit()).unwrap();
        let coarse = agglomerate(&fine, 2).unwrap();
        assert_eq!(coarse.n_elements(), 4);
        for el in &coarse.elements {
            assert_eq!(el.vertices.len(), 8);
        }
        assert!((coarse.total_measure() - fine.total_measure()).abs() < 1e-12);
        // Boundary face set preserved: same number of boundary edges.
        assert_eq!(
            coarse.boundary_faces().count(),
            fine.boundary_faces().count()
        );
    }

    #[test]
    fn agglomerate_identity_and_full_merge() {
        let fine = build_structured(2, 2, ElemKind::Quad, DomainBox::unit()).unwrap();
        let same = agglomerate(&fine, 1).unwrap();
        assert_eq!(same.n_elements(), fine.n_elements());
        assert_eq!(same.n_faces(), fine.n_faces());
        let one = agglomerate(&fine, 2).unwrap();
        assert_eq!(one.n_elements(), 1);
        assert!((one.total_measure() - 1.0).abs() < 1e-12);
        assert!(agglomerate(&fine, 3).is_err());
    }

    #[test]
    fn element_face_normals_close() {
        // Closed-surface identity, checked explicitly on an agglomerated mesh.
        let fine = build_structured(2, 4, ElemKind::Quad, DomainBox::unit()).unwrap();
        let mesh = agglomerate(&fine, 2).unwrap();
        let mut sums = vec![[0.0f64; 3]; mesh.n_elements()];
        for face in &mesh.faces {
            let c = scale(face.normal, face.measure);
            sums[face.plus] = add(sums[face.plus], c);
            if let Some(m) = face.minus() {
                sums[m] = sub(sums[m], c);
            }
        }
        for s in sums {
            assert!(norm(s) < 1e-12);
        }
    }
}
