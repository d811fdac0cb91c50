//! Discontinuous piecewise-polynomial spaces on polytopal meshes, with
//! elementwise quadrature, L2 projection, and point evaluation.

pub mod basis;
pub mod quadrature;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{Face, Mesh};
use basis::{BasisEval, ElementBasis};
use quadrature::{polygon_fan_rule, segment_rule, tetrahedron_rule, triangle_rule, QuadratureRule};

/// A discontinuous Galerkin space: an orthonormal modal basis per element,
/// `components` copies for vector-valued fields, and global dof offsets.
///
/// Vector dofs interleave components: local dof `mode * components + comp`
/// is the scalar mode times the `comp`-th unit vector.
#[derive(Debug)]
pub struct DgSpace {
    pub mesh: Arc<Mesh>,
    degrees: Vec<usize>,
    pub components: usize,
    offsets: Vec<usize>,
    bases: Vec<ElementBasis>,
    /// Default volume rule (order 2p + 2) with cached basis values, reused by
    /// weighted-mass assembly and projection.
    mass_quad: Vec<(QuadratureRule, Vec<Vec<f64>>)>,
}

impl DgSpace {
    pub fn n_dofs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn degree(&self, element: usize) -> usize {
        self.degrees[element]
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// Global dof range of one element.
    pub fn element_dofs(&self, element: usize) -> std::ops::Range<usize> {
        self.offsets[element]..self.offsets[element + 1]
    }

    pub fn n_local_modes(&self, element: usize) -> usize {
        self.bases[element].n_modes()
    }

    pub fn n_local_dofs(&self, element: usize) -> usize {
        self.n_local_modes(element) * self.components
    }

    pub fn basis(&self, element: usize) -> &ElementBasis {
        &self.bases[element]
    }

    /// Scalar basis values and gradients at a point of `element`.
    pub fn eval_basis(&self, element: usize, x: Vec3) -> BasisEval {
        self.bases[element].eval(x)
    }

    /// The cached default volume rule and basis values of one element.
    pub fn mass_quadrature(&self, element: usize) -> (&QuadratureRule, &Vec<Vec<f64>>) {
        let (rule, vals) = &self.mass_quad[element];
        (rule, vals)
    }
}

/// Build the DG space of uniform degree `p` (`p >= 1`).
pub fn create_space(mesh: Arc<Mesh>, p: usize, components: usize) -> Result<Arc<DgSpace>> {
    if p == 0 {
        return Err(Error::InvalidParameter(
            "degree 0 is not supported (the interior-penalty forms need gradients)".into(),
        ));
    }
    if components != 1 && components != mesh.dim {
        return Err(Error::InvalidParameter(format!(
            "components must be 1 or dim = {}, got {components}",
            mesh.dim
        )));
    }
    let n_el = mesh.n_elements();
    let degrees = vec![p; n_el];

    let built: Vec<(ElementBasis, (QuadratureRule, Vec<Vec<f64>>))> = (0..n_el)
        .into_par_iter()
        .map(|e| {
            let ortho_rule = element_quadrature(&mesh, e, 2 * p)?;
            let basis = ElementBasis::new(mesh.dim, p, mesh.elements[e].bbox, &ortho_rule, e)?;
            let mass_rule = element_quadrature(&mesh, e, 2 * p + 2)?;
            let vals = mass_rule
                .points
                .iter()
                .map(|&x| basis.values(x))
                .collect();
            Ok((basis, (mass_rule, vals)))
        })
        .collect::<Result<_>>()?;

    let mut bases = Vec::with_capacity(n_el);
    let mut mass_quad = Vec::with_capacity(n_el);
    for (b, q) in built {
        bases.push(b);
        mass_quad.push(q);
    }
    let mut offsets = Vec::with_capacity(n_el + 1);
    let mut acc = 0usize;
    for basis in &bases {
        offsets.push(acc);
        acc += basis.n_modes() * components;
    }
    offsets.push(acc);

    Ok(Arc::new(DgSpace {
        mesh,
        degrees,
        components,
        offsets,
        bases,
        mass_quad,
    }))
}

/// Quadrature over one element, exact for polynomials of degree `order`.
/// Simplices use collapsed Gauss rules; polygons fan from the centroid.
pub fn element_quadrature(mesh: &Mesh, element: usize, order: usize) -> Result<QuadratureRule> {
    let el = &mesh.elements[element];
    let pts = mesh.vertex_coords(&el.vertices);
    match (mesh.dim, pts.len()) {
        (2, 3) => triangle_rule(pts[0], pts[1], pts[2], order),
        (2, _) => polygon_fan_rule(&pts, el.centroid, order),
        (3, 4) => tetrahedron_rule(pts[0], pts[1], pts[2], pts[3], order),
        (d, n) => Err(Error::InvalidMesh(format!(
            "element {element}: unsupported cell ({n} vertices in {d}D)"
        ))),
    }
}

/// Quadrature over one face (segment in 2D, triangle in 3D).
pub fn face_quadrature(mesh: &Mesh, face: &Face, order: usize) -> Result<QuadratureRule> {
    let pts = mesh.vertex_coords(&face.vertices);
    match (mesh.dim, pts.len()) {
        (2, 2) => segment_rule(pts[0], pts[1], order),
        (3, 3) => triangle_rule(pts[0], pts[1], pts[2], order),
        (d, n) => Err(Error::InvalidMesh(format!(
            "unsupported face ({n} vertices in {d}D)"
        ))),
    }
}

/// A global coefficient vector bound to its space.
#[derive(Debug, Clone)]
pub struct DgField {
    pub space: Arc<DgSpace>,
    pub coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(space: Arc<DgSpace>) -> Self {
        let n = space.n_dofs();
        DgField {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(space: Arc<DgSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has {} entries, space has {} dofs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(DgField { space, coeffs })
    }

    /// Evaluate a scalar field at a point of `element`.
    pub fn eval_scalar(&self, element: usize, x: Vec3) -> f64 {
        debug_assert_eq!(self.space.components, 1);
        let vals = self.space.bases[element].values(x);
        let offset = self.space.offsets[element];
        vals.iter()
            .enumerate()
            .map(|(m, v)| self.coeffs[offset + m] * v)
            .sum()
    }

    /// Evaluate a vector field at a point of `element`.
    pub fn eval_vector(&self, element: usize, x: Vec3) -> Vec3 {
        let nc = self.space.components;
        let vals = self.space.bases[element].values(x);
        let offset = self.space.offsets[element];
        let mut out = [0.0; 3];
        for (m, v) in vals.iter().enumerate() {
            for c in 0..nc {
                out[c] += self.coeffs[offset + m * nc + c] * v;
            }
        }
        out
    }

    /// Scalar value from precomputed basis values (fast path in assembly).
    pub fn eval_scalar_with(&self, element: usize, basis_values: &[f64]) -> f64 {
        let offset = self.space.offsets[element];
        basis_values
            .iter()
            .enumerate()
            .map(|(m, v)| self.coeffs[offset + m] * v)
            .sum()
    }

    /// Mean value of a scalar field over one element.
    pub fn element_mean(&self, element: usize) -> f64 {
        let (rule, vals) = self.space.mass_quadrature(element);
        let mut acc = 0.0;
        for (q, w) in rule.weights.iter().enumerate() {
            acc += w * self.eval_scalar_with(element, &vals[q]);
        }
        acc / self.space.mesh.elements[element].measure
    }

    /// Per-element means of a scalar field.
    pub fn element_means(&self) -> Vec<f64> {
        (0..self.space.n_elements())
            .map(|e| self.element_mean(e))
            .collect()
    }

    /// Integral mean over the whole domain.
    pub fn domain_mean(&self) -> f64 {
        let mesh = &self.space.mesh;
        let mut acc = 0.0;
        for e in 0..self.space.n_elements() {
            acc += self.element_mean(e) * mesh.elements[e].measure;
        }
        acc / mesh.total_measure()
    }

    /// L2 norm of the field (componentwise for vectors).
    pub fn l2_norm(&self) -> f64 {
        // Orthonormal basis: the coefficient 2-norm is the L2 norm.
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Elementwise L2 projection of a scalar function.
pub fn l2_project(space: &Arc<DgSpace>, f: impl Fn(Vec3) -> f64 + Sync) -> DgField {
    let mut coeffs = vec![0.0; space.n_dofs()];
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
            (space.offsets[e], local)
        })
        .collect();
    for (offset, local) in chunks {
        coeffs[offset..offset + local.len()].copy_from_slice(&local);
    }
    DgField {
        space: space.clone(),
        coeffs,
    }
}

/// Elementwise L2 projection of a vector function.
pub fn l2_project_vector(space: &Arc<DgSpace>, f: impl Fn(Vec3) -> Vec3 + Sync) -> DgField {
    let nc = space.components;
    let mut coeffs = vec![0.0; space.n_dofs()];
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
            (space.offsets[e], local)
        })
        .collect();
    for (offset, local) in chunks {
        coeffs[offset..offset + local.len()].copy_from_slice(&local);
    }
    DgField {
        space: space.clone(),
        coeffs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured, DomainBox, ElemKind};

    fn unit_tri_mesh(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured(2, n, ElemKind::Tri, DomainBox::unit()).unwrap())
    }

    #[test]
    fn dof_counts() {
        let mesh = unit_tri_mesh(2);
        // 8 elements... use 4-element mesh from the quad grid instead.
        let quad = Arc::new(build_structured(2, 2, ElemKind::Quad, DomainBox::unit()).unwrap());
        let space = create_space(quad, 2, 1).unwrap();
        assert_eq!(space.n_dofs(), 4 * 6);
        let vspace = create_space(mesh, 1, 2).unwrap();
        assert_eq!(vspace.n_dofs(), 8 * 3 * 2);
        let tets = Arc::new(build_structured(3, 1, ElemKind::Tet, DomainBox::unit()).unwrap());
        let v3 = create_space(tets, 1, 3).unwrap();
        assert_eq!(v3.n_dofs(), 6 * 4 * 3);
    }

    #[test]
    fn degree_zero_rejected() {
        let mesh = unit_tri_mesh(1);
        assert!(create_space(mesh, 0, 1).is_err());
    }

    #[test]
    fn project_constant_hits_first_mode() {
        let mesh = unit_tri_mesh(2);
        let space = create_space(mesh, 2, 1).unwrap();
        let field = l2_project(&space, |_| 1.0);
        for e in 0..space.n_elements() {
            let dofs = space.element_dofs(e);
            let k = space.mesh.elements[e].measure.sqrt();
            assert!((field.coeffs[dofs.start] - k).abs() < 1e-12);
            for d in dofs.start + 1..dofs.end {
                assert!(field.coeffs[d].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_reproduces_polynomials() {
        let mesh = unit_tri_mesh(2);
        let space = create_space(mesh, 3, 1).unwrap();
        let f = |x: Vec3| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1] * x[1] + x[0].powi(3);
        let field = l2_project(&space, f);
        for e in 0..space.n_elements() {
            let c = space.mesh.elements[e].centroid;
            for probe in [c, [c[0] * 0.9, c[1] * 1.05, 0.0]] {
                assert!((field.eval_scalar(e, probe) - f(probe)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_idempotent() {
        let mesh = unit_tri_mesh(2);
        let space = create_space(mesh, 2, 1).unwrap();
        let field = l2_project(&space, |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos());
        // Re-project the evaluated field elementwise: coefficients must be
        // unchanged.
        for e in 0..space.n_elements() {
            let (rule, vals) = space.mass_quadrature(e);
            let n = space.n_local_modes(e);
            let offset = space.element_dofs(e).start;
            for m in 0..n {
                let mut c = 0.0;
                for (q, &x) in rule.points.iter().enumerate() {
                    c += rule.weights[q] * field.eval_scalar(e, x) * vals[q][m];
                }
                assert!((c - field.coeffs[offset + m]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_order_sweep() {
        // L2 error of projecting cos(pi x)cos(pi y) at p = 3 decays ~ h^4.
        let f = |x: Vec3| (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos();
        let mut errors = Vec::new();
        for n in [2usize, 4, 8] {
            let mesh = unit_tri_mesh(n);
            let space = create_space(mesh.clone(), 3, 1).unwrap();
            let field = l2_project(&space, f);
            let mut err2 = 0.0;
            for e in 0..space.n_elements() {
                let rule = element_quadrature(&mesh, e, 12).unwrap();
                for (q, &x) in rule.points.iter().enumerate() {
                    let d = field.eval_scalar(e, x) - f(x);
                    err2 += rule.weights[q] * d * d;
                }
            }
            errors.push(err2.sqrt());
        }
        let rate1 = (errors[0] / errors[1]).log2();
        let rate2 = (errors[1] / errors[2]).log2();
        assert!(rate1 > 3.5 && rate2 > 3.5, "rates {rate1} {rate2}");
    }

    #[test]
    fn vector_projection_and_eval() {
        let mesh = unit_tri_mesh(2);
        let space = create_space(mesh, 2, 2).unwrap();
        let f = |x: Vec3| [x[0] + x[1], x[0] * x[1], 0.0];
        let field = l2_project_vector(&space, f);
        let x = [0.3, 0.7, 0.0];
        // element containing x: find by centroid distance (fine for probes)
        let e = (0..space.n_elements())
            .min_by(|&a, &b| {
                let da = crate::geometry::dist(space.mesh.elements[a].centroid, x);
                let db = crate::geometry::dist(space.mesh.elements[b].centroid, x);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let v = field.eval_vector(e, x);
        let exact = f(x);
        assert!((v[0] - exact[0]).abs() < 1e-10);
        assert!((v[1] - exact[1]).abs() < 1e-10);
    }

    #[test]
    fn face_rule_weights_sum_to_measure() {
        let mesh = Arc::new(build_structured(3, 1, ElemKind::Tet, DomainBox::unit()).unwrap());
        for face in &mesh.faces {
            let rule = face_quadrature(&mesh, face, 4).unwrap();
            assert!((rule.total_weight() - face.measure).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_on_polygons_and_tets() {
        // Agglomerated polygons.
        let fine = build_structured(2, 4, ElemKind::Quad, DomainBox::unit()).unwrap();
        let poly = Arc::new(crate::mesh::agglomerate(&fine, 2).unwrap());
        for p in 1..=4 {
            let space = create_space(poly.clone(), p, 1).unwrap();
            check_gram(&space, 2 * p + 6);
        }
        // Tetrahedra.
        let tets = Arc::new(build_structured(3, 1, ElemKind::Tet, DomainBox::unit()).unwrap());
        for p in 1..=4 {
            let space = create_space(tets.clone(), p, 1).unwrap();
            check_gram(&space, 2 * p + 4);
        }
    }

    fn check_gram(space: &Arc<DgSpace>, order: usize) {
        for e in 0..space.n_elements() {
            let rule = element_quadrature(&space.mesh, e, order).unwrap();
            let n = space.n_local_modes(e);
            let mut gram = vec![vec![0.0; n]; n];
            for (q, &x) in rule.points.iter().enumerate() {
                let v = space.eval_basis(e, x).values;
                for i in 0..n {
                    for j in 0..n {
                        gram[i][j] += rule.weights[q] * v[i] * v[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (gram[i][j] - expect).abs() < 1e-10,
                        "element {e}: gram[{i}][{j}] = {}",
                        gram[i][j]
                    );
                }
            }
        }
    }
}
