//! Polytopal meshes: 2D polygonal and 3D tetrahedral cells with a shared
//! face list carrying one stored normal per face (oriented plus -> minus,
//! or outward on the boundary).

mod gmsh;
mod structured;

pub use gmsh::import_gmsh;
pub use structured::{agglomerate, build_annulus, build_structured, DomainBox, ElemKind};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fespace::quadrature::{tet_volume6, triangle_area2};
use crate::geometry::{add, cross, dist, dot, norm, scale, sub, Vec3};

/// One mesh cell. 2D cells list their vertices counter-clockwise around the
/// polygon; 3D cells are positively oriented tetrahedra.
#[derive(Debug, Clone)]
pub struct Element {
    pub vertices: Vec<usize>,
    pub measure: f64,
    pub diameter: f64,
    pub centroid: Vec3,
    pub bbox: (Vec3, Vec3),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaceKind {
    Interior { minus: usize },
    Boundary { tag: Option<String> },
}

/// A (d-1)-dimensional interface: a segment in 2D, a triangle in 3D.
#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: Vec<usize>,
    /// Unit normal pointing from the plus element into the minus element
    /// (outward on boundary faces).
    pub normal: Vec3,
    pub measure: f64,
    pub centroid: Vec3,
    pub plus: usize,
    pub kind: FaceKind,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, FaceKind::Boundary { .. })
    }

    pub fn minus(&self) -> Option<usize> {
        match self.kind {
            FaceKind::Interior { minus } => Some(minus),
            FaceKind::Boundary { .. } => None,
        }
    }

    pub fn tag(&self) -> Option<&str> {
        match &self.kind {
            FaceKind::Boundary { tag } => tag.as_deref(),
            FaceKind::Interior { .. } => None,
        }
    }
}

/// Structured-quad provenance, kept so agglomeration can regroup cells.
#[derive(Debug, Clone)]
pub(crate) struct QuadGrid {
    pub cells_per_axis: usize,
    pub lo: Vec3,
    pub hi: Vec3,
}

#[derive(Debug)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<Vec3>,
    pub elements: Vec<Element>,
    pub faces: Vec<Face>,
    pub(crate) quad_grid: Option<QuadGrid>,
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Largest element diameter.
    pub fn h_max(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| e.diameter)
            .fold(0.0, f64::max)
    }

    pub fn total_measure(&self) -> f64 {
        self.elements.iter().map(|e| e.measure).sum()
    }

    pub fn vertex_coords(&self, ids: &[usize]) -> Vec<Vec3> {
        ids.iter().map(|&i| self.vertices[i]).collect()
    }

    /// Faces of the boundary, by id.
    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| self.faces[f].is_boundary())
    }

    /// Face ids incident to each element, in face-id order.
    pub fn element_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.elements.len()];
        for (fid, face) in self.faces.iter().enumerate() {
            out[face.plus].push(fid);
            if let Some(minus) = face.minus() {
                out[minus].push(fid);
            }
        }
        out
    }

    /// Build a 2D polygonal mesh from cells given as CCW vertex loops.
    /// Faces, measures, and normals are derived; boundary faces are tagged
    /// through `tag_of` applied to the face midpoint and vertex ids.
    pub fn from_polygons(
        vertices: Vec<Vec3>,
        cells: Vec<Vec<usize>>,
        tag_of: impl Fn(&[usize], Vec3) -> Option<String>,
    ) -> Result<Mesh> {
        Self::from_polygons_with_grid(vertices, cells, tag_of, None)
    }

    pub(crate) fn from_polygons_with_grid(
        vertices: Vec<Vec3>,
        cells: Vec<Vec<usize>>,
        tag_of: impl Fn(&[usize], Vec3) -> Option<String>,
        quad_grid: Option<QuadGrid>,
    ) -> Result<Mesh> {
        let mut elements = Vec::with_capacity(cells.len());
        for (e, cell) in cells.iter().enumerate() {
            if cell.len() < 3 {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has fewer than 3 vertices"
                )));
            }
            elements.push(polygon_element(&vertices, cell, e)?);
        }

        // Edge key -> (first element, optional second element).
        let mut edge_map: BTreeMap<(usize, usize), (usize, Option<usize>)> = BTreeMap::new();
        for (e, cell) in cells.iter().enumerate() {
            for i in 0..cell.len() {
                let a = cell[i];
                let b = cell[(i + 1) % cell.len()];
                let key = (a.min(b), a.max(b));
                match edge_map.get_mut(&key) {
                    None => {
                        edge_map.insert(key, (e, None));
                    }
                    Some((_, second @ None)) => *second = Some(e),
                    Some(_) => {
                        return Err(Error::InvalidMesh(format!(
                            "edge {key:?} shared by more than two elements"
                        )));
                    }
                }
            }
        }

        let mut faces = Vec::with_capacity(edge_map.len());
        for (&(a, b), &(plus, minus)) in &edge_map {
            let pa = vertices[a];
            let pb = vertices[b];
            let centroid = scale(add(pa, pb), 0.5);
            let measure = dist(pa, pb);
            if measure <= 0.0 {
                return Err(Error::InvalidMesh(format!("zero-length edge {a}-{b}")));
            }
            let t = sub(pb, pa);
            let mut normal = [t[1] / measure, -t[0] / measure, 0.0];
            // Orient out of the plus element.
            if dot(normal, sub(centroid, elements[plus].centroid)) < 0.0 {
                normal = scale(normal, -1.0);
            }
            let kind = match minus {
                Some(minus) => FaceKind::Interior { minus },
                None => FaceKind::Boundary {
                    tag: tag_of(&[a, b], centroid),
                },
            };
            faces.push(Face {
                vertices: vec![a, b],
                normal,
                measure,
                centroid,
                plus,
                kind,
            });
        }

        let mesh = Mesh {
            dim: 2,
            vertices,
            elements,
            faces,
            quad_grid,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Build a 3D tetrahedral mesh. Cells with negative orientation are
    /// silently reordered.
    pub fn from_tetrahedra(
        vertices: Vec<Vec3>,
        cells: Vec<[usize; 4]>,
        tag_of: impl Fn(&[usize], Vec3) -> Option<String>,
    ) -> Result<Mesh> {
        let mut elements = Vec::with_capacity(cells.len());
        let mut oriented = Vec::with_capacity(cells.len());
        for (e, cell) in cells.iter().enumerate() {
            let mut cell = *cell;
            let pts: Vec<Vec3> = cell.iter().map(|&i| vertices[i]).collect();
            let vol6 = tet_volume6(pts[0], pts[1], pts[2], pts[3]);
            if vol6 == 0.0 {
                return Err(Error::InvalidMesh(format!("element {e} is degenerate")));
            }
            if vol6 < 0.0 {
                cell.swap(2, 3);
            }
            let pts: Vec<Vec3> = cell.iter().map(|&i| vertices[i]).collect();
            let measure = tet_volume6(pts[0], pts[1], pts[2], pts[3]) / 6.0;
            let centroid = scale(
                add(add(pts[0], pts[1]), add(pts[2], pts[3])),
                0.25,
            );
            let mut diameter = 0.0f64;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    diameter = diameter.max(dist(pts[i], pts[j]));
                }
            }
            elements.push(Element {
                vertices: cell.to_vec(),
                measure,
                diameter,
                centroid,
                bbox: bbox_of(&pts),
            });
            oriented.push(cell);
        }

        // The four facets of tet (a,b,c,d), each ordered outward.
        const FACETS: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
        let mut face_map: BTreeMap<[usize; 3], (usize, [usize; 3], Option<usize>)> =
            BTreeMap::new();
        for (e, cell) in oriented.iter().enumerate() {
            for facet in &FACETS {
                let tri = [cell[facet[0]], cell[facet[1]], cell[facet[2]]];
                let mut key = tri;
                key.sort_unstable();
                match face_map.get_mut(&key) {
                    None => {
                        face_map.insert(key, (e, tri, None));
                    }
                    Some((_, _, second @ None)) => *second = Some(e),
                    Some(_) => {
                        return Err(Error::InvalidMesh(format!(
                            "facet {key:?} shared by more than two elements"
                        )));
                    }
                }
            }
        }

        let mut faces = Vec::with_capacity(face_map.len());
        for (_, &(plus, tri, minus)) in &face_map {
            let pts: Vec<Vec3> = tri.iter().map(|&i| vertices[i]).collect();
            let measure = 0.5 * triangle_area2(pts[0], pts[1], pts[2]);
            if measure <= 0.0 {
                return Err(Error::InvalidMesh(format!("degenerate facet {tri:?}")));
            }
            let centroid = scale(add(add(pts[0], pts[1]), pts[2]), 1.0 / 3.0);
            let mut normal = cross(sub(pts[1], pts[0]), sub(pts[2], pts[0]));
            normal = scale(normal, 1.0 / norm(normal));
            if dot(normal, sub(centroid, elements[plus].centroid)) < 0.0 {
                normal = scale(normal, -1.0);
            }
            let kind = match minus {
                Some(minus) => FaceKind::Interior { minus },
                None => FaceKind::Boundary {
                    tag: tag_of(&tri, centroid),
                },
            };
            faces.push(Face {
                vertices: tri.to_vec(),
                normal,
                measure,
                centroid,
                plus,
                kind,
            });
        }

        let mesh = Mesh {
            dim: 3,
            vertices,
            elements,
            faces,
            quad_grid: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Structural sanity checks run after construction.
    fn validate(&self) -> Result<()> {
        for (e, el) in self.elements.iter().enumerate() {
            if !(el.measure > 0.0) || !(el.diameter > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "element {e}: measure {} diameter {}",
                    el.measure, el.diameter
                )));
            }
        }
        for (f, face) in self.faces.iter().enumerate() {
            let n = norm(face.normal);
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMesh(format!(
                    "face {f}: normal not unit (|n| = {n})"
                )));
            }
        }
        // Closed-surface identity: sum of measure-weighted outward normals
        // vanishes per element.
        let mut sums = vec![[0.0f64; 3]; self.elements.len()];
        for face in &self.faces {
            let contrib = scale(face.normal, face.measure);
            sums[face.plus] = add(sums[face.plus], contrib);
            if let Some(minus) = face.minus() {
                sums[minus] = sub(sums[minus], contrib);
            }
        }
        for (e, s) in sums.iter().enumerate() {
            let scale_ref = self.elements[e].measure.max(1.0);
            if norm(*s) > 1e-10 * scale_ref.max(self.elements[e].diameter) {
                return Err(Error::InvalidMesh(format!(
                    "element {e}: boundary normals do not close (|sum| = {})",
                    norm(*s)
                )));
            }
        }
        Ok(())
    }
}

fn bbox_of(pts: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

/// Compute the geometric caches of a 2D polygon and verify it is star-shaped
/// with respect to its area centroid (all fan triangles positively oriented).
fn polygon_element(vertices: &[Vec3], cell: &[usize], index: usize) -> Result<Element> {
    let pts: Vec<Vec3> = cell.iter().map(|&i| vertices[i]).collect();
    let n = pts.len();
    // Shoelace area and area centroid.
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let w = p[0] * q[1] - q[0] * p[1];
        area2 += w;
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    if area2 <= 0.0 {
        return Err(Error::InvalidMesh(format!(
            "element {index}: vertices not counter-clockwise (signed area {})",
            area2 / 2.0
        )));
    }
    let measure = area2 / 2.0;
    let centroid = [cx / (3.0 * area2), cy / (3.0 * area2), 0.0];
    // Star-shapedness w.r.t. the centroid.
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let signed =
            (p[0] - centroid[0]) * (q[1] - centroid[1]) - (q[0] - centroid[0]) * (p[1] - centroid[1]);
        if signed <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "element {index} is not star-shaped with respect to its centroid"
            )));
        }
    }
    let mut diameter = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            diameter = diameter.max(dist(pts[i], pts[j]));
        }
    }
    Ok(Element {
        vertices: cell.to_vec(),
        measure,
        diameter,
        centroid,
        bbox: bbox_of(&pts),
    })
}

/// Dirichlet/Neumann assignment for one field's boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Maps boundary tags to boundary-condition kinds. The special tag `"all"`
/// acts as a catch-all for tags without an explicit entry.
#[derive(Debug, Clone, Default)]
pub struct BoundarySpec {
    map: BTreeMap<String, BcKind>,
}

impl BoundarySpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: &str, kind: BcKind) -> Self {
        self.map.insert(tag.to_string(), kind);
        self
    }

    pub fn all(kind: BcKind) -> Self {
        Self::new().with("all", kind)
    }

    pub fn lookup(&self, tag: Option<&str>) -> Option<BcKind> {
        tag.and_then(|t| self.map.get(t).copied())
            .or_else(|| self.map.get("all").copied())
    }
}

/// Disjoint split of the face set for one field: interior faces, Dirichlet
/// boundary faces, Neumann boundary faces.
#[derive(Debug, Clone)]
pub struct FacePartition {
    pub interior: Vec<usize>,
    pub dirichlet: Vec<usize>,
    pub neumann: Vec<usize>,
}

impl FacePartition {
    /// Faces the interior-penalty forms integrate over.
    pub fn form_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.interior.iter().chain(self.dirichlet.iter()).copied()
    }
}

/// Classify every face of the mesh for one field. Fails on boundary faces
/// whose tag the spec does not cover.
pub fn classify_faces(mesh: &Mesh, spec: &BoundarySpec) -> Result<FacePartition> {
    let mut part = FacePartition {
        interior: Vec::new(),
        dirichlet: Vec::new(),
        neumann: Vec::new(),
    };
    for (fid, face) in mesh.faces.iter().enumerate() {
        match &face.kind {
            FaceKind::Interior { .. } => part.interior.push(fid),
            FaceKind::Boundary { tag } => match spec.lookup(tag.as_deref()) {
                Some(BcKind::Dirichlet) => part.dirichlet.push(fid),
                Some(BcKind::Neumann) => part.neumann.push(fid),
                None => {
                    return Err(Error::UnmatchedBoundary {
                        face: fid,
                        tag: tag.clone(),
                    })
                }
            },
        }
    }
    Ok(part)
}
