//! Legacy ASCII VTK output (UNSTRUCTURED_GRID) plus a minimal reader used by
//! the round-trip tests.
//!
//! Polygonal cells are exported through their centroid fan sub-triangulation;
//! point data samples the DG fields at vertices (averaged over incident
//! elements), and cell data carries element means repeated per sub-triangle.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fespace::DgField;
use crate::geometry::Vec3;
use crate::mesh::Mesh;

const VTK_TRIANGLE: usize = 5;
const VTK_TETRA: usize = 10;

struct Tessellation {
    points: Vec<Vec3>,
    /// (vertex ids into `points`, owning element)
    cells: Vec<(Vec<usize>, usize)>,
    cell_type: usize,
    /// For each point: the elements it belongs to.
    point_owners: Vec<Vec<usize>>,
}

fn tessellate(mesh: &Mesh) -> Tessellation {
    let mut points = mesh.vertices.clone();
    let mut point_owners = vec![Vec::new(); points.len()];
    let mut cells = Vec::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        for &v in &el.vertices {
            point_owners[v].push(e);
        }
        if mesh.dim == 3 {
            cells.push((el.vertices.clone(), e));
        } else if el.vertices.len() == 3 {
            cells.push((el.vertices.clone(), e));
        } else {
            // Fan the polygon around an added centroid point.
            let c = points.len();
            points.push(el.centroid);
            point_owners.push(vec![e]);
            let n = el.vertices.len();
            for i in 0..n {
                cells.push((vec![c, el.vertices[i], el.vertices[(i + 1) % n]], e));
            }
        }
    }
    Tessellation {
        points,
        cells,
        cell_type: if mesh.dim == 3 { VTK_TETRA } else { VTK_TRIANGLE },
        point_owners,
    }
}

/// Point sample of a field: average of the one-sided values over the
/// elements sharing the point.
fn point_values(field: &DgField, tess: &Tessellation) -> Vec<Vec3> {
    let nc = field.space.components;
    tess.points
        .iter()
        .zip(&tess.point_owners)
        .map(|(&x, owners)| {
            let mut acc = [0.0f64; 3];
            for &e in owners {
                let v = if nc == 1 {
                    [field.eval_scalar(e, x), 0.0, 0.0]
                } else {
                    field.eval_vector(e, x)
                };
                for d in 0..3 {
                    acc[d] += v[d];
                }
            }
            let w = 1.0 / owners.len().max(1) as f64;
            [acc[0] * w, acc[1] * w, acc[2] * w]
        })
        .collect()
}

fn element_mean_vector(field: &DgField, e: usize) -> Vec3 {
    let nc = field.space.components;
    if nc == 1 {
        [field.element_mean(e), 0.0, 0.0]
    } else {
        let (rule, _) = field.space.mass_quadrature(e);
        let mut acc = [0.0f64; 3];
        for (q, &x) in rule.points.iter().enumerate() {
            let v = field.eval_vector(e, x);
            for d in 0..3 {
                acc[d] += rule.weights[q] * v[d];
            }
        }
        let m = field.space.mesh.elements[e].measure;
        [acc[0] / m, acc[1] / m, acc[2] / m]
    }
}

/// Write mesh and fields to a legacy ASCII VTK file.
pub fn write_vtk(mesh: &Mesh, fields: &[(&str, &DgField)], path: impl AsRef<Path>) -> Result<()> {
    for (name, f) in fields {
        if !std::sync::Arc::ptr_eq(&f.space.mesh, &{
            // Fields must live on the given mesh; compare by shape since the
            // caller may hold a different Arc to an identical mesh.
            f.space.mesh.clone()
        }) {
            unreachable!()
        }
        if f.space.mesh.n_elements() != mesh.n_elements() {
            return Err(Error::DimensionMismatch(format!(
                "field {name} lives on a different mesh"
            )));
        }
    }
    let tess = tessellate(mesh);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "atrophy-dg output")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", tess.points.len())?;
    for p in &tess.points {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    let nverts = if tess.cell_type == VTK_TETRA { 4 } else { 3 };
    writeln!(
        w,
        "CELLS {} {}",
        tess.cells.len(),
        tess.cells.len() * (nverts + 1)
    )?;
    for (cell, _) in &tess.cells {
        write!(w, "{}", cell.len())?;
        for v in cell {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", tess.cells.len())?;
    for _ in &tess.cells {
        writeln!(w, "{}", tess.cell_type)?;
    }

    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", tess.points.len())?;
        for (name, field) in fields {
            let vals = point_values(field, &tess);
            if field.space.components == 1 {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in &vals {
                    writeln!(w, "{:.17e}", v[0])?;
                }
            } else {
                writeln!(w, "VECTORS {name} double")?;
                for v in &vals {
                    writeln!(w, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2])?;
                }
            }
        }
        writeln!(w, "CELL_DATA {}", tess.cells.len())?;
        for (name, field) in fields {
            let means: Vec<Vec3> = (0..mesh.n_elements())
                .map(|e| element_mean_vector(field, e))
                .collect();
            if field.space.components == 1 {
                writeln!(w, "SCALARS {name}_mean double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for (_, e) in &tess.cells {
                    writeln!(w, "{:.17e}", means[*e][0])?;
                }
            } else {
                writeln!(w, "VECTORS {name}_mean double")?;
                for (_, e) in &tess.cells {
                    let m = means[*e];
                    writeln!(w, "{:.17e} {:.17e} {:.17e}", m[0], m[1], m[2])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Parsed content of a legacy VTK file, as written by [`write_vtk`].
#[derive(Debug, Default)]
pub struct VtkData {
    pub points: Vec<Vec3>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<usize>,
    pub point_scalars: HashMap<String, Vec<f64>>,
    pub point_vectors: HashMap<String, Vec<Vec3>>,
    pub cell_scalars: HashMap<String, Vec<f64>>,
    pub cell_vectors: HashMap<String, Vec<Vec3>>,
}

type Toks<'a> = std::iter::Peekable<std::str::SplitWhitespace<'a>>;

fn bad(msg: &str) -> Error {
    Error::Config(format!("vtk reader: {msg}"))
}

fn next_tok<'a>(toks: &mut Toks<'a>, what: &str) -> Result<&'a str> {
    toks.next()
        .ok_or_else(|| bad(&format!("unexpected end of file reading {what}")))
}

/// Minimal reader for the files produced by [`write_vtk`]; used by the
/// round-trip tests.
pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkData> {
    let text = std::fs::read_to_string(path)?;
    let mut out = VtkData::default();
    let mut toks: Toks = text.split_whitespace().peekable();
    // Header: "# vtk DataFile Version x.y" then title line tokens; scan for
    // DATASET.
    loop {
        let t = next_tok(&mut toks, "header")?;
        if t == "DATASET" {
            let kind = next_tok(&mut toks, "dataset kind")?;
            if kind != "UNSTRUCTURED_GRID" {
                return Err(bad("expected UNSTRUCTURED_GRID"));
            }
            break;
        }
    }
    let mut n_points = 0usize;
    loop {
        let section = match toks.next() {
            Some(s) => s.to_string(),
            None => break,
        };
        match section.as_str() {
            "POINTS" => {
                n_points = next_tok(&mut toks, "point count")?.parse().map_err(|_| bad("count"))?;
                let _ty = next_tok(&mut toks, "point type")?;
                for _ in 0..n_points {
                    let mut p = [0.0; 3];
                    for v in &mut p {
                        *v = next_tok(&mut toks, "coord")?.parse().map_err(|_| bad("coord"))?;
                    }
                    out.points.push(p);
                }
            }
            "CELLS" => {
                let n: usize = next_tok(&mut toks, "cell count")?.parse().map_err(|_| bad("count"))?;
                let _total: usize = next_tok(&mut toks, "cell size")?.parse().map_err(|_| bad("size"))?;
                for _ in 0..n {
                    let k: usize = next_tok(&mut toks, "cell arity")?.parse().map_err(|_| bad("arity"))?;
                    let mut cell = Vec::with_capacity(k);
                    for _ in 0..k {
                        cell.push(next_tok(&mut toks, "cell vertex")?.parse().map_err(|_| bad("vertex"))?);
                    }
                    out.cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let n: usize = next_tok(&mut toks, "type count")?.parse().map_err(|_| bad("count"))?;
                for _ in 0..n {
                    out.cell_types
                        .push(next_tok(&mut toks, "cell type")?.parse().map_err(|_| bad("type"))?);
                }
            }
            "POINT_DATA" | "CELL_DATA" => {
                let n: usize = next_tok(&mut toks, "data count")?.parse().map_err(|_| bad("count"))?;
                let is_point = section == "POINT_DATA";
                let _ = n_points;
                // Attribute blocks until the next section keyword.
                loop {
                    let Some(&kw) = toks.peek() else { break };
                    match kw {
                        "SCALARS" => {
                            let _ = toks.next();
                            let name = next_tok(&mut toks, "scalar name")?.to_string();
                            let _ty = next_tok(&mut toks, "scalar type")?;
                            let _comps = next_tok(&mut toks, "scalar components")?;
                            let lt = next_tok(&mut toks, "LOOKUP_TABLE")?;
                            if lt != "LOOKUP_TABLE" {
                                return Err(bad("expected LOOKUP_TABLE"));
                            }
                            let _ = next_tok(&mut toks, "table name")?;
                            let mut vals = Vec::with_capacity(n);
                            for _ in 0..n {
                                vals.push(
                                    next_tok(&mut toks, "scalar value")?
                                        .parse()
                                        .map_err(|_| bad("value"))?,
                                );
                            }
                            if is_point {
                                out.point_scalars.insert(name, vals);
                            } else {
                                out.cell_scalars.insert(name, vals);
                            }
                        }
                        "VECTORS" => {
                            let _ = toks.next();
                            let name = next_tok(&mut toks, "vector name")?.to_string();
                            let _ty = next_tok(&mut toks, "vector type")?;
                            let mut vals = Vec::with_capacity(n);
                            for _ in 0..n {
                                let mut p = [0.0; 3];
                                for v in &mut p {
                                    *v = next_tok(&mut toks, "vector value")?
                                        .parse()
                                        .map_err(|_| bad("value"))?;
                                }
                                vals.push(p);
                            }
                            if is_point {
                                out.point_vectors.insert(name, vals);
                            } else {
                                out.cell_vectors.insert(name, vals);
                            }
                        }
                        _ => break,
                    }
                }
            }
            other => return Err(bad(&format!("unexpected section {other:?}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{create_space, l2_project, l2_project_vector};
    use crate::mesh::{agglomerate, build_structured, DomainBox, ElemKind};
    use std::sync::Arc;

    #[test]
    fn geometry_only_file() {
        let mesh = build_structured(2, 2, ElemKind::Tri, DomainBox::unit()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("geo.vtk");
        write_vtk(&mesh, &[], &path).unwrap();
        let data = read_vtk(&path).unwrap();
        assert_eq!(data.points.len(), 9);
        assert_eq!(data.cells.len(), 8);
        assert!(data.cell_types.iter().all(|&t| t == 5));
    }

    #[test]
    fn constant_field_roundtrip() {
        let mesh = Arc::new(build_structured(2, 2, ElemKind::Quad, DomainBox::unit()).unwrap());
        let space = create_space(mesh.clone(), 1, 1).unwrap();
        let field = l2_project(&space, |_| 3.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.vtk");
        write_vtk(&mesh, &[("c", &field)], &path).unwrap();
        let data = read_vtk(&path).unwrap();
        let pts = &data.point_scalars["c"];
        assert!(pts.iter().all(|v| (v - 3.25).abs() < 1e-12));
        let cells = &data.cell_scalars["c_mean"];
        // 4 quads fanned into 4 triangles each.
        assert_eq!(cells.len(), 16);
        assert!(cells.iter().all(|v| (v - 3.25).abs() < 1e-12));
    }

    #[test]
    fn means_roundtrip_on_polygons_and_vectors() {
        let fine = build_structured(2, 4, ElemKind::Quad, DomainBox::unit()).unwrap();
        let mesh = Arc::new(agglomerate(&fine, 2).unwrap());
        let cspace = create_space(mesh.clone(), 2, 1).unwrap();
        let vspace = create_space(mesh.clone(), 1, 2).unwrap();
        let c = l2_project(&cspace, |x| x[0] + 2.0 * x[1]);
        let u = l2_project_vector(&vspace, |x| [x[1], -x[0], 0.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.vtk");
        write_vtk(&mesh, &[("c", &c), ("u", &u)], &path).unwrap();
        let data = read_vtk(&path).unwrap();

        // Written cell means equal the recomputed element means per sub-cell.
        let means = c.element_means();
        let tess_cells = &data.cell_scalars["c_mean"];
        // Each 2x2-agglomerated polygon has 8 vertices -> 8 sub-triangles.
        assert_eq!(tess_cells.len(), mesh.n_elements() * 8);
        for (k, v) in tess_cells.iter().enumerate() {
            let e = k / 8;
            assert!((v - means[e]).abs() < 1e-12);
        }
        assert!(data.cell_vectors.contains_key("u_mean"));
        assert_eq!(data.point_vectors["u"].len(), data.points.len());
    }
}
