//! Reader for Gmsh MSH ASCII files, versions 2.2 and 4.1, restricted to
//! simplicial cells. Physical group names become boundary face tags.

use std::collections::HashMap;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.iter.next() {
                Some(l) => {
                    self.line_no += 1;
                    let t = l.trim();
                    if !t.is_empty() {
                        return Ok(t);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::GmshParse {
            line: self.line_no,
            msg: msg.into(),
        }
    }
}

fn parse_f64(lines: &Lines, tok: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| lines.err(format!("expected a number, got {tok:?}")))
}

fn parse_usize(lines: &Lines, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| lines.err(format!("expected an integer, got {tok:?}")))
}

fn parse_i64(lines: &Lines, tok: &str) -> Result<i64> {
    tok.parse()
        .map_err(|_| lines.err(format!("expected an integer, got {tok:?}")))
}

#[derive(Default)]
struct RawMesh {
    /// node tag -> coordinates
    nodes: HashMap<i64, Vec3>,
    node_order: Vec<i64>,
    /// (element type, node tags, physical id)
    elements: Vec<(usize, Vec<i64>, Option<i64>)>,
    /// (dim, physical id) -> name
    physical_names: HashMap<(usize, i64), String>,
}

/// Import a mesh from a Gmsh `.msh` file (ASCII v2.2 or v4.1).
pub fn import_gmsh(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = std::fs::read_to_string(path.as_ref())?;
    import_gmsh_str(&text)
}

/// Same as [`import_gmsh`] but reading from an in-memory string.
pub fn import_gmsh_str(text: &str) -> Result<Mesh> {
    let mut lines = Lines::new(text);
    let header = lines.next_line()?;
    if header != "$MeshFormat" {
        return Err(lines.err("file does not start with $MeshFormat"));
    }
    let fmt = lines.next_line()?;
    let mut parts = fmt.split_whitespace();
    let version = parts.next().ok_or_else(|| lines.err("empty format line"))?;
    let file_type = parts
        .next()
        .ok_or_else(|| lines.err("missing file-type field"))?;
    if file_type != "0" {
        return Err(lines.err("binary MSH files are not supported"));
    }
    expect_end(&mut lines, "$EndMeshFormat")?;

    let raw = match version {
        v if v.starts_with("2.") => parse_v2(&mut lines)?,
        v if v.starts_with("4.1") => parse_v41(&mut lines)?,
        v => return Err(lines.err(format!("unsupported MSH version {v}"))),
    };
    build_mesh(raw, &lines)
}

fn expect_end(lines: &mut Lines, end: &str) -> Result<()> {
    let l = lines.next_line()?;
    if l != end {
        return Err(lines.err(format!("expected {end}, got {l:?}")));
    }
    Ok(())
}

fn skip_section(lines: &mut Lines, end: &str) -> Result<()> {
    loop {
        if lines.next_line()? == end {
            return Ok(());
        }
    }
}

fn parse_physical_names(lines: &mut Lines, raw: &mut RawMesh) -> Result<()> {
    let count_line = lines.next_line()?;
    let count = parse_usize(lines, count_line)?;
    for _ in 0..count {
        let l = lines.next_line()?;
        let mut it = l.split_whitespace();
        let dim = parse_usize(lines, it.next().ok_or_else(|| lines.err("short line"))?)?;
        let id = parse_i64(lines, it.next().ok_or_else(|| lines.err("short line"))?)?;
        let name = l
            .splitn(3, char::is_whitespace)
            .nth(2)
            .unwrap_or("")
            .trim()
            .trim_matches('"')
            .to_string();
        raw.physical_names.insert((dim, id), name);
    }
    expect_end(lines, "$EndPhysicalNames")
}

fn parse_v2(lines: &mut Lines) -> Result<RawMesh> {
    let mut raw = RawMesh::default();
    loop {
        let section = match lines.next_line() {
            Ok(s) => s,
            Err(_) => break,
        };
        match section {
            "$PhysicalNames" => parse_physical_names(lines, &mut raw)?,
            "$Nodes" => {
                let count_line = lines.next_line()?;
                let count = parse_usize(lines, count_line)?;
                for _ in 0..count {
                    let l = lines.next_line()?;
                    let mut it = l.split_whitespace();
                    let tag =
                        parse_i64(lines, it.next().ok_or_else(|| lines.err("short node line"))?)?;
                    let mut xyz = [0.0; 3];
                    for v in &mut xyz {
                        *v = parse_f64(
                            lines,
                            it.next().ok_or_else(|| lines.err("short node line"))?,
                        )?;
                    }
                    raw.nodes.insert(tag, xyz);
                    raw.node_order.push(tag);
                }
                expect_end(lines, "$EndNodes")?;
            }
            "$Elements" => {
                let count_line = lines.next_line()?;
                let count = parse_usize(lines, count_line)?;
                for _ in 0..count {
                    let l = lines.next_line()?;
                    let mut it = l.split_whitespace();
                    let _id = it.next().ok_or_else(|| lines.err("short element line"))?;
                    let ty = parse_usize(
                        lines,
                        it.next().ok_or_else(|| lines.err("short element line"))?,
                    )?;
                    let ntags = parse_usize(
                        lines,
                        it.next().ok_or_else(|| lines.err("short element line"))?,
                    )?;
                    let mut phys = None;
                    for t in 0..ntags {
                        let v = parse_i64(
                            lines,
                            it.next().ok_or_else(|| lines.err("short element line"))?,
                        )?;
                        if t == 0 {
                            phys = Some(v);
                        }
                    }
                    let nodes: Vec<i64> = it
                        .map(|tok| parse_i64(lines, tok))
                        .collect::<Result<_>>()?;
                    raw.elements.push((ty, nodes, phys));
                }
                expect_end(lines, "$EndElements")?;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                skip_section(lines, &format!("$End{}", &s[1..]))?;
            }
            s => return Err(lines.err(format!("unexpected content {s:?}"))),
        }
    }
    Ok(raw)
}

fn parse_v41(lines: &mut Lines) -> Result<RawMesh> {
    let mut raw = RawMesh::default();
    // (entity dim, entity tag) -> first physical id
    let mut entity_phys: HashMap<(usize, i64), i64> = HashMap::new();
    loop {
        let section = match lines.next_line() {
            Ok(s) => s,
            Err(_) => break,
        };
        match section {
            "$PhysicalNames" => parse_physical_names(lines, &mut raw)?,
            "$Entities" => {
                let l = lines.next_line()?;
                let counts: Vec<usize> = l
                    .split_whitespace()
                    .map(|t| parse_usize(lines, t))
                    .collect::<Result<_>>()?;
                if counts.len() != 4 {
                    return Err(lines.err("expected 4 entity counts"));
                }
                for (dim, &count) in counts.iter().enumerate() {
                    for _ in 0..count {
                        let l = lines.next_line()?;
                        let toks: Vec<&str> = l.split_whitespace().collect();
                        let tag = parse_i64(lines, toks[0])?;
                        // Points: tag x y z numPhys phys...; higher entities:
                        // tag 6 bbox floats, numPhys, phys...
                        let nphys_idx = if dim == 0 { 4 } else { 7 };
                        if toks.len() > nphys_idx {
                            let nphys = parse_usize(lines, toks[nphys_idx])?;
                            if nphys > 0 && toks.len() > nphys_idx + 1 {
                                entity_phys
                                    .insert((dim, tag), parse_i64(lines, toks[nphys_idx + 1])?);
                            }
                        }
                    }
                }
                expect_end(lines, "$EndEntities")?;
            }
            "$Nodes" => {
                let l = lines.next_line()?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() < 2 {
                    return Err(lines.err("short $Nodes header"));
                }
                let num_blocks = parse_usize(lines, toks[0])?;
                for _ in 0..num_blocks {
                    let l = lines.next_line()?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.len() < 4 {
                        return Err(lines.err("short node block header"));
                    }
                    let n_in_block = parse_usize(lines, toks[3])?;
                    let mut tags = Vec::with_capacity(n_in_block);
                    for _ in 0..n_in_block {
                        let tag_line = lines.next_line()?;
                        tags.push(parse_i64(lines, tag_line)?);
                    }
                    for &tag in &tags {
                        let l = lines.next_line()?;
                        let mut it = l.split_whitespace();
                        let mut xyz = [0.0; 3];
                        for v in &mut xyz {
                            *v = parse_f64(
                                lines,
                                it.next().ok_or_else(|| lines.err("short coordinate line"))?,
                            )?;
                        }
                        raw.nodes.insert(tag, xyz);
                        raw.node_order.push(tag);
                    }
                }
                expect_end(lines, "$EndNodes")?;
            }
            "$Elements" => {
                let l = lines.next_line()?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() < 2 {
                    return Err(lines.err("short $Elements header"));
                }
                let num_blocks = parse_usize(lines, toks[0])?;
                for _ in 0..num_blocks {
                    let l = lines.next_line()?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.len() < 4 {
                        return Err(lines.err("short element block header"));
                    }
                    let ent_dim = parse_usize(lines, toks[0])?;
                    let ent_tag = parse_i64(lines, toks[1])?;
                    let ty = parse_usize(lines, toks[2])?;
                    let n_in_block = parse_usize(lines, toks[3])?;
                    let phys = entity_phys.get(&(ent_dim, ent_tag)).copied();
                    for _ in 0..n_in_block {
                        let l = lines.next_line()?;
                        let mut it = l.split_whitespace();
                        let _tag = it.next().ok_or_else(|| lines.err("short element line"))?;
                        let nodes: Vec<i64> = it
                            .map(|tok| parse_i64(lines, tok))
                            .collect::<Result<_>>()?;
                        raw.elements.push((ty, nodes, phys));
                    }
                }
                expect_end(lines, "$EndElements")?;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                skip_section(lines, &format!("$End{}", &s[1..]))?;
            }
            s => return Err(lines.err(format!("unexpected content {s:?}"))),
        }
    }
    Ok(raw)
}

// Gmsh element type ids.
const TY_LINE2: usize = 1;
const TY_TRI3: usize = 2;
const TY_TET4: usize = 4;
const TY_POINT: usize = 15;

fn build_mesh(raw: RawMesh, lines: &Lines) -> Result<Mesh> {
    if raw.nodes.is_empty() {
        return Err(lines.err("file contains no nodes"));
    }
    for (ty, _, _) in &raw.elements {
        match *ty {
            TY_LINE2 | TY_TRI3 | TY_TET4 | TY_POINT => {}
            other => {
                return Err(lines.err(format!(
                    "unsupported element type {other}; only 2-node lines, 3-node triangles, and 4-node tetrahedra are supported"
                )))
            }
        }
    }
    let has_tets = raw.elements.iter().any(|(ty, _, _)| *ty == TY_TET4);
    let dim = if has_tets { 3 } else { 2 };
    let cell_ty = if has_tets { TY_TET4 } else { TY_TRI3 };
    let facet_ty = if has_tets { TY_TRI3 } else { TY_LINE2 };

    // Renumber nodes contiguously in file order.
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::with_capacity(raw.node_order.len());
    for tag in &raw.node_order {
        if !index.contains_key(tag) {
            index.insert(*tag, vertices.len());
            vertices.push(raw.nodes[tag]);
        }
    }
    let resolve = |nodes: &[i64]| -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|t| {
                index
                    .get(t)
                    .copied()
                    .ok_or_else(|| lines.err(format!("element references unknown node {t}")))
            })
            .collect()
    };

    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut facet_tags: HashMap<Vec<usize>, Option<i64>> = HashMap::new();
    for (ty, nodes, phys) in &raw.elements {
        if *ty == cell_ty {
            cells.push(resolve(nodes)?);
        } else if *ty == facet_ty {
            let mut key = resolve(nodes)?;
            key.sort_unstable();
            facet_tags.insert(key, *phys);
        }
    }
    if cells.is_empty() {
        return Err(lines.err("file contains no volume cells"));
    }

    // Collect the actual boundary facets of the cells so dangling tagged
    // facets can be detected.
    let mut facet_count: HashMap<Vec<usize>, usize> = HashMap::new();
    let facets_of = |cell: &[usize]| -> Vec<Vec<usize>> {
        if dim == 2 {
            (0..cell.len())
                .map(|i| {
                    let mut f = vec![cell[i], cell[(i + 1) % cell.len()]];
                    f.sort_unstable();
                    f
                })
                .collect()
        } else {
            [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
                .iter()
                .map(|ix| {
                    let mut f = vec![cell[ix[0]], cell[ix[1]], cell[ix[2]]];
                    f.sort_unstable();
                    f
                })
                .collect()
        }
    };
    for cell in &cells {
        for f in facets_of(cell) {
            *facet_count.entry(f).or_insert(0) += 1;
        }
    }
    for key in facet_tags.keys() {
        match facet_count.get(key) {
            Some(_) => {}
            None => {
                return Err(lines.err(format!(
                    "tagged facet {key:?} does not match any cell face"
                )))
            }
        }
    }

    let facet_dim = dim - 1;
    let name_of = |phys: Option<i64>| -> Option<String> {
        phys.map(|p| {
            raw.physical_names
                .get(&(facet_dim, p))
                .cloned()
                .unwrap_or_else(|| p.to_string())
        })
    };
    let tag_of = move |verts: &[usize], _mid: Vec3| -> Option<String> {
        let mut key = verts.to_vec();
        key.sort_unstable();
        facet_tags.get(&key).and_then(|p| name_of(*p))
    };

    if dim == 2 {
        // Ensure CCW orientation of each triangle.
        for cell in &mut cells {
            let a = vertices[cell[0]];
            let b = vertices[cell[1]];
            let c = vertices[cell[2]];
            let signed = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if signed < 0.0 {
                cell.swap(1, 2);
            }
        }
        Mesh::from_polygons(vertices, cells, tag_of)
    } else {
        let cells: Vec<[usize; 4]> = cells
            .into_iter()
            .map(|c| {
                <[usize; 4]>::try_from(c.as_slice())
                    .map_err(|_| lines.err("tetrahedron with wrong node count"))
            })
            .collect::<Result<_>>()?;
        Mesh::from_tetrahedra(vertices, cells, tag_of)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit square, two triangles, four tagged edges (MSH 2.2).
    const SQUARE_V2: &str = "\
$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
4
1 1 \"bottom\"
1 2 \"right\"
1 3 \"top\"
1 4 \"left\"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 2 2 2 3
3 1 2 3 3 3 4
4 1 2 4 4 4 1
5 2 2 10 1 1 2 3
6 2 2 10 1 1 3 4
$EndElements
";

    /// Same square in MSH 4.1 with entity-based physical groups.
    const SQUARE_V41: &str = "\
$MeshFormat
4.1 0 8
$EndMeshFormat
$PhysicalNames
4
1 1 \"bottom\"
1 2 \"right\"
1 3 \"top\"
1 4 \"left\"
$EndPhysicalNames
$Entities
0 4 1 0
1 0 0 0 1 0 0 1 1 0
2 1 0 0 1 1 0 1 2 0
3 0 1 0 1 1 0 1 3 0
4 0 0 0 0 1 0 1 4 0
1 0 0 0 1 1 0 0 0
$EndEntities
$Nodes
5 4 1 4
1 1 0 2
1
2
0 0 0
1 0 0
1 2 0 1
3
1 1 0
1 3 0 1
4
0 1 0
1 4 0 0
2 1 0 0
$EndNodes
$Elements
5 6 1 6
1 1 1 1
1 1 2
1 2 1 1
2 2 3
1 3 1 1
3 3 4
1 4 1 1
4 4 1
2 1 2 2
5 1 2 3
6 1 3 4
$EndElements
";

    #[test]
    fn square_v2_roundtrip() {
        let mesh = import_gmsh_str(SQUARE_V2).unwrap();
        assert_eq!(mesh.dim, 2);
        assert_eq!(mesh.n_elements(), 2);
        assert_eq!(mesh.boundary_faces().count(), 4);
        assert!((mesh.total_measure() - 1.0).abs() < 1e-14);
        let mut tags: Vec<_> = mesh
            .boundary_faces()
            .filter_map(|f| mesh.faces[f].tag().map(String::from))
            .collect();
        tags.sort();
        assert_eq!(tags, ["bottom", "left", "right", "top"]);
    }

    #[test]
    fn square_v41_roundtrip() {
        let mesh = import_gmsh_str(SQUARE_V41).unwrap();
        assert_eq!(mesh.dim, 2);
        assert_eq!(mesh.n_elements(), 2);
        let mut tags: Vec<_> = mesh
            .boundary_faces()
            .filter_map(|f| mesh.faces[f].tag().map(String::from))
            .collect();
        tags.sort();
        assert_eq!(tags, ["bottom", "left", "right", "top"]);
    }

    #[test]
    fn truncated_file_reports_line() {
        let text = &SQUARE_V2[..200];
        match import_gmsh_str(text) {
            Err(Error::GmshParse { line, .. }) => assert!(line > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_element_type_rejected() {
        let text = SQUARE_V2.replace("5 2 2 10 1 1 2 3", "5 3 2 10 1 1 2 3 4");
        assert!(matches!(
            import_gmsh_str(&text),
            Err(Error::GmshParse { .. })
        ));
    }

    #[test]
    fn dangling_facet_rejected() {
        // Edge 2-4 is a diagonal interior to no cell pairing... actually 2-4
        // does not appear as any cell edge (cells use 1-3 as the diagonal).
        let text = SQUARE_V2
            .replace("$Elements\n6", "$Elements\n7")
            .replace(
                "6 2 2 10 1 1 3 4",
                "6 2 2 10 1 1 3 4\n7 1 2 1 1 2 4",
            );
        match import_gmsh_str(&text) {
            Err(Error::GmshParse { msg, .. }) => assert!(msg.contains("does not match")),
            other => panic!("expected dangling-facet error, got {other:?}"),
        }
    }
}
