//! 2D triangular meshes with a partitioned boundary.
//!
//! The boundary splits into a slip wall (`S1`) and a traction part (`S2`),
//! both tagged edge by edge. Meshes are immutable after load and safe to share
//! across threads.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub type Point = Vector2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    S1,
    S2,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::S1 => write!(f, "S1"),
            BoundaryTag::S2 => write!(f, "S2"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    /// Endpoint node indices, ordered as in the input file.
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// Index of the unique triangle this edge belongs to.
    pub tri: usize,
}

/// Orthonormal frame on a boundary edge: outward unit normal and the tangent
/// obtained by rotating the normal by -90 degrees.
#[derive(Clone, Copy, Debug)]
pub struct EdgeFrame {
    pub normal: Vector2<f64>,
    pub tangent: Vector2<f64>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Set when any input triangle had to be reoriented during load.
    pub reoriented: bool,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("invalid mesh: {0}")]
    Invalid(MeshReport),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonPositiveArea { tri: usize },
    NonManifoldEdge { nodes: [usize; 2] },
    UncoveredBoundary { nodes: [usize; 2] },
    DanglingBoundaryEdge { nodes: [usize; 2] },
    InteriorTaggedEdge { nodes: [usize; 2] },
    DuplicateBoundaryEdge { nodes: [usize; 2] },
    EmptyTagSet { tag: BoundaryTag },
    BoundaryNotClosed { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveArea { tri } => {
                write!(f, "triangle {tri} has non-positive area")
            }
            Violation::NonManifoldEdge { nodes } => {
                write!(f, "non-manifold edge ({}, {})", nodes[0], nodes[1])
            }
            Violation::UncoveredBoundary { nodes } => {
                write!(f, "uncovered boundary edge ({}, {})", nodes[0], nodes[1])
            }
            Violation::DanglingBoundaryEdge { nodes } => write!(
                f,
                "boundary edge ({}, {}) does not match exactly one triangle side",
                nodes[0], nodes[1]
            ),
            Violation::InteriorTaggedEdge { nodes } => write!(
                f,
                "tagged edge ({}, {}) is interior to the mesh",
                nodes[0], nodes[1]
            ),
            Violation::DuplicateBoundaryEdge { nodes } => {
                write!(f, "boundary edge ({}, {}) tagged twice", nodes[0], nodes[1])
            }
            Violation::EmptyTagSet { tag } => write!(f, "{tag} empty"),
            Violation::BoundaryNotClosed { node } => write!(
                f,
                "boundary is not a closed polygonal loop at node {node}"
            ),
        }
    }
}

/// Outcome of `validate_mesh`; empty means the mesh satisfies every invariant.
#[derive(Clone, Debug, Default)]
pub struct MeshReport {
    pub violations: Vec<Violation>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for MeshReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "mesh valid")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        (self.nodes[e.nodes[1]] - self.nodes[e.nodes[0]]).norm()
    }

    /// Longest edge over all triangles; the usual mesh-size parameter.
    pub fn max_diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let d = (self.nodes[t[(k + 1) % 3]] - self.nodes[t[k]]).norm();
                h = h.max(d);
            }
        }
        h
    }

    pub fn mean_boundary_edge_length(&self) -> f64 {
        let n = self.boundary_edges.len();
        if n == 0 {
            return 0.0;
        }
        self.boundary_edges.iter().map(|e| self.edge_length(e)).sum::<f64>() / n as f64
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let area = self.triangle_area(t);
        let la = signed_area(x, self.nodes[b], self.nodes[c]) / area;
        let lb = signed_area(self.nodes[a], x, self.nodes[c]) / area;
        [la, lb, 1.0 - la - lb]
    }

    /// Locate the triangle containing `x` (with tolerance for points on edges).
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        for t in 0..self.triangles.len() {
            let b = self.barycentric(t, x);
            if b.iter().all(|&l| l >= -TOL) {
                return Some((t, b));
            }
        }
        None
    }
}

/// Load a mesh from the line-oriented text format:
/// `node <id> <x> <y>`, `tri <id> <n1> <n2> <n3>`, `bedge <n1> <n2> <S1|S2>`,
/// with `#` comments. Clockwise triangles are reoriented with a warning flag;
/// the result must pass `validate_mesh`.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// Parse the mesh text format from a string.
pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut node_ids: BTreeMap<u64, usize> = BTreeMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut raw_tris: Vec<(u64, [u64; 3])> = Vec::new();
    let mut raw_bedges: Vec<([u64; 2], BoundaryTag)> = Vec::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let kind = it.next().unwrap();
        let parse_err = |msg: &str| MeshError::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        match kind {
            "node" => {
                let id: u64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("expected node id"))?;
                let x: f64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("expected x coordinate"))?;
                let y: f64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("expected y coordinate"))?;
                if node_ids.insert(id, nodes.len()).is_some() {
                    return Err(parse_err(&format!("duplicate node id {id}")));
                }
                nodes.push(Vector2::new(x, y));
            }
            "tri" => {
                let id: u64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("expected triangle id"))?;
                let mut ns = [0u64; 3];
                for n in &mut ns {
                    *n = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err("expected three node ids"))?;
                }
                raw_tris.push((id, ns));
            }
            "bedge" => {
                let mut ns = [0u64; 2];
                for n in &mut ns {
                    *n = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err("expected two node ids"))?;
                }
                let tag = match it.next() {
                    Some("S1") => BoundaryTag::S1,
                    Some("S2") => BoundaryTag::S2,
                    _ => return Err(parse_err("expected tag S1 or S2")),
                };
                raw_bedges.push((ns, tag));
            }
            other => return Err(parse_err(&format!("unknown record '{other}'"))),
        }
        if it.next().is_some() {
            return Err(MeshError::Parse {
                line: lineno + 1,
                msg: "trailing fields".to_string(),
            });
        }
    }

    let resolve = |id: u64| -> Result<usize, MeshError> {
        node_ids
            .get(&id)
            .copied()
            .ok_or_else(|| MeshError::Topology(format!("reference to missing node {id}")))
    };

    let mut triangles = Vec::with_capacity(raw_tris.len());
    let mut reoriented = false;
    for (_, ns) in &raw_tris {
        let mut t = [resolve(ns[0])?, resolve(ns[1])?, resolve(ns[2])?];
        let area = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if area < 0.0 {
            t.swap(1, 2);
            reoriented = true;
        }
        triangles.push(t);
    }

    // Attach each tagged edge to its parent triangle.
    let side_owner = triangle_side_map(&triangles);
    let mut boundary_edges = Vec::with_capacity(raw_bedges.len());
    for (ns, tag) in &raw_bedges {
        let a = resolve(ns[0])?;
        let b = resolve(ns[1])?;
        let key = edge_key(a, b);
        let owners = side_owner.get(&key).map(Vec::as_slice).unwrap_or(&[]);
        let tri = match owners {
            [t] => *t,
            // Leave an impossible parent; validate_mesh reports the problem.
            _ => usize::MAX,
        };
        boundary_edges.push(BoundaryEdge { nodes: [a, b], tag: *tag, tri });
    }

    let mesh = Mesh { nodes, triangles, boundary_edges, reoriented };
    let report = validate_mesh(&mesh);
    if !report.is_valid() {
        return Err(MeshError::Invalid(report));
    }
    Ok(mesh)
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b { (a, b) } else { (b, a) }
}

pub(crate) fn triangle_side_map(triangles: &[[usize; 3]]) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            map.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
        }
    }
    map
}

/// Check every mesh invariant and list the violations. An empty report means
/// the mesh is valid. Conformity is enforced through the side-coverage checks:
/// a hanging node leaves its long side owned by a single triangle with no tag,
/// which surfaces as an uncovered boundary.
pub fn validate_mesh(mesh: &Mesh) -> MeshReport {
    let mut violations = Vec::new();

    for t in 0..mesh.triangles.len() {
        if mesh.triangle_area(t) <= 0.0 {
            violations.push(Violation::NonPositiveArea { tri: t });
        }
    }

    let side_owner = triangle_side_map(&mesh.triangles);
    for (key, owners) in &side_owner {
        if owners.len() > 2 {
            violations.push(Violation::NonManifoldEdge { nodes: [key.0, key.1] });
        }
    }

    // Tagged edges, indexed for coverage checks.
    let mut tagged: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut n_s1 = 0usize;
    let mut n_s2 = 0usize;
    for e in &mesh.boundary_edges {
        let key = edge_key(e.nodes[0], e.nodes[1]);
        *tagged.entry(key).or_insert(0) += 1;
        match e.tag {
            BoundaryTag::S1 => n_s1 += 1,
            BoundaryTag::S2 => n_s2 += 1,
        }
        match side_owner.get(&key).map(Vec::len) {
            Some(1) => {}
            Some(2) => violations.push(Violation::InteriorTaggedEdge { nodes: e.nodes }),
            _ => violations.push(Violation::DanglingBoundaryEdge { nodes: e.nodes }),
        }
    }
    for (key, count) in &tagged {
        if *count > 1 {
            violations.push(Violation::DuplicateBoundaryEdge { nodes: [key.0, key.1] });
        }
    }

    // Every boundary side (owned by exactly one triangle) must carry a tag.
    for (key, owners) in &side_owner {
        if owners.len() == 1 && !tagged.contains_key(key) {
            violations.push(Violation::UncoveredBoundary { nodes: [key.0, key.1] });
        }
    }

    if n_s1 == 0 {
        violations.push(Violation::EmptyTagSet { tag: BoundaryTag::S1 });
    }
    if n_s2 == 0 {
        violations.push(Violation::EmptyTagSet { tag: BoundaryTag::S2 });
    }

    // Closed polygonal loop: every boundary node has even degree (2 for a
    // simple loop) in the boundary graph.
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    for (key, owners) in &side_owner {
        if owners.len() == 1 {
            *degree.entry(key.0).or_insert(0) += 1;
            *degree.entry(key.1).or_insert(0) += 1;
        }
    }
    for (node, d) in &degree {
        if d % 2 != 0 {
            violations.push(Violation::BoundaryNotClosed { node: *node });
        }
    }

    MeshReport { violations }
}

/// Split every triangle into four by edge midpoints. Old nodes keep their
/// indices; midpoint nodes are appended in sorted-edge order, so refinements
/// nest. Boundary tags are inherited by both children of a boundary edge.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let nv = mesh.nodes.len();
    // Global unique edges in sorted order.
    let side_owner = triangle_side_map(&mesh.triangles);
    let mut midpoint_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut nodes = mesh.nodes.clone();
    for (i, key) in side_owner.keys().enumerate() {
        midpoint_of.insert(*key, nv + i);
        nodes.push(0.5 * (mesh.nodes[key.0] + mesh.nodes[key.1]));
    }

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let [a, b, c] = *tri;
        let mab = midpoint_of[&edge_key(a, b)];
        let mbc = midpoint_of[&edge_key(b, c)];
        let mca = midpoint_of[&edge_key(c, a)];
        // Children in a fixed order: parent t maps to children 4t..4t+3.
        triangles.push([a, mab, mca]);
        triangles.push([b, mbc, mab]);
        triangles.push([c, mca, mbc]);
        triangles.push([mab, mbc, mca]);
    }

    let child_side_owner = triangle_side_map(&triangles);
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.nodes;
        let m = midpoint_of[&edge_key(a, b)];
        for half in [[a, m], [m, b]] {
            let owners = &child_side_owner[&edge_key(half[0], half[1])];
            debug_assert_eq!(owners.len(), 1);
            boundary_edges.push(BoundaryEdge { nodes: half, tag: e.tag, tri: owners[0] });
        }
    }

    Mesh { nodes, triangles, boundary_edges, reoriented: false }
}

/// Outward frame of every boundary edge, aligned with `mesh.boundary_edges`.
pub fn boundary_frames(mesh: &Mesh) -> Vec<EdgeFrame> {
    mesh.boundary_edges
        .iter()
        .map(|e| {
            let a = mesh.nodes[e.nodes[0]];
            let b = mesh.nodes[e.nodes[1]];
            let t = (b - a).normalize();
            // Rotate the edge direction by -90 degrees, then orient outward
            // against the parent centroid.
            let mut n = Vector2::new(t.y, -t.x);
            let mid = 0.5 * (a + b);
            if n.dot(&(mesh.centroid(e.tri) - mid)) > 0.0 {
                n = -n;
            }
            // Tangent convention: normal rotated by -90 degrees.
            let tangent = Vector2::new(n.y, -n.x);
            EdgeFrame { normal: n, tangent }
        })
        .collect()
}

/// Which rectangle sides carry which tag in `structured_rectangle`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// Structured triangulation of [0, width] x [0, height] with nx-by-ny cells,
/// each split along the south-west to north-east diagonal. Sides listed in
/// `s1_sides` are tagged S1, the rest S2.
pub fn structured_rectangle(
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    s1_sides: &[Side],
) -> Mesh {
    assert!(nx >= 1 && ny >= 1);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Vector2::new(
                width * i as f64 / nx as f64,
                height * j as f64 / ny as f64,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = id(i, j);
            let v10 = id(i + 1, j);
            let v01 = id(i, j + 1);
            let v11 = id(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let side_owner = triangle_side_map(&triangles);
    let tag_of = |side: Side| {
        if s1_sides.contains(&side) {
            BoundaryTag::S1
        } else {
            BoundaryTag::S2
        }
    };
    let mut boundary_edges = Vec::new();
    let mut push = |a: usize, b: usize, side: Side| {
        let owners = &side_owner[&edge_key(a, b)];
        boundary_edges.push(BoundaryEdge { nodes: [a, b], tag: tag_of(side), tri: owners[0] });
    };
    for i in 0..nx {
        push(id(i, 0), id(i + 1, 0), Side::Bottom);
        push(id(i, ny), id(i + 1, ny), Side::Top);
    }
    for j in 0..ny {
        push(id(nx, j), id(nx, j + 1), Side::Right);
        push(id(0, j), id(0, j + 1), Side::Left);
    }
    Mesh { nodes, triangles, boundary_edges, reoriented: false }
}

/// The smallest conforming square: 4 nodes, 2 triangles, bottom tagged S1.
pub fn unit_square_two_tris() -> Mesh {
    structured_rectangle(1, 1, 1.0, 1.0, &[Side::Bottom])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn write_temp(text: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("mesh_test_{}.txt", rand::random::<u64>()));
        std::fs::write(&path, text).unwrap();
        path
    }

    const SQUARE: &str = "\
# unit square, two triangles
node 0 0 0
node 1 1 0
node 2 1 1
node 3 0 1
tri 0 0 1 2
tri 1 0 2 3
bedge 0 1 S1
bedge 1 2 S2
bedge 2 3 S2
bedge 3 0 S2
";

    #[test]
    fn loads_unit_square() {
        let path = write_temp(SQUARE);
        let mesh = load_mesh(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(mesh.triangles.len(), 2);
        assert_eq!(mesh.boundary_edges.len(), 4);
        assert!(!mesh.reoriented);
        assert!(validate_mesh(&mesh).is_valid());
    }

    #[test]
    fn reorients_clockwise_triangle() {
        let text = SQUARE.replace("tri 0 0 1 2", "tri 0 0 2 1");
        let path = write_temp(&text);
        let mesh = load_mesh(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert!(mesh.reoriented);
        assert!(mesh.triangle_area(0) > 0.0);
    }

    #[test]
    fn rejects_uncovered_boundary() {
        let text = SQUARE.replace("bedge 3 0 S2\n", "");
        let path = write_temp(&text);
        let err = load_mesh(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        match err {
            MeshError::Invalid(report) => {
                assert!(report
                    .violations
                    .iter()
                    .any(|v| matches!(v, Violation::UncoveredBoundary { .. })));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_node_reference() {
        let text = SQUARE.replace("bedge 3 0 S2", "bedge 3 9 S2");
        let path = write_temp(&text);
        let err = load_mesh(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, MeshError::Topology(_)));
    }

    #[test]
    fn rejects_malformed_line() {
        let text = SQUARE.replace("node 2 1 1", "node 2 1");
        let path = write_temp(&text);
        let err = load_mesh(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, MeshError::Parse { .. }));
    }

    #[test]
    fn validate_reports_empty_s2() {
        let mut mesh = unit_square_two_tris();
        for e in &mut mesh.boundary_edges {
            e.tag = BoundaryTag::S1;
        }
        let report = validate_mesh(&mesh);
        assert!(report
            .violations
            .iter()
            .any(|v| *v == Violation::EmptyTagSet { tag: BoundaryTag::S2 }));
    }

    #[test]
    fn validate_reports_duplicate_triangle_as_nonmanifold() {
        let mut mesh = unit_square_two_tris();
        mesh.triangles.push(mesh.triangles[0]);
        let report = validate_mesh(&mesh);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonManifoldEdge { .. })));
    }

    #[test]
    fn refine_counts_and_nesting() {
        let mesh = unit_square_two_tris();
        let r1 = refine_uniform(&mesh);
        assert_eq!(r1.triangles.len(), 8);
        assert_eq!(r1.nodes.len(), 9);
        let r2 = refine_uniform(&r1);
        assert_eq!(r2.triangles.len(), 32);
        assert_eq!(r2.nodes.len(), 25);
        // Old nodes preserved with the same indices.
        for (i, p) in mesh.nodes.iter().enumerate() {
            assert_eq!(r1.nodes[i], *p);
            assert_eq!(r2.nodes[i], *p);
        }
        assert!(validate_mesh(&r2).is_valid());
    }

    #[test]
    fn refine_preserves_area_and_tags() {
        let mesh = structured_rectangle(3, 2, 2.0, 1.0, &[Side::Bottom, Side::Top]);
        let fine = refine_uniform(&mesh);
        assert_relative_eq!(fine.total_area(), mesh.total_area(), max_relative = 1e-14);
        let count = |m: &Mesh, tag: BoundaryTag| {
            m.boundary_edges.iter().filter(|e| e.tag == tag).count()
        };
        assert_eq!(count(&fine, BoundaryTag::S1), 2 * count(&mesh, BoundaryTag::S1));
        assert_eq!(count(&fine, BoundaryTag::S2), 2 * count(&mesh, BoundaryTag::S2));
        // Both children of a coarse S1 edge are S1: every fine boundary edge
        // lies inside exactly one coarse edge and must inherit its tag.
        for fe in &fine.boundary_edges {
            let mid = 0.5 * (fine.nodes[fe.nodes[0]] + fine.nodes[fe.nodes[1]]);
            let parent = mesh
                .boundary_edges
                .iter()
                .find(|ce| {
                    let a = mesh.nodes[ce.nodes[0]];
                    let b = mesh.nodes[ce.nodes[1]];
                    let d = b - a;
                    let t = (mid - a).dot(&d) / d.norm_squared();
                    (0.0..=1.0).contains(&t) && (a + t * d - mid).norm() < 1e-12
                })
                .expect("child edge must lie on a parent boundary edge");
            assert_eq!(fe.tag, parent.tag);
        }
    }

    #[test]
    fn frames_on_unit_square() {
        let mesh = unit_square_two_tris();
        let frames = boundary_frames(&mesh);
        for (e, f) in mesh.boundary_edges.iter().zip(&frames) {
            let mid = 0.5 * (mesh.nodes[e.nodes[0]] + mesh.nodes[e.nodes[1]]);
            if (mid.y - 0.0).abs() < 1e-14 {
                assert_relative_eq!(f.normal.x, 0.0, epsilon = 1e-15);
                assert_relative_eq!(f.normal.y, -1.0, epsilon = 1e-15);
                assert_relative_eq!(f.tangent.x, -1.0, epsilon = 1e-15);
                assert_relative_eq!(f.tangent.y, 0.0, epsilon = 1e-15);
            }
            if (mid.x - 1.0).abs() < 1e-14 {
                assert_relative_eq!(f.normal.x, 1.0, epsilon = 1e-15);
                assert_relative_eq!(f.normal.y, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn frames_point_outward_and_divergence_theorem() {
        for (nx, ny) in [(1, 1), (3, 2), (5, 5)] {
            let mesh = structured_rectangle(nx, ny, 1.3, 0.8, &[Side::Bottom]);
            let frames = boundary_frames(&mesh);
            let mut sum = Vector2::new(0.0, 0.0);
            for (e, f) in mesh.boundary_edges.iter().zip(&frames) {
                let mid = 0.5 * (mesh.nodes[e.nodes[0]] + mesh.nodes[e.nodes[1]]);
                assert!(f.normal.dot(&(mesh.centroid(e.tri) - mid)) < 0.0);
                assert_relative_eq!(f.normal.norm(), 1.0, epsilon = 1e-14);
                assert_relative_eq!(f.normal.dot(&f.tangent), 0.0, epsilon = 1e-14);
                sum += mesh.edge_length(e) * f.normal;
            }
            assert!(sum.norm() < 1e-12, "divergence theorem violated: {sum:?}");
        }
    }

    proptest! {
        #[test]
        fn random_rect_frames_are_unit(nx in 1usize..6, ny in 1usize..6,
                                       w in 0.1f64..10.0, h in 0.1f64..10.0) {
            let mesh = structured_rectangle(nx, ny, w, h, &[Side::Bottom]);
            let frames = boundary_frames(&mesh);
            for f in &frames {
                prop_assert!((f.normal.norm() - 1.0).abs() < 1e-13);
                prop_assert!((f.tangent.norm() - 1.0).abs() < 1e-13);
            }
        }
    }
}
