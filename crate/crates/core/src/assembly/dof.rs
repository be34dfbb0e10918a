//! Degree-of-freedom management for the Taylor-Hood pair.
//!
//! Velocity is vector P2 (vertices plus edge midpoints), pressure is P1 on
//! the vertices. On the slip wall the normal velocity component vanishes, so
//! every P2 node lying on an S1 edge is rotated into its (normal, tangent)
//! frame and keeps only the tangential unknown. A node shared by two S1 edges
//! with distinct normals cannot satisfy both constraints with one direction
//! and is pinned completely. Nodes at the S1/S2 interface take the S1
//! constraint.

use crate::mesh::{boundary_frames, edge_key, triangle_side_map, BoundaryTag, EdgeFrame, Mesh, Point};
use nalgebra::Vector2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeConstraint {
    Free,
    /// Normal component eliminated; single unknown along `tangent`.
    Slip { normal: Vector2<f64>, tangent: Vector2<f64> },
    /// Corner of the slip wall with conflicting normals: fully fixed.
    Pinned,
}

#[derive(Clone, Debug)]
pub struct DofMap {
    /// Vertex coordinates followed by edge-midpoint coordinates.
    pub p2_coords: Vec<Point>,
    /// Per triangle: [v0, v1, v2, m01, m12, m20].
    pub tri_p2: Vec<[usize; 6]>,
    /// Per boundary edge (aligned with `mesh.boundary_edges`): [a, mid, b].
    pub bedge_p2: Vec<[usize; 3]>,
    pub constraints: Vec<NodeConstraint>,
    /// Per P2 node: (global dof, direction) pairs spanning its free motion.
    pub node_dofs: Vec<Vec<(usize, Vector2<f64>)>>,
    pub n_velocity_dofs: usize,
    /// Pressure unknowns = mesh vertices.
    pub n_pressure_dofs: usize,
    pub frames: Vec<EdgeFrame>,
    /// Indices into `mesh.boundary_edges` by tag.
    pub s1_edges: Vec<usize>,
    pub s2_edges: Vec<usize>,
}

const NORMAL_ALIGN_TOL: f64 = 1e-9;

pub fn build_dof_map(mesh: &Mesh) -> DofMap {
    let nv = mesh.nodes.len();
    let sides = triangle_side_map(&mesh.triangles);
    let mut midpoint_of = std::collections::BTreeMap::new();
    let mut p2_coords = mesh.nodes.clone();
    for (i, key) in sides.keys().enumerate() {
        midpoint_of.insert(*key, nv + i);
        p2_coords.push(0.5 * (mesh.nodes[key.0] + mesh.nodes[key.1]));
    }
    let n_p2 = p2_coords.len();

    let tri_p2 = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| {
            [
                a,
                b,
                c,
                midpoint_of[&edge_key(a, b)],
                midpoint_of[&edge_key(b, c)],
                midpoint_of[&edge_key(c, a)],
            ]
        })
        .collect();

    let bedge_p2: Vec<[usize; 3]> = mesh
        .boundary_edges
        .iter()
        .map(|e| {
            let [a, b] = e.nodes;
            [a, midpoint_of[&edge_key(a, b)], b]
        })
        .collect();

    let frames = boundary_frames(mesh);
    let mut constraints = vec![NodeConstraint::Free; n_p2];
    let mut s1_edges = Vec::new();
    let mut s2_edges = Vec::new();
    for (k, e) in mesh.boundary_edges.iter().enumerate() {
        match e.tag {
            BoundaryTag::S2 => s2_edges.push(k),
            BoundaryTag::S1 => {
                s1_edges.push(k);
                let f = frames[k];
                for node in bedge_p2[k] {
                    constraints[node] = match constraints[node] {
                        NodeConstraint::Free => {
                            NodeConstraint::Slip { normal: f.normal, tangent: f.tangent }
                        }
                        NodeConstraint::Slip { normal, tangent } => {
                            if normal.dot(&f.normal).abs() > 1.0 - NORMAL_ALIGN_TOL {
                                NodeConstraint::Slip { normal, tangent }
                            } else {
                                NodeConstraint::Pinned
                            }
                        }
                        NodeConstraint::Pinned => NodeConstraint::Pinned,
                    };
                }
            }
        }
    }

    let mut node_dofs = Vec::with_capacity(n_p2);
    let mut next = 0usize;
    for c in &constraints {
        let dirs = match c {
            NodeConstraint::Free => {
                let d = vec![(next, Vector2::new(1.0, 0.0)), (next + 1, Vector2::new(0.0, 1.0))];
                next += 2;
                d
            }
            NodeConstraint::Slip { tangent, .. } => {
                let d = vec![(next, *tangent)];
                next += 1;
                d
            }
            NodeConstraint::Pinned => Vec::new(),
        };
        node_dofs.push(dirs);
    }

    DofMap {
        p2_coords,
        tri_p2,
        bedge_p2,
        constraints,
        node_dofs,
        n_velocity_dofs: next,
        n_pressure_dofs: nv,
        frames,
        s1_edges,
        s2_edges,
    }
}

impl DofMap {
    pub fn n_p2_nodes(&self) -> usize {
        self.p2_coords.len()
    }

    /// Full nodal velocity (both components, constraints applied) from the
    /// free-dof vector.
    pub fn velocity_from_dofs(&self, q: &[f64]) -> Vec<Vector2<f64>> {
        assert_eq!(q.len(), self.n_velocity_dofs);
        self.node_dofs
            .iter()
            .map(|dirs| {
                let mut u = Vector2::zeros();
                for (dof, dir) in dirs {
                    u += q[*dof] * dir;
                }
                u
            })
            .collect()
    }

    /// Project a nodal velocity onto the free dofs. Exact for admissible
    /// fields (zero normal component on the slip wall); otherwise this is the
    /// pointwise orthogonal projection onto the constraint set.
    pub fn dofs_from_velocity(&self, u: &[Vector2<f64>]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_p2_nodes());
        let mut q = vec![0.0; self.n_velocity_dofs];
        for (node, dirs) in self.node_dofs.iter().enumerate() {
            for (dof, dir) in dirs {
                q[*dof] = u[node].dot(dir);
            }
        }
        q
    }

    /// Interpolate an analytic velocity field at the P2 nodes.
    pub fn interpolate(&self, f: impl Fn(Point) -> Vector2<f64>) -> Vec<Vector2<f64>> {
        self.p2_coords.iter().map(|x| f(*x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_rectangle, unit_square_two_tris, Side};

    #[test]
    fn dof_count_on_two_triangle_square() {
        // 9 P2 nodes; bottom S1 edge constrains its three nodes by one
        // component each (the corner nodes touch only this S1 edge and keep
        // their tangential dof): 18 - 3 = 15 velocity dofs, 4 pressure dofs.
        let mesh = unit_square_two_tris();
        let dof = build_dof_map(&mesh);
        assert_eq!(dof.n_p2_nodes(), 9);
        assert_eq!(dof.n_velocity_dofs, 15);
        assert_eq!(dof.n_pressure_dofs, 4);
        assert_eq!(dof.s1_edges.len(), 1);
        assert_eq!(dof.s2_edges.len(), 3);
    }

    #[test]
    fn all_s1_square_pins_corners() {
        let mesh = structured_rectangle(
            2,
            2,
            1.0,
            1.0,
            &[Side::Bottom, Side::Top, Side::Left, Side::Right],
        );
        // Mesh validation would reject empty S2; the dof map itself still
        // applies the corner rule, which is what we check here.
        let dof = build_dof_map(&mesh);
        let pinned: Vec<usize> = (0..dof.n_p2_nodes())
            .filter(|&n| dof.constraints[n] == NodeConstraint::Pinned)
            .collect();
        assert_eq!(pinned.len(), 4);
        for &n in &pinned {
            let p = dof.p2_coords[n];
            assert!((p.x - 0.0).abs() < 1e-14 || (p.x - 1.0).abs() < 1e-14);
            assert!((p.y - 0.0).abs() < 1e-14 || (p.y - 1.0).abs() < 1e-14);
        }
        // Every non-corner boundary node lost exactly one component.
        let n_boundary_p2 = 4 * 2 + 4 * 2; // vertices + midpoints per side
        let expected = 2 * dof.n_p2_nodes() - (n_boundary_p2 - 4) - 2 * 4;
        assert_eq!(dof.n_velocity_dofs, expected);
    }

    #[test]
    fn velocity_roundtrip_through_dofs() {
        let mesh = structured_rectangle(3, 2, 1.0, 1.0, &[Side::Bottom]);
        let dof = build_dof_map(&mesh);
        // Admissible field: zero normal component on the bottom wall.
        let u = dof.interpolate(|x| Vector2::new(1.0 + x.y, x.y * (0.3 + x.x)));
        let q = dof.dofs_from_velocity(&u);
        let back = dof.velocity_from_dofs(&q);
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).norm() < 1e-13, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn slip_nodes_have_zero_normal_component() {
        let mesh = structured_rectangle(4, 3, 2.0, 1.0, &[Side::Bottom, Side::Left]);
        let dof = build_dof_map(&mesh);
        let q: Vec<f64> = (0..dof.n_velocity_dofs).map(|k| (k as f64).sin()).collect();
        let u = dof.velocity_from_dofs(&q);
        for (node, c) in dof.constraints.iter().enumerate() {
            if let NodeConstraint::Slip { normal, .. } = c {
                assert!(u[node].dot(normal).abs() < 1e-12);
            }
            if *c == NodeConstraint::Pinned {
                assert_eq!(u[node].norm(), 0.0);
            }
        }
    }
}
