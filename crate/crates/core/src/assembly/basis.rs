//! P2 and P1 shape functions on the reference triangle, and per-element
//! geometry precomputed at the assembly quadrature points.

use crate::mesh::{BoundaryTag, EdgeFrame, Mesh, Point};
use crate::quadrature::{EdgePoint, TriPoint, TRI_ORDER4};
use nalgebra::{Matrix2, Vector2};

/// Local P2 node order: vertices 0, 1, 2, then edge midpoints (0-1), (1-2),
/// (2-0).
pub fn p2_shape(bary: [f64; 3]) -> [f64; 6] {
    let [l0, l1, l2] = bary;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Reference gradients of the P2 basis at barycentric coordinates.
pub fn p2_grad_ref(bary: [f64; 3]) -> [Vector2<f64>; 6] {
    let [l0, l1, l2] = bary;
    [
        Vector2::new(-(4.0 * l0 - 1.0), -(4.0 * l0 - 1.0)),
        Vector2::new(4.0 * l1 - 1.0, 0.0),
        Vector2::new(0.0, 4.0 * l2 - 1.0),
        Vector2::new(4.0 * (l0 - l1), -4.0 * l1),
        Vector2::new(4.0 * l2, 4.0 * l1),
        Vector2::new(-4.0 * l2, 4.0 * (l0 - l2)),
    ]
}

/// P2 trace on an edge, parametrized by t in [0, 1]; node order [a, mid, b].
pub fn p2_edge_trace(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)]
}

/// Physical gradients of the P2 basis inside a triangle.
pub fn p2_grad_physical(
    a: Point,
    b: Point,
    c: Point,
    bary: [f64; 3],
) -> ([Vector2<f64>; 6], f64) {
    let j = Matrix2::from_columns(&[b - a, c - a]);
    let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
    let inv_t = Matrix2::new(j[(1, 1)], -j[(1, 0)], -j[(0, 1)], j[(0, 0)]) / det;
    let g_ref = p2_grad_ref(bary);
    let mut g = [Vector2::zeros(); 6];
    for (gi, gr) in g.iter_mut().zip(&g_ref) {
        *gi = inv_t * gr;
    }
    (g, 0.5 * det)
}

pub const N_QP: usize = TRI_ORDER4.len();

/// Per-element data at the standard assembly rule.
#[derive(Clone, Debug)]
pub struct ElemGeom {
    /// Global P2 node ids: [v0, v1, v2, m01, m12, m20].
    pub p2: [usize; 6],
    pub area: f64,
    pub qp_x: [Point; N_QP],
    pub shape: [[f64; 6]; N_QP],
    pub grad: [[Vector2<f64>; 6]; N_QP],
}

impl ElemGeom {
    pub fn build(mesh: &Mesh, tri: usize, p2: [usize; 6]) -> Self {
        let [ia, ib, ic] = mesh.triangles[tri];
        let (a, b, c) = (mesh.nodes[ia], mesh.nodes[ib], mesh.nodes[ic]);
        let mut qp_x = [Point::zeros(); N_QP];
        let mut shape = [[0.0; 6]; N_QP];
        let mut grad = [[Vector2::zeros(); 6]; N_QP];
        let mut area = 0.0;
        for (q, pt) in TRI_ORDER4.iter().enumerate() {
            qp_x[q] = pt.bary[0] * a + pt.bary[1] * b + pt.bary[2] * c;
            shape[q] = p2_shape(pt.bary);
            let (g, ar) = p2_grad_physical(a, b, c, pt.bary);
            grad[q] = g;
            area = ar;
        }
        ElemGeom { p2, area, qp_x, shape, grad }
    }

    /// Quadrature weight (physical) at point q.
    #[inline]
    pub fn weight(&self, q: usize) -> f64 {
        TRI_ORDER4[q].weight * self.area
    }

    /// Velocity gradient at quadrature point q from nodal values.
    #[inline]
    pub fn velocity_gradient(&self, q: usize, u: &[Vector2<f64>]) -> Matrix2<f64> {
        let mut g = Matrix2::zeros();
        for i in 0..6 {
            let ui = u[self.p2[i]];
            let gi = self.grad[q][i];
            g[(0, 0)] += ui.x * gi.x;
            g[(0, 1)] += ui.x * gi.y;
            g[(1, 0)] += ui.y * gi.x;
            g[(1, 1)] += ui.y * gi.y;
        }
        g
    }
}

/// Per-boundary-edge data at the 3-point edge rule.
#[derive(Clone, Debug)]
pub struct BEdgeGeom {
    /// Global P2 node ids on the edge: [a, mid, b].
    pub p2: [usize; 3],
    pub tag: BoundaryTag,
    pub length: f64,
    pub frame: EdgeFrame,
    pub qp_x: Vec<Point>,
    pub trace: Vec<[f64; 3]>,
}

impl BEdgeGeom {
    pub fn build(
        mesh: &Mesh,
        edge_nodes: [usize; 2],
        mid: usize,
        tag: BoundaryTag,
        frame: EdgeFrame,
        rule: &[EdgePoint],
    ) -> Self {
        let a = mesh.nodes[edge_nodes[0]];
        let b = mesh.nodes[edge_nodes[1]];
        let length = (b - a).norm();
        let qp_x = rule.iter().map(|p| a + p.t * (b - a)).collect();
        let trace = rule.iter().map(|p| p2_edge_trace(p.t)).collect();
        BEdgeGeom { p2: [edge_nodes[0], mid, edge_nodes[1]], tag, length, frame, qp_x, trace }
    }
}

/// Evaluate the P1 interpolant of vertex values at a rule point.
#[inline]
pub fn p1_interp(bary: [f64; 3], values: [f64; 3]) -> f64 {
    bary[0] * values[0] + bary[1] * values[1] + bary[2] * values[2]
}

pub fn tri_point_position(mesh: &Mesh, tri: usize, pt: &TriPoint) -> Point {
    let [a, b, c] = mesh.triangles[tri];
    pt.bary[0] * mesh.nodes[a] + pt.bary[1] * mesh.nodes[b] + pt.bary[2] * mesh.nodes[c]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn p2_partition_of_unity() {
        for bary in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [1.0 / 3.0; 3]] {
            let s = p2_shape(bary);
            assert_relative_eq!(s.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            let g = p2_grad_ref(bary);
            let sum: Vector2<f64> = g.iter().sum();
            assert!(sum.norm() < 1e-13);
        }
    }

    #[test]
    fn p2_kronecker_property() {
        // Vertex nodes.
        let verts = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (i, b) in verts.iter().enumerate() {
            let s = p2_shape(*b);
            for (j, v) in s.iter().enumerate() {
                assert_relative_eq!(*v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
        // Midpoints.
        let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        for (k, b) in mids.iter().enumerate() {
            let s = p2_shape(*b);
            for (j, v) in s.iter().enumerate() {
                assert_relative_eq!(*v, if j == k + 3 { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let bary = [0.25, 0.35, 0.4];
        let h = 1e-6;
        let g = p2_grad_ref(bary);
        for i in 0..6 {
            // d/dxi with lambda = (1-x-y, x, y)
            let sp = p2_shape([bary[0] - h, bary[1] + h, bary[2]]);
            let sm = p2_shape([bary[0] + h, bary[1] - h, bary[2]]);
            assert_relative_eq!(g[i].x, (sp[i] - sm[i]) / (2.0 * h), epsilon = 1e-8);
            let sp = p2_shape([bary[0] - h, bary[1], bary[2] + h]);
            let sm = p2_shape([bary[0] + h, bary[1], bary[2] - h]);
            assert_relative_eq!(g[i].y, (sp[i] - sm[i]) / (2.0 * h), epsilon = 1e-8);
        }
    }

    #[test]
    fn edge_trace_matches_quadratic_interpolation() {
        for t in [0.0, 0.21, 0.5, 0.77, 1.0] {
            let tr = p2_edge_trace(t);
            assert_relative_eq!(tr.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            // Reproduces t^2 exactly from nodal values at t = 0, 1/2, 1.
            let interp = tr[0] * 0.0 + tr[1] * 0.25 + tr[2] * 1.0;
            assert_relative_eq!(interp, t * t, epsilon = 1e-14);
        }
    }
}
