//! Kernel regularization: a compactly supported smooth bump, a discrete
//! convolution operator over the mesh quadrature cloud, and the regularized
//! normal traction on the slip wall.
//!
//! The continuum operator convolves with `omega(|x - x'|)` over the plane; the
//! discrete form is a Shepard-normalized quadrature sum over the part of the
//! ball that lies inside the domain. Renormalizing by the in-domain kernel
//! mass preserves constants exactly and avoids inventing exterior values for
//! the extension of the field.

use crate::mesh::{Mesh, Point};
use crate::models::{mu_angle, MuSettings, ViscosityModel};
use crate::parallel::map_collect;
use crate::quadrature::TRI_ORDER4;
use nalgebra::Vector2;

/// Smooth bump kernel `omega(z) = C exp(-1/(1 - (z/a)^2))` for `z < a`,
/// zero otherwise, with `C` normalizing the integral over the plane to one.
#[derive(Clone, Copy, Debug)]
pub struct MollifierKernel {
    pub radius: f64,
    pub norm_const: f64,
}

impl MollifierKernel {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0, "kernel radius must be positive");
        // C * 2 pi a^2 * int_0^1 t exp(-1/(1-t^2)) dt = 1.
        let i0 = bump_radial_moment();
        MollifierKernel { radius, norm_const: 1.0 / (2.0 * std::f64::consts::PI * radius * radius * i0) }
    }

    /// Default radius: twice the mean boundary edge length, small but large
    /// enough that each kernel ball holds several quadrature points.
    pub fn for_mesh(mesh: &Mesh) -> Self {
        Self::new(2.0 * mesh.mean_boundary_edge_length())
    }

    /// Kernel profile at distance `r >= 0`.
    pub fn weight(&self, r: f64) -> f64 {
        let t = r / self.radius;
        if t >= 1.0 {
            0.0
        } else {
            self.norm_const * (-1.0 / (1.0 - t * t)).exp()
        }
    }
}

/// `int_0^1 t exp(-1/(1-t^2)) dt` by composite 5-point Gauss.
fn bump_radial_moment() -> f64 {
    let rule = crate::quadrature::edge_gauss5();
    let n = 256;
    let mut acc = 0.0;
    for k in 0..n {
        let lo = k as f64 / n as f64;
        let w = 1.0 / n as f64;
        for p in rule {
            let t = lo + p.t * w;
            let denom = 1.0 - t * t;
            if denom > 0.0 {
                acc += w * p.weight * t * (-1.0 / denom).exp();
            }
        }
    }
    acc
}

/// Volume quadrature points of the whole mesh with a uniform-grid spatial
/// index. Point order is element-major in the order of the assembly rule, so
/// field samples computed per element line up.
#[derive(Clone, Debug)]
pub struct QuadCloud {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub elem: Vec<usize>,
    pub bary: Vec<[f64; 3]>,
    grid: Grid,
}

#[derive(Clone, Debug)]
struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl Grid {
    fn cell_of(&self, p: Point) -> (usize, usize) {
        let i = ((p.x - self.x0) / self.cell).floor().max(0.0) as usize;
        let j = ((p.y - self.y0) / self.cell).floor().max(0.0) as usize;
        (i.min(self.nx - 1), j.min(self.ny - 1))
    }
}

impl QuadCloud {
    pub fn build(mesh: &Mesh, radius: f64) -> Self {
        let n = mesh.triangles.len() * TRI_ORDER4.len();
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut elem = Vec::with_capacity(n);
        let mut bary = Vec::with_capacity(n);
        for t in 0..mesh.triangles.len() {
            let area = mesh.triangle_area(t);
            for pt in TRI_ORDER4.iter() {
                points.push(crate::assembly::basis::tri_point_position(mesh, t, pt));
                weights.push(pt.weight * area);
                elem.push(t);
                bary.push(pt.bary);
            }
        }

        let mut min = points[0];
        let mut max = points[0];
        for p in &points {
            min = Point::new(min.x.min(p.x), min.y.min(p.y));
            max = Point::new(max.x.max(p.x), max.y.max(p.y));
        }
        let extent = (max - min).norm().max(1e-30);
        let cell = radius.max(extent / 512.0);
        let nx = (((max.x - min.x) / cell).ceil() as usize + 1).max(1);
        let ny = (((max.y - min.y) / cell).ceil() as usize + 1).max(1);
        let mut grid = Grid { x0: min.x, y0: min.y, cell, nx, ny, bins: vec![Vec::new(); nx * ny] };
        for (k, p) in points.iter().enumerate() {
            let (i, j) = grid.cell_of(*p);
            grid.bins[j * nx + i].push(k as u32);
        }
        QuadCloud { points, weights, elem, bary, grid }
    }

    /// Indices of quadrature points within `radius` of `x`, ascending.
    fn neighbors(&self, x: Point, radius: f64) -> Vec<u32> {
        let g = &self.grid;
        let reach = (radius / g.cell).ceil() as isize;
        let (ci, cj) = g.cell_of(x);
        let mut out = Vec::new();
        for dj in -reach..=reach {
            let j = cj as isize + dj;
            if j < 0 || j >= g.ny as isize {
                continue;
            }
            for di in -reach..=reach {
                let i = ci as isize + di;
                if i < 0 || i >= g.nx as isize {
                    continue;
                }
                for &k in &g.bins[j as usize * g.nx + i as usize] {
                    if (self.points[k as usize] - x).norm() < radius {
                        out.push(k);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Result of mollifying one or more fields at a set of evaluation points.
#[derive(Clone, Debug)]
pub struct MollifyOutput {
    /// One vector per input field, aligned with the evaluation points.
    pub values: Vec<Vec<f64>>,
    /// Points whose kernel ball contained no quadrature point; the fallback
    /// (unmollified) value was used there.
    pub underresolved: Vec<bool>,
}

/// Shepard-normalized kernel averages of several fields sharing one cloud.
/// `fields_at_qp` are samples on the cloud; `fallback_at_eval` supply values
/// where the kernel is underresolved. Summation order is fixed (ascending
/// quadrature index), so results are bitwise reproducible.
pub fn mollify_multi(
    cloud: &QuadCloud,
    kernel: &MollifierKernel,
    fields_at_qp: &[&[f64]],
    fallback_at_eval: &[&[f64]],
    eval: &[Point],
) -> MollifyOutput {
    assert_eq!(fields_at_qp.len(), fallback_at_eval.len());
    let nf = fields_at_qp.len();
    let per_point: Vec<(Vec<f64>, bool)> = map_collect(eval.len(), |at| {
        let x = eval[at];
        let neigh = cloud.neighbors(x, kernel.radius);
        let mut den = 0.0;
        let mut num = vec![0.0; nf];
        for &k in &neigh {
            let k = k as usize;
            let w = cloud.weights[k] * kernel.weight((cloud.points[k] - x).norm());
            den += w;
            for (f, acc) in fields_at_qp.iter().zip(num.iter_mut()) {
                *acc += w * f[k];
            }
        }
        if den <= 0.0 {
            (fallback_at_eval.iter().map(|f| f[at]).collect(), true)
        } else {
            (num.into_iter().map(|v| v / den).collect(), false)
        }
    });
    let mut values = vec![Vec::with_capacity(eval.len()); nf];
    let mut underresolved = Vec::with_capacity(eval.len());
    for (vals, under) in per_point {
        for (f, v) in values.iter_mut().zip(vals) {
            f.push(v);
        }
        underresolved.push(under);
    }
    MollifyOutput { values, underresolved }
}

/// Mollify a P1 vertex field, returning nodal values. Nodes whose ball is
/// underresolved keep their original value and are reported.
pub fn mollify_nodal_field(
    mesh: &Mesh,
    kernel: &MollifierKernel,
    nodal: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(nodal.len(), mesh.nodes.len());
    let cloud = QuadCloud::build(mesh, kernel.radius);
    mollify_nodal_with(&cloud, kernel, mesh, nodal)
}

/// Same as `mollify_nodal_field` with a prebuilt cloud.
pub fn mollify_nodal_with(
    cloud: &QuadCloud,
    kernel: &MollifierKernel,
    mesh: &Mesh,
    nodal: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    let at_qp: Vec<f64> = cloud
        .elem
        .iter()
        .zip(&cloud.bary)
        .map(|(&t, b)| {
            let tri = mesh.triangles[t];
            b[0] * nodal[tri[0]] + b[1] * nodal[tri[1]] + b[2] * nodal[tri[2]]
        })
        .collect();
    let out = mollify_multi(cloud, kernel, &[&at_qp], &[nodal], &mesh.nodes);
    let under = out
        .underresolved
        .iter()
        .enumerate()
        .filter_map(|(i, u)| u.then_some(i))
        .collect();
    (out.values.into_iter().next().unwrap(), under)
}

/// Regularized normal traction on the slip wall, evaluated at boundary
/// quadrature points.
#[derive(Clone, Debug)]
pub struct TractionTrace {
    pub values: Vec<f64>,
    /// Count of evaluation points that fell back to unmollified values.
    pub underresolved_points: usize,
}

pub struct TractionInputs<'a> {
    pub cloud: &'a QuadCloud,
    pub kernel: &'a MollifierKernel,
    pub viscosity: &'a ViscosityModel,
    pub mu_settings: &'a MuSettings,
    /// Threshold scale: the angle function is bypassed where
    /// |E| < 1e-14 * e_max.
    pub e_max: f64,
    /// Pressure samples: (cloud values, direct values at the eval points).
    pub pressure: (&'a [f64], &'a [f64]),
    /// Velocity component samples, same layout.
    pub velocity: [(&'a [f64], &'a [f64]); 2],
    /// Projected strain components (e11, e12, e22), same layout.
    pub strain: [(&'a [f64], &'a [f64]); 3],
    pub eval_points: &'a [Point],
    pub normals: &'a [Vector2<f64>],
    pub e_field: &'a [Vector2<f64>],
}

/// Compute `F_rnu = -(Pp) + 2 phi(I(Pu), |E|, mu(Pu, E)) (eps(Pu) nu . nu)`
/// at the evaluation points, together with the squared tangential mollified
/// velocity (used by the mollified-velocity slip variant).
pub fn regularized_normal_traction(inp: &TractionInputs<'_>) -> (TractionTrace, Vec<f64>) {
    let fields_at_qp = [
        inp.pressure.0,
        inp.velocity[0].0,
        inp.velocity[1].0,
        inp.strain[0].0,
        inp.strain[1].0,
        inp.strain[2].0,
    ];
    let fallbacks = [
        inp.pressure.1,
        inp.velocity[0].1,
        inp.velocity[1].1,
        inp.strain[0].1,
        inp.strain[1].1,
        inp.strain[2].1,
    ];
    let out = mollify_multi(inp.cloud, inp.kernel, &fields_at_qp, &fallbacks, inp.eval_points);
    let [p, u1, u2, e11, e12, e22] = match &out.values[..] {
        [a, b, c, d, e, f] => [a, b, c, d, e, f],
        _ => unreachable!(),
    };
    let mut values = Vec::with_capacity(inp.eval_points.len());
    let mut slip_speed_sq = Vec::with_capacity(inp.eval_points.len());
    for k in 0..inp.eval_points.len() {
        let nu = inp.normals[k];
        let e_vec = inp.e_field[k];
        let pu = Vector2::new(u1[k], u2[k]);
        let invariant = e11[k] * e11[k] + e22[k] * e22[k] + 2.0 * e12[k] * e12[k];
        let e_mag = e_vec.norm();
        let mu = if e_mag < 1e-14 * inp.e_max.max(f64::MIN_POSITIVE) {
            0.0
        } else {
            mu_angle(pu, e_vec, inp.mu_settings).unwrap_or(0.0)
        };
        let (phi, _) = inp.viscosity.eval(invariant, e_mag, mu);
        let eps_nn = e11[k] * nu.x * nu.x + 2.0 * e12[k] * nu.x * nu.y + e22[k] * nu.y * nu.y;
        values.push(-p[k] + 2.0 * phi * eps_nn);
        let tangential_sq = (pu.norm_squared() - pu.dot(&nu).powi(2)).max(0.0);
        slip_speed_sq.push(tangential_sq);
    }
    let underresolved_points = out.underresolved.iter().filter(|u| **u).count();
    (TractionTrace { values, underresolved_points }, slip_speed_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{refine_uniform, structured_rectangle, Side};
    use approx::assert_relative_eq;

    #[test]
    fn kernel_profile_closed_forms() {
        let k = MollifierKernel::new(0.5);
        assert_eq!(k.weight(0.5), 0.0);
        assert_eq!(k.weight(0.7), 0.0);
        assert_relative_eq!(k.weight(0.0), k.norm_const * (-1.0f64).exp(), max_relative = 1e-15);
        // 1 - (r/a)^2 = 1/2 at r = a/sqrt(2).
        assert_relative_eq!(
            k.weight(0.5 / 2.0f64.sqrt()),
            k.norm_const * (-2.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn kernel_integrates_to_one_over_plane() {
        // Radial quadrature of 2 pi r omega(r) over [0, a].
        let k = MollifierKernel::new(0.37);
        let n = 4000;
        let mut acc = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) / n as f64 * k.radius;
            acc += 2.0 * std::f64::consts::PI * r * k.weight(r) * (k.radius / n as f64);
        }
        assert_relative_eq!(acc, 1.0, max_relative = 1e-6);
    }

    fn test_mesh() -> Mesh {
        let m = structured_rectangle(4, 4, 1.0, 1.0, &[Side::Bottom]);
        refine_uniform(&m)
    }

    #[test]
    fn preserves_constants_exactly() {
        let mesh = test_mesh();
        let kernel = MollifierKernel::for_mesh(&mesh);
        let f = vec![3.7; mesh.nodes.len()];
        let (pf, under) = mollify_nodal_field(&mesh, &kernel, &f);
        assert!(under.is_empty());
        for v in pf {
            assert_relative_eq!(v, 3.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_field_fixed_on_interior_symmetric_stencils() {
        // Structured mesh: the quadrature cloud is point-symmetric around
        // interior nodes, so odd moments cancel and linear fields are
        // reproduced up to quadrature tolerance.
        let mesh = structured_rectangle(8, 8, 1.0, 1.0, &[Side::Bottom]);
        let kernel = MollifierKernel::new(0.2);
        let f: Vec<f64> = mesh.nodes.iter().map(|p| p.x).collect();
        let (pf, _) = mollify_nodal_field(&mesh, &kernel, &f);
        for (i, p) in mesh.nodes.iter().enumerate() {
            let d = p.x.min(1.0 - p.x).min(p.y).min(1.0 - p.y);
            if d > kernel.radius {
                assert_relative_eq!(pf[i], f[i], epsilon = 5e-4);
            }
        }
    }

    /// Dense-quadrature convolution oracle: same Shepard normalization, but
    /// sampled on a twice-refined cloud.
    fn dense_oracle(mesh: &Mesh, kernel: &MollifierKernel, nodal: &[f64], x: Point) -> f64 {
        let fine = refine_uniform(&refine_uniform(mesh));
        // Transfer the P1 field by interpolation (vertices keep indices).
        let f_fine: Vec<f64> = fine
            .nodes
            .iter()
            .map(|p| {
                let (t, b) = mesh.locate(*p).unwrap();
                let tri = mesh.triangles[t];
                b[0] * nodal[tri[0]] + b[1] * nodal[tri[1]] + b[2] * nodal[tri[2]]
            })
            .collect();
        let cloud = QuadCloud::build(&fine, kernel.radius);
        let at_qp: Vec<f64> = cloud
            .elem
            .iter()
            .zip(&cloud.bary)
            .map(|(&t, b)| {
                let tri = fine.triangles[t];
                b[0] * f_fine[tri[0]] + b[1] * f_fine[tri[1]] + b[2] * f_fine[tri[2]]
            })
            .collect();
        let out = mollify_multi(&cloud, kernel, &[&at_qp], &[&[0.0]], &[x]);
        out.values[0][0]
    }

    #[test]
    fn matches_dense_quadrature_oracle_on_linear_field() {
        let mesh = structured_rectangle(6, 6, 1.0, 1.0, &[Side::Bottom]);
        let kernel = MollifierKernel::new(0.25);
        let f: Vec<f64> = mesh.nodes.iter().map(|p| 2.0 * p.x - 0.5 * p.y).collect();
        let (pf, _) = mollify_nodal_field(&mesh, &kernel, &f);
        for (i, p) in mesh.nodes.iter().enumerate() {
            let d = p.x.min(1.0 - p.x).min(p.y).min(1.0 - p.y);
            if d > kernel.radius {
                let oracle = dense_oracle(&mesh, &kernel, &f, *p);
                assert_relative_eq!(pf[i], oracle, epsilon = 2e-4);
            }
        }
    }

    #[test]
    fn smooth_field_error_decays_quadratically_in_radius() {
        // Fixed fine mesh, shrinking radius: interior error of P f - f for a
        // smooth field decays like a^2 until the kernel is underresolved.
        let mesh = structured_rectangle(16, 16, 1.0, 1.0, &[Side::Bottom]);
        let f: Vec<f64> = mesh.nodes.iter().map(|p| (2.0 * p.x).sin() * (1.5 * p.y).cos()).collect();
        let mut errors = Vec::new();
        let radii = [0.4, 0.2, 0.1];
        for a in radii {
            let kernel = MollifierKernel::new(a);
            let (pf, _) = mollify_nodal_field(&mesh, &kernel, &f);
            let mut err: f64 = 0.0;
            for (i, p) in mesh.nodes.iter().enumerate() {
                let d = p.x.min(1.0 - p.x).min(p.y).min(1.0 - p.y);
                if d > 0.45 {
                    err = err.max((pf[i] - f[i]).abs());
                }
            }
            errors.push(err);
        }
        let rate1 = (errors[0] / errors[1]).log2();
        let rate2 = (errors[1] / errors[2]).log2();
        assert!(
            rate1 > 1.7 && rate2 > 1.7,
            "expected quadratic decay, rates {rate1:.2}, {rate2:.2}, errors {errors:?}"
        );
    }

    #[test]
    fn underresolved_kernel_falls_back_to_field() {
        // Radius far below the element size: no quadrature point in any ball.
        let mesh = structured_rectangle(4, 4, 1.0, 1.0, &[Side::Bottom]);
        let kernel = MollifierKernel::new(1e-6);
        let f: Vec<f64> = mesh.nodes.iter().map(|p| p.x + p.y).collect();
        let (pf, under) = mollify_nodal_field(&mesh, &kernel, &f);
        assert!(!under.is_empty());
        for i in &under {
            assert_eq!(pf[*i], f[*i]);
        }
    }

    #[test]
    fn linearity_and_max_bounds() {
        let mesh = test_mesh();
        let kernel = MollifierKernel::for_mesh(&mesh);
        let f: Vec<f64> = mesh.nodes.iter().map(|p| (3.0 * p.x).sin() + p.y).collect();
        let g: Vec<f64> = mesh.nodes.iter().map(|p| p.x * p.y - 0.3).collect();
        let (pf, _) = mollify_nodal_field(&mesh, &kernel, &f);
        let (pg, _) = mollify_nodal_field(&mesh, &kernel, &g);
        let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.5 * a - 1.5 * b).collect();
        let (pc, _) = mollify_nodal_field(&mesh, &kernel, &combo);
        let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let fmax = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..pf.len() {
            assert_relative_eq!(pc[i], 2.5 * pf[i] - 1.5 * pg[i], epsilon = 1e-13);
            // Contraction in the max norm. The quadrature samples interpolate
            // the P1 field inside elements, so nodal extrema bound them.
            assert!(pf[i] >= fmin - 1e-13 && pf[i] <= fmax + 1e-13);
        }
    }
}
