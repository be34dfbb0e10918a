//! Operator assembly over the Taylor-Hood spaces.
//!
//! Element locals are computed in parallel and scattered into triplet lists
//! sequentially in element order; the compression step sums duplicates in a
//! fixed order, so assembled operators do not depend on the thread count.

use super::basis::{BEdgeGeom, ElemGeom, N_QP};
use super::dof::DofMap;
use super::{FieldSpec, TractionSpec};
use crate::mesh::Mesh;
use crate::models::{SlipModel, ViscosityModel};
use crate::mollify::TractionTrace;
use crate::parallel::map_collect;
use crate::quadrature::{edge_gauss3, TRI_ORDER4};
use crate::sparse::TripletList;
use nalgebra::Vector2;

/// Frozen slip-law data for one assembly round: the regularized normal
/// traction at every S1 quadrature point and, for the mollified-velocity slip
/// variant, a fully frozen slip coefficient (which removes the slip
/// nonlinearity from the inner problem).
#[derive(Clone, Debug)]
pub struct SlipFreeze {
    pub traction: TractionTrace,
    pub chi_fixed: Option<Vec<f64>>,
}

impl SlipFreeze {
    /// Zero-traction freeze (for linear problems and operator probes).
    pub fn zero(n_points: usize) -> Self {
        SlipFreeze {
            traction: TractionTrace { values: vec![0.0; n_points], underresolved_points: 0 },
            chi_fixed: None,
        }
    }
}

type Local = ([f64; 12], Option<Box<[[f64; 12]; 12]>>);

fn scatter_locals(
    dof: &DofMap,
    nodes_of: impl Fn(usize) -> Vec<usize>,
    locals: &[Local],
    residual: &mut [f64],
    jac: &mut Option<&mut TripletList>,
) {
    for (idx, (r_loc, k_loc)) in locals.iter().enumerate() {
        let nodes = nodes_of(idx);
        let n = nodes.len();
        for (i, &ni) in nodes.iter().enumerate() {
            let ri = Vector2::new(r_loc[2 * i], r_loc[2 * i + 1]);
            for (dof_a, dir_a) in &dof.node_dofs[ni] {
                residual[*dof_a] += dir_a.dot(&ri);
            }
        }
        if let (Some(k_loc), Some(tri)) = (k_loc, jac.as_deref_mut()) {
            for (i, &ni) in nodes.iter().enumerate() {
                for (j, &nj) in nodes.iter().enumerate().take(n) {
                    let k00 = k_loc[2 * i][2 * j];
                    let k01 = k_loc[2 * i][2 * j + 1];
                    let k10 = k_loc[2 * i + 1][2 * j];
                    let k11 = k_loc[2 * i + 1][2 * j + 1];
                    for (dof_a, da) in &dof.node_dofs[ni] {
                        for (dof_b, db) in &dof.node_dofs[nj] {
                            let v = da.x * (k00 * db.x + k01 * db.y)
                                + da.y * (k10 * db.x + k11 * db.y);
                            tri.push(*dof_a, *dof_b, v);
                        }
                    }
                }
            }
        }
    }
}

/// Residual and (optionally) Jacobian of the viscous operator
/// `h -> 2 int phi(I(u), |E|, mu) eps(u) : eps(h)` with a frozen angle field.
///
/// The Jacobian integrand is
/// `2 [phi eps(du):eps(h) + 2 phi'(I) (eps(u):eps(du)) (eps(u):eps(h))]`,
/// symmetric in `du` and `h`.
pub fn assemble_viscous(
    dof: &DofMap,
    mesh: &Mesh,
    elems: &[ElemGeom],
    viscosity: &ViscosityModel,
    e_at_qp: &[[f64; N_QP]],
    mu_vertex: &[f64],
    u_nodal: &[Vector2<f64>],
    want_jacobian: bool,
) -> (Vec<f64>, Option<TripletList>) {
    let locals: Vec<Local> = map_collect(elems.len(), |t| {
        let el = &elems[t];
        let tri = mesh.triangles[t];
        let mu_v = [mu_vertex[tri[0]], mu_vertex[tri[1]], mu_vertex[tri[2]]];
        let mut r = [0.0f64; 12];
        let mut k = want_jacobian.then(|| Box::new([[0.0f64; 12]; 12]));
        for q in 0..N_QP {
            let w = el.weight(q);
            let g = el.velocity_gradient(q, u_nodal);
            let e11 = g[(0, 0)];
            let e22 = g[(1, 1)];
            let e12 = 0.5 * (g[(0, 1)] + g[(1, 0)]);
            let invariant = e11 * e11 + e22 * e22 + 2.0 * e12 * e12;
            let bary = TRI_ORDER4[q].bary;
            let mu = (bary[0] * mu_v[0] + bary[1] * mu_v[1] + bary[2] * mu_v[2]).clamp(0.0, 1.0);
            let (phi, dphi) = viscosity.eval(invariant, e_at_qp[t][q], mu);
            let mut c = [[0.0f64; 2]; 6];
            for i in 0..6 {
                let gi = el.grad[q][i];
                c[i][0] = e11 * gi.x + e12 * gi.y;
                c[i][1] = e12 * gi.x + e22 * gi.y;
            }
            for i in 0..6 {
                r[2 * i] += w * 2.0 * phi * c[i][0];
                r[2 * i + 1] += w * 2.0 * phi * c[i][1];
            }
            if let Some(k) = k.as_deref_mut() {
                for i in 0..6 {
                    let gi = el.grad[q][i];
                    for j in 0..6 {
                        let gj = el.grad[q][j];
                        let xx = gi.x * gj.x + 0.5 * gi.y * gj.y;
                        let xy = 0.5 * gi.y * gj.x;
                        let yx = 0.5 * gi.x * gj.y;
                        let yy = 0.5 * gi.x * gj.x + gi.y * gj.y;
                        k[2 * i][2 * j] += w * (2.0 * phi * xx + 4.0 * dphi * c[i][0] * c[j][0]);
                        k[2 * i][2 * j + 1] +=
                            w * (2.0 * phi * xy + 4.0 * dphi * c[i][0] * c[j][1]);
                        k[2 * i + 1][2 * j] +=
                            w * (2.0 * phi * yx + 4.0 * dphi * c[i][1] * c[j][0]);
                        k[2 * i + 1][2 * j + 1] +=
                            w * (2.0 * phi * yy + 4.0 * dphi * c[i][1] * c[j][1]);
                    }
                }
            }
        }
        (r, k)
    });

    let mut residual = vec![0.0; dof.n_velocity_dofs];
    let mut jac = want_jacobian
        .then(|| TripletList::with_capacity(dof.n_velocity_dofs, dof.n_velocity_dofs, 144 * elems.len()));
    scatter_locals(dof, |t| elems[t].p2.to_vec(), &locals, &mut residual, &mut jac.as_mut());
    (residual, jac)
}

/// Residual and Jacobian of the slip operator
/// `h -> int_{S1} chi(F_rnu, |u_tau|^2) u_tau . h_tau`, with the normal
/// traction (and optionally the whole coefficient) frozen.
pub fn assemble_slip(
    dof: &DofMap,
    bedges: &[BEdgeGeom],
    slip: &SlipModel,
    freeze: &SlipFreeze,
    u_nodal: &[Vector2<f64>],
    want_jacobian: bool,
) -> (Vec<f64>, Option<TripletList>) {
    let rule = edge_gauss3();
    let s1 = &dof.s1_edges;
    let locals: Vec<Local> = map_collect(s1.len(), |ord| {
        let edge = &bedges[s1[ord]];
        let tau = edge.frame.tangent;
        let nu = edge.frame.normal;
        let mut r = [0.0f64; 12];
        let mut k = want_jacobian.then(|| Box::new([[0.0f64; 12]; 12]));
        for (q, gp) in rule.iter().enumerate() {
            let w = gp.weight * edge.length;
            let tr = edge.trace[q];
            let mut u = Vector2::zeros();
            for (i, &n) in edge.p2.iter().enumerate() {
                u += tr[i] * u_nodal[n];
            }
            let u_tau = u - u.dot(&nu) * nu;
            let u_t = u_tau.dot(&tau);
            let speed_sq = u_tau.norm_squared();
            let (chi, dchi) = match &freeze.chi_fixed {
                Some(cf) => (cf[ord * rule.len() + q], 0.0),
                None => slip.eval(freeze.traction.values[ord * rule.len() + q], speed_sq),
            };
            for i in 0..3 {
                r[2 * i] += w * chi * u_t * tr[i] * tau.x;
                r[2 * i + 1] += w * chi * u_t * tr[i] * tau.y;
            }
            if let Some(k) = k.as_deref_mut() {
                let coef = chi + 2.0 * dchi * u_t * u_t;
                for i in 0..3 {
                    for j in 0..3 {
                        let base = w * coef * tr[i] * tr[j];
                        k[2 * i][2 * j] += base * tau.x * tau.x;
                        k[2 * i][2 * j + 1] += base * tau.x * tau.y;
                        k[2 * i + 1][2 * j] += base * tau.y * tau.x;
                        k[2 * i + 1][2 * j + 1] += base * tau.y * tau.y;
                    }
                }
            }
        }
        (r, k)
    });

    let mut residual = vec![0.0; dof.n_velocity_dofs];
    let mut jac = want_jacobian
        .then(|| TripletList::with_capacity(dof.n_velocity_dofs, dof.n_velocity_dofs, 36 * s1.len()));
    scatter_locals(
        dof,
        |ord| bedges[s1[ord]].p2.to_vec(),
        &locals,
        &mut residual,
        &mut jac.as_mut(),
    );
    (residual, jac)
}

/// Divergence operator: rows are pressure unknowns, columns velocity dofs,
/// `B[q, i] = int psi_q div phi_i`. Exact at the assembly rule.
pub fn assemble_div(dof: &DofMap, mesh: &Mesh, elems: &[ElemGeom]) -> TripletList {
    let mut trip = TripletList::with_capacity(dof.n_pressure_dofs, dof.n_velocity_dofs, 36 * elems.len());
    for (t, el) in elems.iter().enumerate() {
        let tri = mesh.triangles[t];
        for q in 0..N_QP {
            let w = el.weight(q);
            let bary = TRI_ORDER4[q].bary;
            for (p_loc, &row) in tri.iter().enumerate() {
                let psi = bary[p_loc];
                for (i, &node) in el.p2.iter().enumerate() {
                    let g = el.grad[q][i];
                    for (dof_i, dir) in &dof.node_dofs[node] {
                        trip.push(row, *dof_i, w * psi * g.dot(dir));
                    }
                }
            }
        }
    }
    trip
}

/// Divergence penalty matrix `D[i, j] = int div phi_i div phi_j`.
pub fn assemble_div_penalty(dof: &DofMap, elems: &[ElemGeom]) -> TripletList {
    let mut trip =
        TripletList::with_capacity(dof.n_velocity_dofs, dof.n_velocity_dofs, 144 * elems.len());
    for el in elems {
        for q in 0..N_QP {
            let w = el.weight(q);
            for (i, &ni) in el.p2.iter().enumerate() {
                let gi = el.grad[q][i];
                for (j, &nj) in el.p2.iter().enumerate() {
                    let gj = el.grad[q][j];
                    for (dof_a, da) in &dof.node_dofs[ni] {
                        for (dof_b, db) in &dof.node_dofs[nj] {
                            trip.push(*dof_a, *dof_b, w * gi.dot(da) * gj.dot(db));
                        }
                    }
                }
            }
        }
    }
    trip
}

/// Pressure mass matrix (P1).
pub fn assemble_mass_p1(dof: &DofMap, mesh: &Mesh, elems: &[ElemGeom]) -> TripletList {
    let mut trip = TripletList::with_capacity(dof.n_pressure_dofs, dof.n_pressure_dofs, 9 * elems.len());
    for (t, el) in elems.iter().enumerate() {
        let tri = mesh.triangles[t];
        for q in 0..N_QP {
            let w = el.weight(q);
            let bary = TRI_ORDER4[q].bary;
            for (i, &ri) in tri.iter().enumerate() {
                for (j, &rj) in tri.iter().enumerate() {
                    trip.push(ri, rj, w * bary[i] * bary[j]);
                }
            }
        }
    }
    trip
}

/// Load functional: body force over the domain, traction over S2, plus an
/// optional extra boundary load over S1 (manufactured cases fold the slip
/// consistency term there).
pub fn assemble_load(
    dof: &DofMap,
    elems: &[ElemGeom],
    bedges: &[BEdgeGeom],
    body: &FieldSpec,
    traction: &TractionSpec,
    extra_s1: Option<&TractionSpec>,
) -> Vec<f64> {
    let mut load = vec![0.0; dof.n_velocity_dofs];
    for el in elems {
        for q in 0..N_QP {
            let w = el.weight(q);
            let f = body.eval(el.qp_x[q]);
            if f == Vector2::zeros() {
                continue;
            }
            for (i, &node) in el.p2.iter().enumerate() {
                let shape = el.shape[q][i];
                for (dof_i, dir) in &dof.node_dofs[node] {
                    load[*dof_i] += w * shape * f.dot(dir);
                }
            }
        }
    }
    let rule = edge_gauss3();
    let mut boundary = |edges: &[usize], spec: &TractionSpec| {
        for &k in edges {
            let edge = &bedges[k];
            for (q, gp) in rule.iter().enumerate() {
                let w = gp.weight * edge.length;
                let f = spec.eval(edge.qp_x[q], edge.frame.normal);
                for (i, &node) in edge.p2.iter().enumerate() {
                    let shape = edge.trace[q][i];
                    for (dof_i, dir) in &dof.node_dofs[node] {
                        load[*dof_i] += w * shape * f.dot(dir);
                    }
                }
            }
        }
    };
    boundary(&dof.s2_edges, traction);
    if let Some(extra) = extra_s1 {
        boundary(&dof.s1_edges, extra);
    }
    load
}

/// Gram matrix of the Z inner product: strain part plus the S1 tangential
/// boundary mass. Realized by assembling the viscous Jacobian at zero velocity
/// with unit half-viscosity and the slip Jacobian with unit coefficient.
pub fn assemble_gram(
    dof: &DofMap,
    mesh: &Mesh,
    elems: &[ElemGeom],
    bedges: &[BEdgeGeom],
) -> TripletList {
    let zeros = vec![Vector2::zeros(); dof.n_p2_nodes()];
    let e_zero = vec![[0.0; N_QP]; elems.len()];
    let mu_zero = vec![0.0; mesh.nodes.len()];
    let half = ViscosityModel::constant(0.5);
    let (_, vol) =
        assemble_viscous(dof, mesh, elems, &half, &e_zero, &mu_zero, &zeros, true);
    let unit = SlipModel::constant(1.0);
    let freeze = SlipFreeze::zero(3 * dof.s1_edges.len());
    let (_, bnd) = assemble_slip(dof, bedges, &unit, &freeze, &zeros, true);
    let mut g = vol.unwrap();
    g.extend_from(&bnd.unwrap(), 0, 0);
    g
}

/// L2 norm of the divergence of a velocity iterate.
pub fn div_l2_norm(elems: &[ElemGeom], u_nodal: &[Vector2<f64>]) -> f64 {
    let mut acc = 0.0;
    for el in elems {
        for q in 0..N_QP {
            let g = el.velocity_gradient(q, u_nodal);
            let d = g[(0, 0)] + g[(1, 1)];
            acc += el.weight(q) * d * d;
        }
    }
    acc.sqrt()
}

/// Area-weighted projection of the strain components (e11, e12, e22) of a P2
/// velocity onto P1 vertex fields. The gradient is evaluated per element at
/// each of its vertices and averaged with area weights.
pub fn project_strain_to_vertices(
    mesh: &Mesh,
    dof: &DofMap,
    grad_at_vertices: &[[[Vector2<f64>; 6]; 3]],
    u_nodal: &[Vector2<f64>],
) -> [Vec<f64>; 3] {
    let nv = mesh.nodes.len();
    let mut num = [vec![0.0; nv], vec![0.0; nv], vec![0.0; nv]];
    let mut den = vec![0.0; nv];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        for (v_loc, &v) in tri.iter().enumerate() {
            let mut gx = Vector2::zeros();
            let mut gy = Vector2::zeros();
            for i in 0..6 {
                let u = u_nodal[dof.tri_p2[t][i]];
                let g = grad_at_vertices[t][v_loc][i];
                gx += u.x * g;
                gy += u.y * g;
            }
            let e11 = gx.x;
            let e22 = gy.y;
            let e12 = 0.5 * (gx.y + gy.x);
            num[0][v] += area * e11;
            num[1][v] += area * e12;
            num[2][v] += area * e22;
            den[v] += area;
        }
    }
    for comp in &mut num {
        for (v, value) in comp.iter_mut().enumerate() {
            *value /= den[v];
        }
    }
    num
}
