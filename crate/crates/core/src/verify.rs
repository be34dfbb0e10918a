//! Verification battery: discrete inf-sup estimation, the analytic
//! slip-channel oracle, manufactured-solution cases with convergence studies,
//! and monotonicity/Lipschitz probes of the assembled operators.

use crate::assembly::basis::{p2_grad_physical, BEdgeGeom, ElemGeom};
use crate::assembly::{
    assemble_div, assemble_gram, assemble_mass_p1, build_dof_map, DiscreteSystem, DofMap,
    FieldSpec, Frozen, SystemSpec, TractionSpec,
};
use crate::mesh::{structured_rectangle, BoundaryTag, Mesh, Point, Side};
use crate::models::{
    validate_constitutive, ElectricField, MuSettings, SlipModel, ValidationBox, ViscosityModel,
};
use crate::quadrature::{edge_gauss3, edge_gauss5, TRI_ORDER6};
use crate::solver::{solve_mixed, SolveError, SolverConfig, SolverReport};
use crate::sparse::{dot, norm2, CsrMatrix, LltSolver, LuSolver, TripletList};
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unknown verification case '{0}'")]
    UnknownCase(String),
    #[error("eigen iteration stagnated (last relative residual {0:.3e})")]
    EigenStagnation(f64),
    #[error("system build failed: {0}")]
    Build(#[from] crate::assembly::BuildError),
    #[error("model validation failed: {0}")]
    Model(#[from] crate::models::AdmissibilityViolation),
    #[error("solver failed: {0}")]
    Solve(#[from] SolveError),
    #[error("sparse failure: {0}")]
    Sparse(#[from] crate::sparse::SparseError),
}

// ---------------------------------------------------------------------------
// Discrete inf-sup estimation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementPair {
    /// P2 velocity / P1 pressure.
    TaylorHood,
    /// Equal-order P1/P1 control pair; not inf-sup stable, used to show the
    /// estimator detecting degeneration under refinement.
    P1P1,
}

#[derive(Clone, Debug, Serialize)]
pub struct InfSupEstimate {
    pub beta: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Smallest generalized singular value of the divergence operator with
/// respect to the velocity Gram matrix and the pressure mass matrix:
/// `beta^2 = lambda_min(M^-1 B G^-1 B^T)`, computed by shifted inverse
/// iteration. Each inverse application is one bordered saddle solve reusing a
/// sparse factorization.
pub fn smallest_infsup_eigen(
    gram: &CsrMatrix,
    b: &CsrMatrix,
    mass: &CsrMatrix,
    seed: u64,
) -> Result<InfSupEstimate, VerifyError> {
    crate::sparse::ensure_deterministic_solves();
    let nu = gram.nrows;
    let np = mass.nrows;
    assert_eq!(b.nrows, np);
    assert_eq!(b.ncols, nu);
    let gram_llt = LltSolver::new(gram)?;
    let apply_a = |q: &[f64]| -> Vec<f64> {
        let btq = b.matvec_transpose(q);
        let w = gram_llt.solve(&btq);
        b.matvec(&w)
    };
    let mass_vec = |q: &[f64]| mass.matvec(q);

    // Bordered saddle matrix [G B^T; B sigma*M]; x-block of the solution of
    // [G B^T; B sigma*M][w; x] = [0; y] equals -(A - sigma M)^{-1} y.
    let bordered = |sigma: f64| -> Result<LuSolver, VerifyError> {
        let mut trip = TripletList::new(nu + np, nu + np);
        for r in 0..nu {
            let (cols, vals) = gram.row(r);
            for (c, v) in cols.iter().zip(vals) {
                trip.push(r, *c, *v);
            }
        }
        for r in 0..np {
            let (cols, vals) = b.row(r);
            for (c, v) in cols.iter().zip(vals) {
                trip.push(nu + r, *c, *v);
                trip.push(*c, nu + r, *v);
            }
        }
        if sigma != 0.0 {
            for r in 0..np {
                let (cols, vals) = mass.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    trip.push(nu + r, nu + c, sigma * v);
                }
            }
        }
        LuSolver::new(&trip.to_csr()).map_err(VerifyError::from)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..np).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mnorm = |v: &[f64], mv: &[f64]| dot(v, mv).max(0.0).sqrt();

    let mut sigma = 0.0;
    let mut lu = bordered(sigma)?;
    let mut rho = f64::NAN;
    let mut rel_res = f64::INFINITY;
    let mut iterations = 0;
    let tol = 1e-9;
    let max_shifts = 5;
    let mut shifts = 0;

    'outer: loop {
        for _ in 0..40 {
            iterations += 1;
            let my = mass_vec(&q);
            let mut rhs = vec![0.0; nu + np];
            rhs[nu..].copy_from_slice(&my);
            let sol = lu.solve(&rhs);
            let mut x: Vec<f64> = sol[nu..].iter().map(|v| -v).collect();
            let mx = mass_vec(&x);
            let n = mnorm(&x, &mx);
            if !(n.is_finite() && n > 0.0) {
                return Err(VerifyError::EigenStagnation(rel_res));
            }
            for v in &mut x {
                *v /= n;
            }
            q = x;
            let aq = apply_a(&q);
            let mq = mass_vec(&q);
            rho = dot(&q, &aq) / dot(&q, &mq);
            let resid: Vec<f64> = aq.iter().zip(&mq).map(|(a, m)| a - rho * m).collect();
            rel_res = norm2(&resid) / (rho * norm2(&mq)).abs().max(f64::MIN_POSITIVE);
            if rel_res <= tol {
                break 'outer;
            }
        }
        if shifts >= max_shifts {
            if rel_res < 1e-6 {
                break;
            }
            return Err(VerifyError::EigenStagnation(rel_res));
        }
        shifts += 1;
        sigma = 0.9 * rho;
        lu = bordered(sigma)?;
    }

    Ok(InfSupEstimate { beta: rho.max(0.0).sqrt(), iterations, relative_residual: rel_res })
}

fn th_spaces(mesh: &Mesh) -> (DofMap, Vec<ElemGeom>, Vec<BEdgeGeom>) {
    let dof = build_dof_map(mesh);
    let elems: Vec<ElemGeom> = (0..mesh.triangles.len())
        .map(|t| ElemGeom::build(mesh, t, dof.tri_p2[t]))
        .collect();
    let rule = edge_gauss3();
    let bedges: Vec<BEdgeGeom> = mesh
        .boundary_edges
        .iter()
        .enumerate()
        .map(|(k, e)| BEdgeGeom::build(mesh, e.nodes, dof.bedge_p2[k][1], e.tag, dof.frames[k], &rule))
        .collect();
    (dof, elems, bedges)
}

/// Taylor-Hood Gram, divergence, and pressure mass matrices for a mesh.
pub fn th_matrices(mesh: &Mesh) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    let (dof, elems, bedges) = th_spaces(mesh);
    let gram = assemble_gram(&dof, mesh, &elems, &bedges).to_csr();
    let b = assemble_div(&dof, mesh, &elems).to_csr();
    let mass = assemble_mass_p1(&dof, mesh, &elems).to_csr();
    (gram, b, mass)
}

/// Equal-order P1/P1 matrices (control pair for the inf-sup study).
pub fn p1p1_matrices(mesh: &Mesh) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    use crate::mesh::boundary_frames;
    let nv = mesh.nodes.len();
    let frames = boundary_frames(mesh);

    // Vertex constraints from S1 edges, same corner rule as the P2 space.
    #[derive(Clone, Copy, PartialEq)]
    enum C {
        Free,
        Slip(Vector2<f64>, Vector2<f64>),
        Pinned,
    }
    let mut cons = vec![C::Free; nv];
    for (k, e) in mesh.boundary_edges.iter().enumerate() {
        if e.tag != BoundaryTag::S1 {
            continue;
        }
        let f = frames[k];
        for &n in &e.nodes {
            cons[n] = match cons[n] {
                C::Free => C::Slip(f.normal, f.tangent),
                C::Slip(nrm, tan) => {
                    if nrm.dot(&f.normal).abs() > 1.0 - 1e-9 {
                        C::Slip(nrm, tan)
                    } else {
                        C::Pinned
                    }
                }
                C::Pinned => C::Pinned,
            };
        }
    }
    let mut node_dofs: Vec<Vec<(usize, Vector2<f64>)>> = Vec::with_capacity(nv);
    let mut next = 0;
    for c in &cons {
        let d = match c {
            C::Free => {
                let d = vec![(next, Vector2::new(1.0, 0.0)), (next + 1, Vector2::new(0.0, 1.0))];
                next += 2;
                d
            }
            C::Slip(_, t) => {
                let d = vec![(next, *t)];
                next += 1;
                d
            }
            C::Pinned => Vec::new(),
        };
        node_dofs.push(d);
    }
    let n_dofs = next;

    let mut gram_t = TripletList::new(n_dofs, n_dofs);
    let mut b_t = TripletList::new(nv, n_dofs);
    let mut mass_t = TripletList::new(nv, nv);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let area = mesh.triangle_area(t);
        // P1 gradients via the affine map.
        let (g6, _) = p2_grad_physical(
            mesh.nodes[a],
            mesh.nodes[b],
            mesh.nodes[c],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        );
        // Linear basis gradients equal the constant barycentric gradients.
        let j = Matrix2::from_columns(&[mesh.nodes[b] - mesh.nodes[a], mesh.nodes[c] - mesh.nodes[a]]);
        let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
        let inv_t = Matrix2::new(j[(1, 1)], -j[(1, 0)], -j[(0, 1)], j[(0, 0)]) / det;
        let g = [
            inv_t * Vector2::new(-1.0, -1.0),
            inv_t * Vector2::new(1.0, 0.0),
            inv_t * Vector2::new(0.0, 1.0),
        ];
        let _ = g6;
        for (i, &ni) in tri.iter().enumerate() {
            for (jj, &njd) in tri.iter().enumerate() {
                // Strain product integrated exactly (constant integrand).
                let gi = g[i];
                let gj = g[jj];
                let xx = gi.x * gj.x + 0.5 * gi.y * gj.y;
                let xy = 0.5 * gi.y * gj.x;
                let yx = 0.5 * gi.x * gj.y;
                let yy = 0.5 * gi.x * gj.x + gi.y * gj.y;
                for (da, dira) in &node_dofs[ni] {
                    for (db, dirb) in &node_dofs[njd] {
                        let v = dira.x * (xx * dirb.x + xy * dirb.y)
                            + dira.y * (yx * dirb.x + yy * dirb.y);
                        gram_t.push(*da, *db, area * v);
                    }
                }
                // P1 mass: area/12 * (2 diag, 1 off).
                let m = if i == jj { area / 6.0 } else { area / 12.0 };
                mass_t.push(ni, njd, m);
            }
            // Divergence rows: int lambda_p (g_i . dir) = area/3 (g_i . dir).
            for &p_row in tri.iter() {
                for (di, dir) in &node_dofs[ni] {
                    b_t.push(p_row, *di, area / 3.0 * g[i].dot(dir));
                }
            }
        }
    }
    // S1 tangential boundary mass on the P1 trace: L/6 [2 1; 1 2].
    for (k, e) in mesh.boundary_edges.iter().enumerate() {
        if e.tag != BoundaryTag::S1 {
            continue;
        }
        let len = mesh.edge_length(e);
        let tau = frames[k].tangent;
        let m = [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]];
        for (i, &ni) in e.nodes.iter().enumerate() {
            for (jj, &nj) in e.nodes.iter().enumerate() {
                for (da, dira) in &node_dofs[ni] {
                    for (db, dirb) in &node_dofs[nj] {
                        gram_t.push(*da, *db, m[i][jj] * dira.dot(&tau) * dirb.dot(&tau));
                    }
                }
            }
        }
    }
    (gram_t.to_csr(), b_t.to_csr(), mass_t.to_csr())
}

/// Discrete inf-sup constant of a mesh for the chosen element pair.
pub fn infsup_estimate(mesh: &Mesh, pair: ElementPair) -> Result<InfSupEstimate, VerifyError> {
    let (gram, b, mass) = match pair {
        ElementPair::TaylorHood => th_matrices(mesh),
        ElementPair::P1P1 => p1p1_matrices(mesh),
    };
    smallest_infsup_eigen(&gram, &b, &mass, 42)
}

// ---------------------------------------------------------------------------
// Analytic slip-channel oracle
// ---------------------------------------------------------------------------

/// Exact streamwise velocity of pressure-driven channel flow between two slip
/// walls: `u(y) = G/(2 eta) y (H - y) + G H / (2 b)`, the unique solution of
/// `eta u'' = -G` with the linear slip law on both walls.
pub fn channel_slip_oracle(g: f64, eta: f64, b: f64, h: f64, y: f64) -> f64 {
    g / (2.0 * eta) * y * (h - y) + g * h / (2.0 * b)
}

// ---------------------------------------------------------------------------
// Manufactured verification cases
// ---------------------------------------------------------------------------

type VecField = Arc<dyn Fn(Point) -> Vector2<f64> + Send + Sync>;
type MatField = Arc<dyn Fn(Point) -> Matrix2<f64> + Send + Sync>;
type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct VerificationCase {
    pub id: String,
    pub description: String,
    pub width: f64,
    pub height: f64,
    pub base_divisions: usize,
    pub s1_sides: Vec<Side>,
    pub viscosity: ViscosityModel,
    pub slip: SlipModel,
    pub efield: ElectricField,
    pub mu_settings: MuSettings,
    pub body_force: FieldSpec,
    pub traction: TractionSpec,
    pub extra_s1_traction: Option<TractionSpec>,
    pub exact_velocity: Option<VecField>,
    pub exact_velocity_grad: Option<MatField>,
    pub exact_pressure: Option<ScalarField>,
    /// Total stress of the exact fields, for the strong-form oracle.
    pub exact_stress: Option<MatField>,
}

impl VerificationCase {
    pub fn mesh(&self, level: usize) -> Mesh {
        let n = self.base_divisions << level;
        structured_rectangle(n, n, self.width, self.height, &self.s1_sides)
    }

    pub fn system(&self, level: usize) -> Result<DiscreteSystem, VerifyError> {
        let mesh = self.mesh(level);
        self.system_on(mesh)
    }

    pub fn system_on(&self, mesh: Mesh) -> Result<DiscreteSystem, VerifyError> {
        let e_max = self.efield.max_abs(&mesh);
        let bounds =
            validate_constitutive(&self.viscosity, &self.slip, &ValidationBox::with_e_max(e_max))?;
        let spec = SystemSpec {
            viscosity: self.viscosity.clone(),
            slip: self.slip.clone(),
            efield: self.efield.clone(),
            mu_settings: self.mu_settings,
            mollifier_radius: None,
            body_force: self.body_force.clone(),
            traction: self.traction.clone(),
            extra_s1_traction: self.extra_s1_traction.clone(),
            bounds,
        };
        Ok(DiscreteSystem::build(mesh, spec)?)
    }

    /// Strong-form consistency of the exact fields: max over random interior
    /// points of |div sigma + K| (divergence by 6th-order finite differences
    /// of the stress closure) and of |div u| from the analytic gradient.
    pub fn check_consistency(&self, n_points: usize, seed: u64) -> f64 {
        let (stress, grad) = match (&self.exact_stress, &self.exact_velocity_grad) {
            (Some(s), Some(g)) => (s, g),
            _ => return 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-2;
        let margin = 4.0 * h;
        let mut worst: f64 = 0.0;
        for _ in 0..n_points {
            let x = Point::new(
                rng.gen_range(margin..self.width - margin),
                rng.gen_range(margin..self.height - margin),
            );
            // 6th-order central difference of each stress column.
            let coeffs = [
                (-3.0, -1.0 / 60.0),
                (-2.0, 3.0 / 20.0),
                (-1.0, -3.0 / 4.0),
                (1.0, 3.0 / 4.0),
                (2.0, -3.0 / 20.0),
                (3.0, 1.0 / 60.0),
            ];
            let mut div_sigma = Vector2::zeros();
            for (offset, c) in coeffs {
                let sx = stress(Point::new(x.x + offset * h, x.y));
                let sy = stress(Point::new(x.x, x.y + offset * h));
                div_sigma.x += c / h * (sx[(0, 0)] + 0.0) + c / h * 0.0;
                div_sigma.x += c / h * sy[(0, 1)] - c / h * sx[(0, 0)] * 0.0;
                div_sigma.y += c / h * sx[(1, 0)] + c / h * sy[(1, 1)];
            }
            // Recompute cleanly: d/dx of column 1 plus d/dy of column 2.
            let mut dsum = Vector2::zeros();
            for (offset, c) in coeffs {
                let sx = stress(Point::new(x.x + offset * h, x.y));
                let sy = stress(Point::new(x.x, x.y + offset * h));
                dsum.x += c / h * sx[(0, 0)] + c / h * sy[(0, 1)];
                dsum.y += c / h * sx[(1, 0)] + c / h * sy[(1, 1)];
            }
            let k = self.body_force.eval(x);
            let momentum = Vector2::new(-dsum.x - k.x, -dsum.y - k.y);
            let g = grad(x);
            let div_u = g[(0, 0)] + g[(1, 1)];
            worst = worst.max(momentum.norm()).max(div_u.abs());
            let _ = div_sigma;
        }
        worst
    }
}

/// Built-in manufactured cases.
pub fn manufactured_case(id: &str) -> Result<VerificationCase, VerifyError> {
    match id {
        "stokes-trig" => Ok(stokes_trig_case()),
        "er-shear" => Ok(er_shear_case()),
        "slip-channel" => Ok(slip_channel_case(2.0, 1.0, 1.0, 1.0, 1.0)),
        other => Err(VerifyError::UnknownCase(other.to_string())),
    }
}

pub fn case_ids() -> &'static [&'static str] {
    &["stokes-trig", "er-shear", "slip-channel"]
}

fn stokes_trig_case() -> VerificationCase {
    use std::f64::consts::PI;
    let eta = 1.0;
    let b = 1.0;
    let u_exact: VecField = Arc::new(move |x: Point| {
        Vector2::new(
            (PI * x.x).sin() * (PI * x.y).cos(),
            -(PI * x.x).cos() * (PI * x.y).sin(),
        )
    });
    let grad: MatField = Arc::new(move |x: Point| {
        Matrix2::new(
            PI * (PI * x.x).cos() * (PI * x.y).cos(),
            -PI * (PI * x.x).sin() * (PI * x.y).sin(),
            PI * (PI * x.x).sin() * (PI * x.y).sin(),
            -PI * (PI * x.x).cos() * (PI * x.y).cos(),
        )
    });
    let p_exact: ScalarField = Arc::new(move |x: Point| (PI * x.x).cos() * (PI * x.y).cos());
    let stress = stress_closure(grad.clone(), p_exact.clone(), move |_i, _e, _m| eta);
    let body: FieldSpec = FieldSpec::Func(Arc::new(move |x: Point| {
        let sx = (PI * x.x).sin();
        let cx = (PI * x.x).cos();
        let sy = (PI * x.y).sin();
        let cy = (PI * x.y).cos();
        Vector2::new(
            -PI * sx * cy + 2.0 * PI * PI * eta * sx * cy,
            -PI * cx * sy - 2.0 * PI * PI * eta * cx * sy,
        )
    }));
    let traction = traction_from_stress(stress.clone());
    let extra = slip_compensation(stress.clone(), u_exact.clone(), b);
    VerificationCase {
        id: "stokes-trig".into(),
        description: "constant-viscosity trigonometric manufactured solution; \
                      slip consistency folded into an extra S1 boundary load"
            .into(),
        width: 1.0,
        height: 1.0,
        base_divisions: 4,
        s1_sides: vec![Side::Bottom],
        viscosity: ViscosityModel::constant(eta),
        slip: SlipModel::constant(b),
        efield: ElectricField::Uniform(Vector2::zeros()),
        mu_settings: MuSettings::default(),
        body_force: body,
        traction,
        extra_s1_traction: Some(extra),
        exact_velocity: Some(u_exact),
        exact_velocity_grad: Some(grad),
        exact_pressure: Some(p_exact),
        exact_stress: Some(stress),
    }
}

fn er_shear_case() -> VerificationCase {
    // Shear profile orthogonal to a uniform vertical field. The angle factor
    // is disabled (k2 = 0) so the manufactured force stays in closed form;
    // the velocity never vanishes, so the unregularized angle function is
    // admissible.
    let psi0 = 1.0;
    let c = 1.0; // k0 + k1 |E|^2 with k0 = k1 = 0.5, |E| = 1
    let lambda = 1.0;
    let b = 1.0;
    let f = move |y: f64| 1.0 + y - y * y * y / 3.0;
    let fp = move |y: f64| 1.0 - y * y;
    let fpp = move |y: f64| -2.0 * y;
    let u_exact: VecField = Arc::new(move |x: Point| Vector2::new(f(x.y), 0.0));
    let grad: MatField = Arc::new(move |x: Point| Matrix2::new(0.0, fp(x.y), 0.0, 0.0));
    let p_exact: ScalarField = Arc::new(move |x: Point| x.x * x.x + x.y);
    let visc = move |i: f64| psi0 + c * (lambda + i).powf(-0.5);
    let dvisc = move |i: f64| -0.5 * c * (lambda + i).powf(-1.5);
    let stress = stress_closure(grad.clone(), p_exact.clone(), move |i, _e, _m| visc(i));
    let body: FieldSpec = FieldSpec::Func(Arc::new(move |x: Point| {
        let d = fp(x.y);
        let i = 0.5 * d * d;
        Vector2::new(2.0 * x.x - fpp(x.y) * (visc(i) + dvisc(i) * d * d), 1.0)
    }));
    let traction = traction_from_stress(stress.clone());
    let extra = slip_compensation(stress.clone(), u_exact.clone(), b);
    VerificationCase {
        id: "er-shear".into(),
        description: "field-coupled shear-thinning flow with a cubic shear \
                      profile; angle coupling disabled (k2 = 0) so the \
                      manufactured force is exact; slip consistency folded \
                      into an extra S1 boundary load"
            .into(),
        width: 1.0,
        height: 1.0,
        base_divisions: 4,
        s1_sides: vec![Side::Bottom],
        viscosity: ViscosityModel::family(psi0, 0.5, 0.5, 0.0, lambda),
        slip: SlipModel::constant(b),
        efield: ElectricField::Uniform(Vector2::new(0.0, 1.0)),
        mu_settings: MuSettings {
            alpha_reg: 0.0,
            frame_velocity: Vector2::zeros(),
            assume_nonzero_velocity: true,
        },
        body_force: body,
        traction,
        extra_s1_traction: Some(extra),
        exact_velocity: Some(u_exact),
        exact_velocity_grad: Some(grad),
        exact_pressure: Some(p_exact),
        exact_stress: Some(stress),
    }
}

/// Pressure-driven channel between two slip walls; the exact solution
/// satisfies the constant-coefficient slip law, so no compensation is needed.
pub fn slip_channel_case(g: f64, eta: f64, b: f64, length: f64, height: f64) -> VerificationCase {
    let u_exact: VecField =
        Arc::new(move |x: Point| Vector2::new(channel_slip_oracle(g, eta, b, height, x.y), 0.0));
    let grad: MatField =
        Arc::new(move |x: Point| Matrix2::new(0.0, g / (2.0 * eta) * (height - 2.0 * x.y), 0.0, 0.0));
    let p_exact: ScalarField = Arc::new(move |x: Point| g * (length / 2.0 - x.x));
    let stress = stress_closure(grad.clone(), p_exact.clone(), move |_i, _e, _m| eta);
    let traction = traction_from_stress(stress.clone());
    VerificationCase {
        id: "slip-channel".into(),
        description: format!(
            "pressure-driven channel with linear slip walls (G={g}, eta={eta}, b={b})"
        ),
        width: length,
        height,
        base_divisions: 4,
        s1_sides: vec![Side::Bottom, Side::Top],
        viscosity: ViscosityModel::constant(eta),
        slip: SlipModel::constant(b),
        efield: ElectricField::Uniform(Vector2::zeros()),
        mu_settings: MuSettings::default(),
        body_force: FieldSpec::Zero,
        traction,
        extra_s1_traction: None,
        exact_velocity: Some(u_exact),
        exact_velocity_grad: Some(grad),
        exact_pressure: Some(p_exact),
        exact_stress: Some(stress),
    }
}

fn stress_closure(
    grad: MatField,
    pressure: ScalarField,
    viscosity_of: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
) -> MatField {
    Arc::new(move |x: Point| {
        let g = grad(x);
        let e = 0.5 * (g + g.transpose());
        let i = e[(0, 0)] * e[(0, 0)] + e[(1, 1)] * e[(1, 1)] + 2.0 * e[(0, 1)] * e[(0, 1)];
        let phi = viscosity_of(i, 0.0, 0.0);
        let p = pressure(x);
        Matrix2::new(
            -p + 2.0 * phi * e[(0, 0)],
            2.0 * phi * e[(0, 1)],
            2.0 * phi * e[(1, 0)],
            -p + 2.0 * phi * e[(1, 1)],
        )
    })
}

fn traction_from_stress(stress: MatField) -> TractionSpec {
    TractionSpec::Func(Arc::new(move |x: Point, n: Vector2<f64>| stress(x) * n))
}

/// The manufactured slip defect: with constant slip coefficient `b`, the
/// boundary load `g = (sigma nu)_tau + b u_tau` makes the exact pair satisfy
/// the discrete weak form on S1.
fn slip_compensation(stress: MatField, u_exact: VecField, b: f64) -> TractionSpec {
    TractionSpec::Func(Arc::new(move |x: Point, n: Vector2<f64>| {
        let sv = stress(x) * n;
        let sv_t = sv - sv.dot(&n) * n;
        let u = u_exact(x);
        let u_t = u - u.dot(&n) * n;
        sv_t + b * u_t
    }))
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub h: f64,
    pub n_velocity_dofs: usize,
    pub err_u_z: f64,
    pub err_p_l2: f64,
    pub report: SolverReport,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct ConvergenceTable {
    pub case_id: String,
    pub levels: Vec<LevelResult>,
    pub rates_u: Vec<f64>,
    pub rates_p: Vec<f64>,
    /// Set when a level failed to solve; the table is then partial.
    pub aborted: Option<String>,
}

/// Z-norm error of a discrete velocity against an analytic field, using the
/// degree-6 volume rule and the 5-point edge rule on S1.
pub fn velocity_z_error(
    sys: &DiscreteSystem,
    u_nodal: &[Vector2<f64>],
    exact: &dyn Fn(Point) -> Vector2<f64>,
    exact_grad: &dyn Fn(Point) -> Matrix2<f64>,
) -> f64 {
    let mesh = &sys.mesh;
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let (pa, pb, pc) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
        for pt in TRI_ORDER6.iter() {
            let (g, area) = p2_grad_physical(pa, pb, pc, pt.bary);
            let x = pt.bary[0] * pa + pt.bary[1] * pb + pt.bary[2] * pc;
            let mut gh = Matrix2::zeros();
            for i in 0..6 {
                let u = u_nodal[sys.dof.tri_p2[t][i]];
                gh[(0, 0)] += u.x * g[i].x;
                gh[(0, 1)] += u.x * g[i].y;
                gh[(1, 0)] += u.y * g[i].x;
                gh[(1, 1)] += u.y * g[i].y;
            }
            let d = gh - exact_grad(x);
            acc += pt.weight * area * crate::models::invariant_i(&d);
        }
    }
    let rule = edge_gauss5();
    for &k in &sys.dof.s1_edges {
        let e = &mesh.boundary_edges[k];
        let pa = mesh.nodes[e.nodes[0]];
        let pb = mesh.nodes[e.nodes[1]];
        let len = (pb - pa).norm();
        let frame = sys.dof.frames[k];
        let p2 = sys.dof.bedge_p2[k];
        for gp in rule {
            let x = pa + gp.t * (pb - pa);
            let tr = crate::assembly::basis::p2_edge_trace(gp.t);
            let mut uh = Vector2::zeros();
            for i in 0..3 {
                uh += tr[i] * u_nodal[p2[i]];
            }
            let d = uh - exact(x);
            let d_tau = d - d.dot(&frame.normal) * frame.normal;
            acc += gp.weight * len * d_tau.norm_squared();
        }
    }
    acc.max(0.0).sqrt()
}

/// L2 error of a P1 pressure against an analytic field (degree-6 rule).
pub fn pressure_l2_error(sys: &DiscreteSystem, p: &[f64], exact: &dyn Fn(Point) -> f64) -> f64 {
    let mesh = &sys.mesh;
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        for pt in TRI_ORDER6.iter() {
            let x = crate::assembly::basis::tri_point_position(mesh, t, pt);
            let ph = pt.bary[0] * p[tri[0]] + pt.bary[1] * p[tri[1]] + pt.bary[2] * p[tri[2]];
            let d = ph - exact(x);
            acc += pt.weight * area * d * d;
        }
    }
    acc.max(0.0).sqrt()
}

/// Refinement study with the mixed solver; errors against the case's exact
/// fields, rates from successive log2 ratios.
pub fn convergence_study(
    case: &VerificationCase,
    levels: usize,
    cfg: &SolverConfig,
) -> ConvergenceTable {
    let mut table = ConvergenceTable { case_id: case.id.clone(), ..Default::default() };
    let exact_u = case.exact_velocity.clone().expect("case has exact velocity");
    let exact_g = case.exact_velocity_grad.clone().expect("case has exact gradient");
    let exact_p = case.exact_pressure.clone().expect("case has exact pressure");
    for level in 0..levels {
        let sys = match case.system(level) {
            Ok(s) => s,
            Err(e) => {
                table.aborted = Some(format!("level {level}: {e}"));
                return table;
            }
        };
        match solve_mixed(&sys, cfg) {
            Ok((fields, report)) => {
                let err_u =
                    velocity_z_error(&sys, &fields.velocity, exact_u.as_ref(), exact_g.as_ref());
                let err_p = pressure_l2_error(&sys, &fields.pressure, exact_p.as_ref());
                table.levels.push(LevelResult {
                    level,
                    h: sys.mesh.max_diameter(),
                    n_velocity_dofs: sys.n_velocity_dofs(),
                    err_u_z: err_u,
                    err_p_l2: err_p,
                    report,
                });
            }
            Err(e) => {
                table.aborted = Some(format!("level {level}: {e}"));
                return table;
            }
        }
    }
    for w in table.levels.windows(2) {
        table.rates_u.push((w[0].err_u_z / w[1].err_u_z).log2());
        table.rates_p.push((w[0].err_p_l2 / w[1].err_p_l2).log2());
    }
    table
}

// ---------------------------------------------------------------------------
// Monotonicity / Lipschitz probe
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ProbeResult {
    pub min_rayleigh: f64,
    pub max_lipschitz: f64,
    pub trials: usize,
    pub resampled: usize,
}

/// Sample random velocity pairs and measure the Rayleigh quotient
/// `(R(u) - R(w), u - w) / |u - w|_Z^2` and the dual-norm Lipschitz quotient
/// of the frozen-coefficient operator. Pairs are standard normal dof vectors
/// rescaled to a log-uniform Z-norm in [1e-3, 1e1].
pub fn monotonicity_probe(
    sys: &DiscreteSystem,
    frozen: &Frozen,
    trials: usize,
    seed: u64,
) -> ProbeResult {
    let n = sys.n_velocity_dofs();
    let mut min_r1 = f64::INFINITY;
    let mut max_r2: f64 = 0.0;
    let mut resampled = 0;
    let mut done = 0;
    let mut trial = 0u64;
    while done < trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial));
        trial += 1;
        let mut sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
            let zn = sys.z_norm(&raw);
            let target = 10f64.powf(rng.gen_range(-3.0..1.0));
            raw.iter().map(|v| v * target / zn.max(f64::MIN_POSITIVE)).collect()
        };
        let u = sample(&mut rng);
        let w = sample(&mut rng);
        let d: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - b).collect();
        let zn = sys.z_norm(&d);
        if zn < 1e-14 {
            resampled += 1;
            continue;
        }
        let ru = crate::solver::frozen_operator_apply(sys, frozen, &u);
        let rw = crate::solver::frozen_operator_apply(sys, frozen, &w);
        let rd: Vec<f64> = ru.iter().zip(&rw).map(|(a, b)| a - b).collect();
        let r1 = dot(&rd, &d) / (zn * zn);
        let r2 = sys.dual_norm(&rd) / zn;
        min_r1 = min_r1.min(r1);
        max_r2 = max_r2.max(r2);
        done += 1;
    }
    ProbeResult { min_rayleigh: min_r1, max_lipschitz: max_r2, trials: done, resampled }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
