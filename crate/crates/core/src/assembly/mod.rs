//! Discrete function spaces and weak-form operators for the slip-flow
//! problem: dof management, the viscous/slip/divergence operators with their
//! Gateaux derivatives, load functionals, and the Z-norm machinery.

pub mod basis;
pub mod dof;
pub mod ops;

pub use dof::{build_dof_map, DofMap, NodeConstraint};
pub use ops::{
    assemble_div, assemble_div_penalty, assemble_gram, assemble_load, assemble_mass_p1,
    assemble_slip, assemble_viscous, div_l2_norm, project_strain_to_vertices, SlipFreeze,
};

use crate::expr::Expr;
use crate::mesh::{validate_mesh, Mesh, MeshReport, Point};
use crate::models::{mu_angle, CertifiedBounds, ElectricField, MuSettings, SlipModel, ViscosityModel};
use crate::mollify::{self, MollifierKernel, QuadCloud, TractionInputs, TractionTrace};
use crate::quadrature::edge_gauss3;
use crate::sparse::{CsrMatrix, LltSolver, SparseError};
use basis::{BEdgeGeom, ElemGeom, N_QP};
use nalgebra::Vector2;
use std::sync::Arc;
use thiserror::Error;

/// A vector field given as data (body force, nodal exact fields, ...).
#[derive(Clone)]
pub enum FieldSpec {
    Zero,
    Constant(Vector2<f64>),
    Analytic { f1: Expr, f2: Expr },
    Func(Arc<dyn Fn(Point) -> Vector2<f64> + Send + Sync>),
}

impl FieldSpec {
    pub fn eval(&self, x: Point) -> Vector2<f64> {
        match self {
            FieldSpec::Zero => Vector2::zeros(),
            FieldSpec::Constant(v) => *v,
            FieldSpec::Analytic { f1, f2 } => Vector2::new(f1.eval(x.x, x.y), f2.eval(x.x, x.y)),
            FieldSpec::Func(f) => f(x),
        }
    }
}

impl std::fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldSpec::Zero => write!(f, "Zero"),
            FieldSpec::Constant(v) => write!(f, "Constant({v:?})"),
            FieldSpec::Analytic { f1, f2 } => write!(f, "Analytic({f1}, {f2})"),
            FieldSpec::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// A boundary field that may depend on the outward normal (surface traction).
#[derive(Clone)]
pub enum TractionSpec {
    Zero,
    Constant(Vector2<f64>),
    Analytic { f1: Expr, f2: Expr },
    Func(Arc<dyn Fn(Point, Vector2<f64>) -> Vector2<f64> + Send + Sync>),
}

impl TractionSpec {
    pub fn eval(&self, x: Point, normal: Vector2<f64>) -> Vector2<f64> {
        match self {
            TractionSpec::Zero => Vector2::zeros(),
            TractionSpec::Constant(v) => *v,
            TractionSpec::Analytic { f1, f2 } => {
                Vector2::new(f1.eval(x.x, x.y), f2.eval(x.x, x.y))
            }
            TractionSpec::Func(f) => f(x, normal),
        }
    }
}

impl std::fmt::Debug for TractionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TractionSpec::Zero => write!(f, "Zero"),
            TractionSpec::Constant(v) => write!(f, "Constant({v:?})"),
            TractionSpec::Analytic { f1, f2 } => write!(f, "Analytic({f1}, {f2})"),
            TractionSpec::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// Everything the discrete system needs besides the mesh.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub viscosity: ViscosityModel,
    pub slip: SlipModel,
    pub efield: ElectricField,
    pub mu_settings: MuSettings,
    /// Kernel radius; defaults to twice the mean boundary edge length.
    pub mollifier_radius: Option<f64>,
    pub body_force: FieldSpec,
    pub traction: TractionSpec,
    /// Extra boundary load on S1 (manufactured slip consistency terms).
    pub extra_s1_traction: Option<TractionSpec>,
    pub bounds: CertifiedBounds,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid mesh:\n{0}")]
    InvalidMesh(MeshReport),
    #[error("sparse factorization during setup failed: {0}")]
    Sparse(#[from] SparseError),
    #[error("invalid settings: {0}")]
    Settings(String),
}

/// Coefficients frozen by the outer fixed-point map: the angle field entering
/// the viscosity and the slip-law data on S1.
#[derive(Clone, Debug)]
pub struct Frozen {
    pub mu_vertex: Vec<f64>,
    pub slip: SlipFreeze,
}

/// Assembled, immutable discretization of one case: mesh, dof map, models,
/// precomputed element data, and the iterate-independent operators.
pub struct DiscreteSystem {
    pub mesh: Mesh,
    pub dof: DofMap,
    pub viscosity: ViscosityModel,
    pub slip: SlipModel,
    pub efield: ElectricField,
    pub mu_settings: MuSettings,
    pub kernel: MollifierKernel,
    pub bounds: CertifiedBounds,
    pub e_max: f64,
    /// Divergence operator (pressure rows x velocity columns).
    pub b_div: CsrMatrix,
    /// Divergence penalty (velocity x velocity).
    pub div_penalty: CsrMatrix,
    /// Z inner-product Gram matrix.
    pub gram: CsrMatrix,
    /// P1 pressure mass matrix.
    pub mass_p: CsrMatrix,
    /// Assembled load functional.
    pub load: Vec<f64>,
    pub(crate) elems: Vec<ElemGeom>,
    pub(crate) bedges: Vec<BEdgeGeom>,
    pub(crate) grad_at_vertices: Vec<[[Vector2<f64>; 6]; 3]>,
    pub(crate) e_at_qp: Vec<[f64; N_QP]>,
    pub(crate) e_at_vertex: Vec<Vector2<f64>>,
    pub(crate) e_at_s1_qp: Vec<Vector2<f64>>,
    pub(crate) s1_qp_x: Vec<Point>,
    pub(crate) s1_normals: Vec<Vector2<f64>>,
    pub(crate) cloud: QuadCloud,
    gram_llt: LltSolver,
    mass_llt: LltSolver,
}

impl DiscreteSystem {
    pub fn build(mesh: Mesh, spec: SystemSpec) -> Result<Self, BuildError> {
        crate::sparse::ensure_deterministic_solves();
        let report = validate_mesh(&mesh);
        if !report.is_valid() {
            return Err(BuildError::InvalidMesh(report));
        }
        spec.mu_settings.validate().map_err(BuildError::Settings)?;

        let dof = build_dof_map(&mesh);
        let elems: Vec<ElemGeom> = (0..mesh.triangles.len())
            .map(|t| ElemGeom::build(&mesh, t, dof.tri_p2[t]))
            .collect();
        let rule = edge_gauss3();
        let bedges: Vec<BEdgeGeom> = mesh
            .boundary_edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                BEdgeGeom::build(&mesh, e.nodes, dof.bedge_p2[k][1], e.tag, dof.frames[k], &rule)
            })
            .collect();

        // P2 gradients at element vertices, for the strain projection.
        let vert_bary = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let grad_at_vertices: Vec<[[Vector2<f64>; 6]; 3]> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.triangles[t];
                let mut out = [[Vector2::zeros(); 6]; 3];
                for (v, bary) in vert_bary.iter().enumerate() {
                    let (g, _) =
                        basis::p2_grad_physical(mesh.nodes[a], mesh.nodes[b], mesh.nodes[c], *bary);
                    out[v] = g;
                }
                out
            })
            .collect();

        // Electric field samples.
        let e_max = spec.efield.max_abs(&mesh);
        let e_at_qp: Vec<[f64; N_QP]> = elems
            .iter()
            .enumerate()
            .map(|(t, el)| {
                let mut row = [0.0; N_QP];
                for q in 0..N_QP {
                    let bary = crate::quadrature::TRI_ORDER4[q].bary;
                    row[q] = spec.efield.eval_in_tri(&mesh, t, bary, el.qp_x[q]).norm();
                }
                row
            })
            .collect();
        let e_at_vertex: Vec<Vector2<f64>> = match &spec.efield {
            ElectricField::Uniform(e) => vec![*e; mesh.nodes.len()],
            ElectricField::Nodal(values) => values.clone(),
            ElectricField::Analytic { e1, e2 } => mesh
                .nodes
                .iter()
                .map(|p| Vector2::new(e1.eval(p.x, p.y), e2.eval(p.x, p.y)))
                .collect(),
        };

        let mut s1_qp_x = Vec::new();
        let mut s1_normals = Vec::new();
        let mut e_at_s1_qp = Vec::new();
        for &k in &dof.s1_edges {
            let edge = &bedges[k];
            let tri = mesh.boundary_edges[k].tri;
            for x in &edge.qp_x {
                s1_qp_x.push(*x);
                s1_normals.push(edge.frame.normal);
                let bary = mesh.barycentric(tri, *x);
                e_at_s1_qp.push(spec.efield.eval_in_tri(&mesh, tri, bary, *x));
            }
        }

        let radius = spec
            .mollifier_radius
            .unwrap_or_else(|| 2.0 * mesh.mean_boundary_edge_length());
        if radius <= 0.0 {
            return Err(BuildError::Settings("mollifier radius must be positive".into()));
        }
        let kernel = MollifierKernel::new(radius);
        let cloud = QuadCloud::build(&mesh, radius);

        let b_div = assemble_div(&dof, &mesh, &elems).to_csr();
        let div_penalty = assemble_div_penalty(&dof, &elems).to_csr();
        let gram = assemble_gram(&dof, &mesh, &elems, &bedges).to_csr();
        let mass_p = assemble_mass_p1(&dof, &mesh, &elems).to_csr();
        let load = assemble_load(
            &dof,
            &elems,
            &bedges,
            &spec.body_force,
            &spec.traction,
            spec.extra_s1_traction.as_ref(),
        );
        let gram_llt = LltSolver::new(&gram)?;
        let mass_llt = LltSolver::new(&mass_p)?;

        Ok(DiscreteSystem {
            mesh,
            dof,
            viscosity: spec.viscosity,
            slip: spec.slip,
            efield: spec.efield,
            mu_settings: spec.mu_settings,
            kernel,
            bounds: spec.bounds,
            e_max,
            b_div,
            div_penalty,
            gram,
            mass_p,
            load,
            elems,
            bedges,
            grad_at_vertices,
            e_at_qp,
            e_at_vertex,
            e_at_s1_qp,
            s1_qp_x,
            s1_normals,
            cloud,
            gram_llt,
            mass_llt,
        })
    }

    pub fn n_velocity_dofs(&self) -> usize {
        self.dof.n_velocity_dofs
    }

    pub fn n_pressure_dofs(&self) -> usize {
        self.dof.n_pressure_dofs
    }

    pub fn n_s1_quad_points(&self) -> usize {
        self.s1_qp_x.len()
    }

    /// Angle field at mesh vertices from a nodal velocity. Vertices where the
    /// field magnitude is negligible (relative to its maximum) never influence
    /// the viscosity there, and get the value 0.
    pub fn compute_mu_field(&self, u_nodal: &[Vector2<f64>]) -> Vec<f64> {
        let threshold = 1e-14 * self.e_max.max(f64::MIN_POSITIVE);
        (0..self.mesh.nodes.len())
            .map(|v| {
                let e = self.e_at_vertex[v];
                if e.norm() < threshold {
                    0.0
                } else {
                    mu_angle(u_nodal[v], e, &self.mu_settings).unwrap_or(0.0)
                }
            })
            .collect()
    }

    /// Regularized normal traction at the S1 quadrature points, from a
    /// pressure vertex field and a nodal velocity, plus the squared
    /// tangential mollified velocity.
    pub fn regularized_normal_traction(
        &self,
        p_vertex: &[f64],
        u_nodal: &[Vector2<f64>],
    ) -> (TractionTrace, Vec<f64>) {
        let mesh = &self.mesh;
        let cloud = &self.cloud;
        let nq = cloud.points.len();
        let mut p_qp = Vec::with_capacity(nq);
        let mut u1_qp = Vec::with_capacity(nq);
        let mut u2_qp = Vec::with_capacity(nq);
        for k in 0..nq {
            let t = cloud.elem[k];
            let bary = cloud.bary[k];
            let tri = mesh.triangles[t];
            p_qp.push(bary[0] * p_vertex[tri[0]] + bary[1] * p_vertex[tri[1]] + bary[2] * p_vertex[tri[2]]);
            // The cloud shares the assembly rule, element-major.
            let q = k % N_QP;
            debug_assert_eq!(t, k / N_QP);
            let el = &self.elems[t];
            let mut u = Vector2::zeros();
            for i in 0..6 {
                u += el.shape[q][i] * u_nodal[el.p2[i]];
            }
            u1_qp.push(u.x);
            u2_qp.push(u.y);
        }
        let strain_vertex =
            project_strain_to_vertices(mesh, &self.dof, &self.grad_at_vertices, u_nodal);
        let strain_qp: Vec<Vec<f64>> = strain_vertex
            .iter()
            .map(|comp| {
                (0..nq)
                    .map(|k| {
                        let tri = mesh.triangles[cloud.elem[k]];
                        let b = cloud.bary[k];
                        b[0] * comp[tri[0]] + b[1] * comp[tri[1]] + b[2] * comp[tri[2]]
                    })
                    .collect()
            })
            .collect();

        // Direct (unmollified) values at the S1 quadrature points, used as
        // the fallback where the kernel is underresolved.
        let rule = edge_gauss3();
        let n_eval = self.s1_qp_x.len();
        let mut p_ev = Vec::with_capacity(n_eval);
        let mut u1_ev = Vec::with_capacity(n_eval);
        let mut u2_ev = Vec::with_capacity(n_eval);
        let mut strain_ev = [Vec::with_capacity(n_eval), Vec::with_capacity(n_eval), Vec::with_capacity(n_eval)];
        for &k in &self.dof.s1_edges {
            let edge = &self.bedges[k];
            let [a, _, b] = self.dof.bedge_p2[k];
            for (q, gp) in rule.iter().enumerate() {
                let t = gp.t;
                p_ev.push((1.0 - t) * p_vertex[a] + t * p_vertex[b]);
                let mut u = Vector2::zeros();
                for i in 0..3 {
                    u += edge.trace[q][i] * u_nodal[edge.p2[i]];
                }
                u1_ev.push(u.x);
                u2_ev.push(u.y);
                for (c, comp) in strain_vertex.iter().enumerate() {
                    strain_ev[c].push((1.0 - t) * comp[a] + t * comp[b]);
                }
            }
        }

        let inputs = TractionInputs {
            cloud,
            kernel: &self.kernel,
            viscosity: &self.viscosity,
            mu_settings: &self.mu_settings,
            e_max: self.e_max,
            pressure: (&p_qp, &p_ev),
            velocity: [(&u1_qp, &u1_ev), (&u2_qp, &u2_ev)],
            strain: [
                (&strain_qp[0], &strain_ev[0]),
                (&strain_qp[1], &strain_ev[1]),
                (&strain_qp[2], &strain_ev[2]),
            ],
            eval_points: &self.s1_qp_x,
            normals: &self.s1_normals,
            e_field: &self.e_at_s1_qp,
        };
        mollify::regularized_normal_traction(&inputs)
    }

    /// Freeze the fixed-point coefficients at an iterate: the angle field from
    /// the velocity and the slip data from (pressure, velocity). With
    /// `mollified_velocity` the slip coefficient itself is frozen.
    pub fn freeze(
        &self,
        u_dofs: &[f64],
        p_vertex: &[f64],
        mollified_velocity: bool,
    ) -> Frozen {
        let u_nodal = self.dof.velocity_from_dofs(u_dofs);
        let mu_vertex = self.compute_mu_field(&u_nodal);
        let (traction, slip_speed_sq) = self.regularized_normal_traction(p_vertex, &u_nodal);
        let chi_fixed = mollified_velocity.then(|| {
            traction
                .values
                .iter()
                .zip(&slip_speed_sq)
                .map(|(f_nu, s)| self.slip.eval(*f_nu, *s).0)
                .collect()
        });
        Frozen { mu_vertex, slip: SlipFreeze { traction, chi_fixed } }
    }

    /// L2 projection of `-div u / alpha` onto the P1 pressure space.
    pub fn recover_pressure(&self, u_dofs: &[f64], alpha: f64) -> Vec<f64> {
        let mut rhs = self.b_div.matvec(u_dofs);
        for v in &mut rhs {
            *v *= -1.0 / alpha;
        }
        self.mass_llt.solve(&rhs)
    }

    /// Z-norm of a velocity dof vector (strain part plus slip-wall trace).
    pub fn z_norm(&self, u_dofs: &[f64]) -> f64 {
        let gu = self.gram.matvec(u_dofs);
        crate::sparse::dot(u_dofs, &gu).max(0.0).sqrt()
    }

    /// Discrete dual norm through the Riesz map of the Z Gram matrix.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        let x = self.gram_llt.solve(f);
        crate::sparse::dot(f, &x).max(0.0).sqrt()
    }

    pub fn solve_gram(&self, f: &[f64]) -> Vec<f64> {
        self.gram_llt.solve(f)
    }

    pub fn solve_mass(&self, f: &[f64]) -> Vec<f64> {
        self.mass_llt.solve(f)
    }

    /// L2 norm of the divergence of an iterate.
    pub fn div_l2(&self, u_dofs: &[f64]) -> f64 {
        let u_nodal = self.dof.velocity_from_dofs(u_dofs);
        div_l2_norm(&self.elems, &u_nodal)
    }

    /// L2 norm of a pressure vertex field.
    pub fn pressure_l2(&self, p: &[f64]) -> f64 {
        let mp = self.mass_p.matvec(p);
        crate::sparse::dot(p, &mp).max(0.0).sqrt()
    }

    pub fn load_dual_norm(&self) -> f64 {
        self.dual_norm(&self.load)
    }
}
