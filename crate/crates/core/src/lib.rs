//! Finite-element library for stationary 2D electrorheological Stokes flow
//! with slip boundary conditions.
//!
//! The flow model couples a shear-rate- and field-dependent viscosity with a
//! nonlinear slip law on part of the boundary. The slip coefficient depends on
//! a mollified (nonlocal) normal traction, which keeps the wall law well
//! defined for finite-energy fields. Discretization is Taylor-Hood (P2
//! velocity / P1 pressure) on triangles, with the impermeability constraint
//! imposed strongly through per-node frame rotation.
//!
//! Two solution paths are provided and cross-checked:
//! - a penalty method (divergence penalization with pressure recovery and a
//!   continuation loop driving the penalty parameter to zero), and
//! - a mixed saddle-point Galerkin method with exact discrete
//!   incompressibility.
//!
//! Both are driven by a frozen-coefficient fixed-point outer loop with damped
//! Newton inner solves. The `verify` module contains the verification battery:
//! discrete inf-sup estimation, an analytic slip-channel oracle, manufactured
//! convergence studies, and monotonicity/Lipschitz probes of the assembled
//! operators.

pub mod assembly;
pub mod expr;
pub mod mesh;
pub mod models;
pub mod mollify;
pub mod parallel;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use assembly::{DiscreteSystem, DofMap, FieldSpec, NodeConstraint, TractionSpec};
pub use mesh::{BoundaryEdge, BoundaryTag, EdgeFrame, Mesh, MeshReport};
pub use models::{
    CertifiedBounds, ElectricField, MuSettings, SlipModel, ValidationBox, ViscosityModel,
};
pub use mollify::{MollifierKernel, TractionTrace};
pub use solver::{SlipVariant, SolutionFields, SolveMethod, SolverConfig, SolverReport};
