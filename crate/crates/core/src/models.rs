//! Constitutive ingredients: the rate-of-strain invariant, the velocity/field
//! angle function, the viscosity and slip-coefficient families with their
//! derivatives, the given electric field, and numeric certification of the
//! monotonicity bounds the solvers rely on.
//!
//! The default viscosity family is
//! `phi(y1, y2, y3) = psi0 + (k0 + k1*y2^2*(1 - k2*y3)) * (lambda + y1)^(-1/2)`
//! where `y1` is the strain invariant, `y2` the field magnitude and `y3` the
//! angle function. The default slip family is
//! `chi(y1, y2) = c0 + c1/(1 + exp(y1/f0)) + c2/(1 + y2/s0)` in the normal
//! traction `y1` and squared slip speed `y2`. Both shapes are shear-thinning
//! and admit closed-form bounds, certified below.

use crate::expr::Expr;
use crate::mesh::{Mesh, Point};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("mu undefined at E=0")]
    MuUndefinedAtZeroField,
    #[error("point ({0}, {1}) lies outside the mesh")]
    OutsideDomain(f64, f64),
    #[error("nodal field has {got} values but the mesh has {want} nodes")]
    NodalSizeMismatch { got: usize, want: usize },
}

/// Second invariant of the rate-of-strain tensor: the squared Frobenius norm
/// of the symmetric part of the velocity gradient.
pub fn invariant_i(grad: &Matrix2<f64>) -> f64 {
    let e11 = grad[(0, 0)];
    let e22 = grad[(1, 1)];
    let e12 = 0.5 * (grad[(0, 1)] + grad[(1, 0)]);
    e11 * e11 + e22 * e22 + 2.0 * e12 * e12
}

/// Settings for the regularized angle function: regularization constant and
/// an optional constant frame velocity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MuSettings {
    pub alpha_reg: f64,
    pub frame_velocity: Vector2<f64>,
    /// Callers may set `alpha_reg = 0` only when they assert that the
    /// velocity is nonzero almost everywhere.
    pub assume_nonzero_velocity: bool,
}

impl Default for MuSettings {
    fn default() -> Self {
        MuSettings {
            alpha_reg: 1e-3,
            frame_velocity: Vector2::new(0.0, 0.0),
            assume_nonzero_velocity: false,
        }
    }
}

impl MuSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha_reg < 0.0 {
            return Err("mu regularization constant must be >= 0".into());
        }
        if self.alpha_reg == 0.0 && !self.assume_nonzero_velocity {
            return Err(
                "mu regularization constant is 0 but nonzero velocity was not asserted".into(),
            );
        }
        Ok(())
    }
}

/// Squared cosine of the angle between the (regularized) velocity and the
/// field direction, clamped to [0, 1] against rounding.
///
/// With `alpha_reg = 0` and a vanishing regularized velocity the value is not
/// defined by a limit; 0 is returned, which is harmless under the caller's
/// measure-zero assertion.
pub fn mu_angle(u: Vector2<f64>, e: Vector2<f64>, s: &MuSettings) -> Result<f64, ModelError> {
    let e_norm = e.norm();
    if e_norm == 0.0 {
        return Err(ModelError::MuUndefinedAtZeroField);
    }
    let v = u + s.frame_velocity;
    let numer = s.alpha_reg * Vector2::new(1.0, 1.0) + v;
    let denom = s.alpha_reg * std::f64::consts::SQRT_2 + v.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let c = numer.dot(&e) / (denom * e_norm);
    Ok((c * c).clamp(0.0, 1.0))
}

/// Tabulated scalar function on a tensor grid with multilinear interpolation.
/// Axes must be strictly increasing; queries clamp to the grid range.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorTable {
    pub axes: Vec<Vec<f64>>,
    /// Row-major over the axes (last axis fastest).
    pub values: Vec<f64>,
}

impl TensorTable {
    fn locate(axis: &[f64], x: f64) -> (usize, f64) {
        let n = axis.len();
        if x <= axis[0] {
            return (0, 0.0);
        }
        if x >= axis[n - 1] {
            return (n - 2, 1.0);
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if axis[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (x - axis[lo]) / (axis[lo + 1] - axis[lo]);
        (lo, t)
    }

    /// Multilinear interpolation at the query point (one entry per axis).
    pub fn eval(&self, q: &[f64]) -> f64 {
        assert_eq!(q.len(), self.axes.len());
        let cells: Vec<(usize, f64)> = self
            .axes
            .iter()
            .zip(q)
            .map(|(axis, &x)| Self::locate(axis, x))
            .collect();
        let dims: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        let mut acc = 0.0;
        let corners = 1usize << q.len();
        for corner in 0..corners {
            let mut weight = 1.0;
            let mut idx = 0usize;
            for (d, (lo, t)) in cells.iter().enumerate() {
                let hi_side = (corner >> d) & 1 == 1;
                weight *= if hi_side { *t } else { 1.0 - *t };
                idx = idx * dims[d] + lo + usize::from(hi_side);
            }
            acc += weight * self.values[idx];
        }
        acc
    }

    /// Centered finite-difference derivative along `axis`.
    pub fn deriv(&self, q: &[f64], axis: usize) -> f64 {
        let a = &self.axes[axis];
        let span = a[a.len() - 1] - a[0];
        let h = (1e-6 * span).max(1e-12);
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[axis] = (q[axis] + h).min(a[a.len() - 1]);
        qm[axis] = (q[axis] - h).max(a[0]);
        let dx = qp[axis] - qm[axis];
        if dx == 0.0 {
            return 0.0;
        }
        (self.eval(&qp) - self.eval(&qm)) / dx
    }
}

/// Parameters of the default viscosity family.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ViscosityParams {
    pub psi0: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ViscosityModel {
    Family(ViscosityParams),
    /// User-supplied table over (invariant, field magnitude, angle); validated
    /// only empirically.
    Table(TensorTable),
}

impl ViscosityModel {
    pub fn family(psi0: f64, k0: f64, k1: f64, k2: f64, lambda: f64) -> Self {
        ViscosityModel::Family(ViscosityParams { psi0, k0, k1, k2, lambda })
    }

    pub fn constant(eta: f64) -> Self {
        ViscosityModel::family(eta, 0.0, 0.0, 0.0, 1.0)
    }

    /// Viscosity and its derivative with respect to the strain invariant.
    pub fn eval(&self, invariant: f64, e_mag: f64, mu: f64) -> (f64, f64) {
        match self {
            ViscosityModel::Family(p) => {
                let coeff = p.k0 + p.k1 * e_mag * e_mag * (1.0 - p.k2 * mu);
                let base = (p.lambda + invariant).powf(-0.5);
                let phi = p.psi0 + coeff * base;
                let dphi = -0.5 * coeff * (p.lambda + invariant).powf(-1.5);
                (phi, dphi)
            }
            ViscosityModel::Table(t) => {
                let q = [invariant, e_mag, mu];
                (t.eval(&q), t.deriv(&q, 0))
            }
        }
    }
}

/// Parameters of the default slip family.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlipParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Traction scale of the sigmoidal dependence on the normal force.
    pub f0: f64,
    /// Squared-slip-speed scale.
    pub s0: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SlipModel {
    Family(SlipParams),
    /// User-supplied table over (normal traction, squared slip speed).
    Table(TensorTable),
}

impl SlipModel {
    pub fn family(c0: f64, c1: f64, c2: f64, f0: f64, s0: f64) -> Self {
        SlipModel::Family(SlipParams { c0, c1, c2, f0, s0 })
    }

    pub fn constant(b: f64) -> Self {
        SlipModel::family(b, 0.0, 0.0, 1.0, 1.0)
    }

    /// Slip coefficient and its derivative with respect to the squared slip
    /// speed. Non-increasing in the normal traction and in the slip speed.
    pub fn eval(&self, f_nu: f64, s: f64) -> (f64, f64) {
        match self {
            SlipModel::Family(p) => {
                // Guard the sigmoid against overflow for very negative traction.
                let z = (f_nu / p.f0).clamp(-700.0, 700.0);
                let sig = 1.0 / (1.0 + z.exp());
                let denom = 1.0 + s / p.s0;
                let chi = p.c0 + p.c1 * sig + p.c2 / denom;
                let dchi = -p.c2 / (p.s0 * denom * denom);
                (chi, dchi)
            }
            SlipModel::Table(t) => {
                let q = [f_nu, s];
                (t.eval(&q), t.deriv(&q, 1))
            }
        }
    }
}

/// The electric field is given data; the flow equations do not feed back into
/// it.
#[derive(Clone, Debug)]
pub enum ElectricField {
    Uniform(Vector2<f64>),
    Analytic { e1: Expr, e2: Expr },
    /// One value per mesh vertex, interpolated piecewise linearly.
    Nodal(Vec<Vector2<f64>>),
}

impl ElectricField {
    /// Evaluate inside triangle `tri` at barycentric coordinates `bary`.
    /// This is the assembly fast path; no point location is performed.
    pub fn eval_in_tri(&self, mesh: &Mesh, tri: usize, bary: [f64; 3], x: Point) -> Vector2<f64> {
        match self {
            ElectricField::Uniform(e) => *e,
            ElectricField::Analytic { e1, e2 } => {
                Vector2::new(e1.eval(x.x, x.y), e2.eval(x.x, x.y))
            }
            ElectricField::Nodal(values) => {
                let t = mesh.triangles[tri];
                bary[0] * values[t[0]] + bary[1] * values[t[1]] + bary[2] * values[t[2]]
            }
        }
    }

    /// Evaluate at an arbitrary point of the closed domain.
    pub fn eval(&self, mesh: &Mesh, x: Point) -> Result<Vector2<f64>, ModelError> {
        if let ElectricField::Nodal(values) = self {
            if values.len() != mesh.nodes.len() {
                return Err(ModelError::NodalSizeMismatch {
                    got: values.len(),
                    want: mesh.nodes.len(),
                });
            }
        }
        let (tri, bary) = mesh.locate(x).ok_or(ModelError::OutsideDomain(x.x, x.y))?;
        Ok(self.eval_in_tri(mesh, tri, bary, x))
    }

    /// Upper bound for |E| over the domain, by sampling vertices and
    /// quadrature points (exact for the uniform and nodal kinds).
    pub fn max_abs(&self, mesh: &Mesh) -> f64 {
        match self {
            ElectricField::Uniform(e) => e.norm(),
            ElectricField::Nodal(values) => {
                values.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
            ElectricField::Analytic { .. } => {
                let mut m: f64 = 0.0;
                for p in &mesh.nodes {
                    m = m.max(self.eval_in_tri(mesh, 0, [0.0; 3], *p).norm());
                }
                for t in 0..mesh.triangles.len() {
                    for qp in crate::quadrature::TRI_ORDER6.iter() {
                        let [a, b, c] = mesh.triangles[t];
                        let x = qp.bary[0] * mesh.nodes[a]
                            + qp.bary[1] * mesh.nodes[b]
                            + qp.bary[2] * mesh.nodes[c];
                        m = m.max(self.eval_in_tri(mesh, t, qp.bary, x).norm());
                    }
                }
                m
            }
        }
    }
}

/// Certified constants of the viscosity and slip inequalities.
///
/// `a = [a1, a2, a3, a4]`: viscosity bounds, monotonicity minorant, and
/// derivative-growth majorant; `b` likewise for the slip coefficient.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CertifiedBounds {
    pub a: [f64; 4],
    pub b: [f64; 4],
    /// True when the bounds come from sampling only (tabulated models).
    pub empirical: bool,
}

impl CertifiedBounds {
    /// Strong-monotonicity constant of the frozen-coefficient operator.
    pub fn mu1(&self) -> f64 {
        (2.0 * self.a[0]).min(2.0 * self.a[2]).min(self.b[0]).min(self.b[2])
    }

    /// Lipschitz constant of the frozen-coefficient operator.
    pub fn mu2(&self) -> f64 {
        2.0 * self.a[1] + 4.0 * self.a[3] + self.b[1] + 2.0 * self.b[3]
    }

    /// Coercivity constant entering the a-priori bound on the solution.
    pub fn mu1_coercive(&self) -> f64 {
        (2.0 * self.a[0]).min(self.b[0])
    }
}

/// Which inequality of the admissibility conditions failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    /// Viscosity bounded below by a positive constant.
    ViscosityLowerBound,
    /// Viscosity bounded above.
    ViscosityUpperBound,
    /// Shear stress increases with shear rate: phi + 2*dphi*y1 >= a3 > 0.
    ViscousMonotonicity,
    /// |dphi/dy1| * y1 bounded.
    ViscousDerivativeGrowth,
    /// Slip coefficient bounded below by a positive constant.
    SlipLowerBound,
    /// Slip coefficient bounded above.
    SlipUpperBound,
    /// Friction force increases with slip speed: chi + 2*dchi*y2 >= b3 > 0.
    SlipMonotonicity,
    /// |dchi/dy2| * y2 bounded.
    SlipDerivativeGrowth,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Inequality::ViscosityLowerBound => "viscosity lower bound",
            Inequality::ViscosityUpperBound => "viscosity upper bound",
            Inequality::ViscousMonotonicity => "viscous monotonicity (phi + 2 phi' y1 > 0)",
            Inequality::ViscousDerivativeGrowth => "viscous derivative growth (|phi'| y1 bounded)",
            Inequality::SlipLowerBound => "slip lower bound",
            Inequality::SlipUpperBound => "slip upper bound",
            Inequality::SlipMonotonicity => "slip monotonicity (chi + 2 chi' y2 > 0)",
            Inequality::SlipDerivativeGrowth => "slip derivative growth (|chi'| y2 bounded)",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, Error, Serialize, Deserialize)]
#[error("constitutive model inadmissible: {inequality} fails at witness {witness:?} (value {value})")]
pub struct AdmissibilityViolation {
    pub inequality: Inequality,
    /// Arguments at which the inequality fails (model-specific layout).
    pub witness: Vec<f64>,
    pub value: f64,
}

/// Finite sampling box for the empirical confirmation scans.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ValidationBox {
    pub i_max: f64,
    /// Must be an upper bound for |E| over the domain.
    pub e_max: f64,
    pub f_nu_range: (f64, f64),
    pub s_max: f64,
}

impl ValidationBox {
    pub fn with_e_max(e_max: f64) -> Self {
        ValidationBox { i_max: 1e4, e_max, f_nu_range: (-1e3, 1e3), s_max: 1e4 }
    }
}

const SCAN_1D: usize = 10_000;
const SCAN_2D: usize = 100;
const SLACK: f64 = 1e-12;

/// Graded grid over [0, hi]: half linear, half geometric, so both the small-
/// and the large-argument regimes are scanned.
fn graded_grid(hi: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n + 1);
    let half = n / 2;
    for k in 0..=half {
        g.push(hi * k as f64 / half as f64 * 1e-3);
    }
    for k in 1..=(n - half) {
        g.push(hi * 1e-3 * (1e3f64).powf(k as f64 / (n - half) as f64));
    }
    g
}

/// Certify the admissibility conditions for a viscosity/slip pair.
///
/// For the default families the bounds are closed forms (taking the strain
/// invariant and slip speed unbounded above), confirmed by dense sampling on
/// the box. Tabulated models get sampled bounds only, flagged `empirical`.
pub fn validate_constitutive(
    viscosity: &ViscosityModel,
    slip: &SlipModel,
    vbox: &ValidationBox,
) -> Result<CertifiedBounds, AdmissibilityViolation> {
    let (a, vis_empirical) = viscosity_bounds(viscosity, vbox)?;
    let (b, slip_empirical) = slip_bounds(slip, vbox)?;
    let bounds = CertifiedBounds { a, b, empirical: vis_empirical || slip_empirical };
    confirm_by_sampling(viscosity, slip, vbox, &bounds)?;
    Ok(bounds)
}

fn viscosity_bounds(
    model: &ViscosityModel,
    vbox: &ValidationBox,
) -> Result<([f64; 4], bool), AdmissibilityViolation> {
    match model {
        ViscosityModel::Family(p) => {
            // Closed forms for the default family on I in [0, inf):
            //   a1 = psi0                       (infimum as I -> inf)
            //   a2 = psi0 + c_max lambda^{-1/2}  at I = 0
            //   a3 = psi0                       (phi + 2 phi' I = psi0 + c lambda (lambda+I)^{-3/2})
            //   a4 = c_max sup I (lambda+I)^{-3/2} / 2 = c_max 3^{-3/2} lambda^{-1/2}
            if p.psi0 <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::ViscosityLowerBound,
                    witness: vec![f64::INFINITY, 0.0, 0.0],
                    value: p.psi0,
                });
            }
            if p.lambda <= 0.0 || p.k0 < 0.0 || p.k1 < 0.0 || !(0.0..=1.0).contains(&p.k2) {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::ViscosityLowerBound,
                    witness: vec![0.0, 0.0, 0.0],
                    value: f64::NAN,
                });
            }
            let c_max = p.k0 + p.k1 * vbox.e_max * vbox.e_max;
            let a1 = p.psi0;
            let a2 = p.psi0 + c_max / p.lambda.sqrt();
            let a3 = p.psi0;
            let a4 = c_max * (3.0f64).powf(-1.5) / p.lambda.sqrt();
            Ok(([a1, a2, a3, a4], false))
        }
        ViscosityModel::Table(_) => {
            let (a, witness) = sample_viscosity_bounds(model, vbox);
            if a[0] <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::ViscosityLowerBound,
                    witness,
                    value: a[0],
                });
            }
            if a[2] <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::ViscousMonotonicity,
                    witness,
                    value: a[2],
                });
            }
            Ok((a, true))
        }
    }
}

fn sample_viscosity_bounds(model: &ViscosityModel, vbox: &ValidationBox) -> ([f64; 4], Vec<f64>) {
    let mut a1 = f64::INFINITY;
    let mut a2 = f64::NEG_INFINITY;
    let mut a3 = f64::INFINITY;
    let mut a4: f64 = 0.0;
    let mut witness = vec![0.0, 0.0, 0.0];
    for i in graded_grid(vbox.i_max, SCAN_1D) {
        for ke in 0..=4 {
            let e = vbox.e_max * ke as f64 / 4.0;
            for km in 0..=4 {
                let mu = km as f64 / 4.0;
                let (phi, dphi) = model.eval(i, e, mu);
                a2 = a2.max(phi);
                a4 = a4.max(dphi.abs() * i);
                let mono = phi + 2.0 * dphi * i;
                if phi < a1 {
                    a1 = phi;
                }
                if mono < a3 {
                    a3 = mono;
                    witness = vec![i, e, mu];
                }
            }
        }
    }
    ([a1, a2, a3, a4], witness)
}

fn slip_bounds(
    model: &SlipModel,
    vbox: &ValidationBox,
) -> Result<([f64; 4], bool), AdmissibilityViolation> {
    match model {
        SlipModel::Family(p) => {
            if p.c0 <= 0.0 || p.c1 < 0.0 || p.c2 < 0.0 || p.f0 <= 0.0 || p.s0 <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::SlipLowerBound,
                    witness: vec![0.0, 0.0],
                    value: p.c0,
                });
            }
            // Closed forms on y2 in [0, inf):
            //   b1 = c0, b2 = c0 + c1 + c2,
            //   b3 = c0 - c2/8  (minimum of (1-t)/(1+t)^2 over t >= 0 is -1/8 at t = 3,
            //                    with the sigmoid term at its infimum 0),
            //   b4 = c2/4       (maximum of t/(1+t)^2 is 1/4 at t = 1).
            let b3 = p.c0 - p.c2 / 8.0;
            if b3 <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::SlipMonotonicity,
                    witness: vec![vbox.f_nu_range.1, 3.0 * p.s0],
                    value: b3,
                });
            }
            Ok(([p.c0, p.c0 + p.c1 + p.c2, b3, p.c2 / 4.0], false))
        }
        SlipModel::Table(_) => {
            let (b, witness) = sample_slip_bounds(model, vbox);
            if b[0] <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::SlipLowerBound,
                    witness,
                    value: b[0],
                });
            }
            if b[2] <= 0.0 {
                return Err(AdmissibilityViolation {
                    inequality: Inequality::SlipMonotonicity,
                    witness,
                    value: b[2],
                });
            }
            Ok((b, true))
        }
    }
}

fn sample_slip_bounds(model: &SlipModel, vbox: &ValidationBox) -> ([f64; 4], Vec<f64>) {
    let mut b1 = f64::INFINITY;
    let mut b2 = f64::NEG_INFINITY;
    let mut b3 = f64::INFINITY;
    let mut b4: f64 = 0.0;
    let mut witness = vec![0.0, 0.0];
    let (f_lo, f_hi) = vbox.f_nu_range;
    for kf in 0..SCAN_2D {
        let f_nu = f_lo + (f_hi - f_lo) * kf as f64 / (SCAN_2D - 1) as f64;
        for s in graded_grid(vbox.s_max, SCAN_1D / SCAN_2D * 10) {
            let (chi, dchi) = model.eval(f_nu, s);
            b1 = b1.min(chi);
            b2 = b2.max(chi);
            b4 = b4.max(dchi.abs() * s);
            let mono = chi + 2.0 * dchi * s;
            if mono < b3 {
                b3 = mono;
                witness = vec![f_nu, s];
            }
        }
    }
    ([b1, b2, b3, b4], witness)
}

/// Dense sampling confirmation of the certified bounds; returns the violated
/// inequality with a witness when a sample escapes.
fn confirm_by_sampling(
    viscosity: &ViscosityModel,
    slip: &SlipModel,
    vbox: &ValidationBox,
    bounds: &CertifiedBounds,
) -> Result<(), AdmissibilityViolation> {
    let [a1, a2, a3, a4] = bounds.a;
    let tol = |x: f64| SLACK * (1.0 + x.abs());
    for i in graded_grid(vbox.i_max, SCAN_1D) {
        for (e, mu) in [(0.0, 0.0), (vbox.e_max, 0.0), (0.0, 1.0), (vbox.e_max, 1.0), (0.5 * vbox.e_max, 0.5)] {
            let (phi, dphi) = viscosity.eval(i, e, mu);
            let w = vec![i, e, mu];
            if phi < a1 - tol(a1) {
                return Err(AdmissibilityViolation { inequality: Inequality::ViscosityLowerBound, witness: w, value: phi });
            }
            if phi > a2 + tol(a2) {
                return Err(AdmissibilityViolation { inequality: Inequality::ViscosityUpperBound, witness: w, value: phi });
            }
            let mono = phi + 2.0 * dphi * i;
            if mono < a3 - tol(a3) {
                return Err(AdmissibilityViolation { inequality: Inequality::ViscousMonotonicity, witness: w, value: mono });
            }
            if dphi.abs() * i > a4 + tol(a4) {
                return Err(AdmissibilityViolation { inequality: Inequality::ViscousDerivativeGrowth, witness: w, value: dphi.abs() * i });
            }
        }
    }
    let [b1, b2, b3, b4] = bounds.b;
    let (f_lo, f_hi) = vbox.f_nu_range;
    for kf in 0..SCAN_2D {
        let f_nu = f_lo + (f_hi - f_lo) * kf as f64 / (SCAN_2D - 1) as f64;
        for s in graded_grid(vbox.s_max, SCAN_2D) {
            let (chi, dchi) = slip.eval(f_nu, s);
            let w = vec![f_nu, s];
            if chi < b1 - tol(b1) {
                return Err(AdmissibilityViolation { inequality: Inequality::SlipLowerBound, witness: w, value: chi });
            }
            if chi > b2 + tol(b2) {
                return Err(AdmissibilityViolation { inequality: Inequality::SlipUpperBound, witness: w, value: chi });
            }
            let mono = chi + 2.0 * dchi * s;
            if mono < b3 - tol(b3) {
                return Err(AdmissibilityViolation { inequality: Inequality::SlipMonotonicity, witness: w, value: mono });
            }
            if dchi.abs() * s > b4 + tol(b4) {
                return Err(AdmissibilityViolation { inequality: Inequality::SlipDerivativeGrowth, witness: w, value: dchi.abs() * s });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn invariant_of_simple_shear() {
        // u = (y, 0): grad = [[0, 1], [0, 0]], eps12 = 1/2, I = 2 * (1/2)^2.
        let g = Matrix2::new(0.0, 1.0, 0.0, 0.0);
        assert_relative_eq!(invariant_i(&g), 0.5);
    }

    #[test]
    fn invariant_of_diagonal_stretch() {
        let g = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert_relative_eq!(invariant_i(&g), 2.0);
        assert_relative_eq!(invariant_i(&Matrix2::zeros()), 0.0);
    }

    #[test]
    fn mu_angle_basic_geometry() {
        let s = MuSettings { alpha_reg: 0.0, frame_velocity: Vector2::zeros(), assume_nonzero_velocity: true };
        let mu = mu_angle(Vector2::new(1.0, 0.0), Vector2::new(2.0, 0.0), &s).unwrap();
        assert_relative_eq!(mu, 1.0);
        let mu = mu_angle(Vector2::new(0.0, 3.0), Vector2::new(5.0, 0.0), &s).unwrap();
        assert_relative_eq!(mu, 0.0);
        let mu = mu_angle(Vector2::new(1.0, 1.0), Vector2::new(1.0, 0.0), &s).unwrap();
        assert_relative_eq!(mu, 0.5);
    }

    #[test]
    fn mu_angle_zero_field_errors() {
        let s = MuSettings::default();
        assert!(matches!(
            mu_angle(Vector2::new(1.0, 0.0), Vector2::zeros(), &s),
            Err(ModelError::MuUndefinedAtZeroField)
        ));
    }

    #[test]
    fn viscosity_family_values() {
        let m = ViscosityModel::family(1.0, 1.0, 0.0, 0.0, 1.0);
        let (phi, dphi) = m.eval(0.0, 0.0, 0.0);
        assert_relative_eq!(phi, 2.0);
        assert_relative_eq!(dphi, -0.5);
        let (phi, dphi) = m.eval(3.0, 0.0, 0.0);
        assert_relative_eq!(phi, 1.5);
        assert_relative_eq!(dphi, -0.0625);
        // Field term vanishes at k2 * mu = 1.
        let m = ViscosityModel::family(1.0, 1.0, 2.0, 1.0, 1.0);
        let (phi, _) = m.eval(0.5, 1.0, 1.0);
        let (phi_ref, _) = ViscosityModel::family(1.0, 1.0, 0.0, 0.0, 1.0).eval(0.5, 0.0, 0.0);
        assert_relative_eq!(phi, phi_ref);
    }

    #[test]
    fn slip_family_values() {
        let m = SlipModel::family(1.0, 2.0, 0.0, 1.0, 1.0);
        let (chi, _) = m.eval(0.0, 0.0);
        assert_relative_eq!(chi, 2.0); // sigmoid(0) = 1/2
        let m = SlipModel::family(1.0, 0.0, 1.0, 1.0, 1.0);
        let (chi, dchi) = m.eval(0.0, 0.0);
        assert_relative_eq!(chi, 2.0);
        assert_relative_eq!(dchi, -1.0);
        // Large normal traction kills the sigmoid term.
        let m = SlipModel::family(1.0, 2.0, 0.5, 1.0, 1.0);
        let (chi, _) = m.eval(1e4, 1.0);
        assert_relative_eq!(chi, 1.0 + 0.5 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn validate_default_viscosity_closed_forms() {
        let v = ViscosityModel::family(1.0, 1.0, 0.0, 0.0, 1.0);
        let s = SlipModel::family(1.0, 2.0, 0.0, 1.0, 1.0);
        let bounds = validate_constitutive(&v, &s, &ValidationBox::with_e_max(1.0)).unwrap();
        assert_relative_eq!(bounds.a[0], 1.0);
        assert_relative_eq!(bounds.a[1], 2.0);
        assert_relative_eq!(bounds.a[2], 1.0);
        // a4 = sup I (1+I)^{-3/2} / 2 = 3^{-3/2}; confirmed below by a 1D
        // maximization oracle.
        assert_relative_eq!(bounds.a[3], 3.0f64.powf(-1.5), max_relative = 1e-14);
        let oracle = graded_grid(1e6, 2_000_000)
            .into_iter()
            .map(|i| 0.5 * i * (1.0 + i).powf(-1.5))
            .fold(0.0f64, f64::max);
        assert_relative_eq!(bounds.a[3], oracle, max_relative = 1e-4);
        // Slip: b1 = 1, b2 = 3, b3 = 1, b4 = 0.
        assert_relative_eq!(bounds.b[0], 1.0);
        assert_relative_eq!(bounds.b[1], 3.0);
        assert_relative_eq!(bounds.b[2], 1.0);
        assert_relative_eq!(bounds.b[3], 0.0);
        assert!(!bounds.empirical);
    }

    #[test]
    fn validate_rejects_strong_speed_weakening() {
        // c2 = 16 with c0 = 1: the slip monotonicity minorant c0 - c2/8 = -1.
        let v = ViscosityModel::family(1.0, 1.0, 0.0, 0.0, 1.0);
        let s = SlipModel::family(1.0, 0.0, 16.0, 1.0, 1.0);
        let err = validate_constitutive(&v, &s, &ValidationBox::with_e_max(1.0)).unwrap_err();
        assert_eq!(err.inequality, Inequality::SlipMonotonicity);
        // Witness near y2 = 3 s0, where the 1D oracle below locates the minimum.
        assert_relative_eq!(err.witness[1], 3.0, max_relative = 1e-12);
        let oracle = graded_grid(1e4, 1_000_000)
            .into_iter()
            .map(|s_| {
                let (chi, dchi) = SlipModel::family(1.0, 0.0, 16.0, 1.0, 1.0).eval(1e3, s_);
                (chi + 2.0 * dchi * s_, s_)
            })
            .fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc });
        assert!(oracle.0 < 0.0);
        assert_relative_eq!(oracle.1, 3.0, max_relative = 1e-2);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let v = ViscosityModel::family(1.2, 0.7, 0.4, 0.6, 0.3);
        let s = SlipModel::family(1.0, 0.8, 0.9, 1.4, 2.0);
        let h = 1e-6;
        for i in [0.1, 1.0, 7.3, 55.0] {
            let (_, dphi) = v.eval(i, 0.8, 0.3);
            let fd = (v.eval(i + h, 0.8, 0.3).0 - v.eval(i - h, 0.8, 0.3).0) / (2.0 * h);
            assert_relative_eq!(dphi, fd, max_relative = 1e-6);
        }
        for sp in [0.1, 1.0, 4.0, 30.0] {
            let (_, dchi) = s.eval(0.5, sp);
            let fd = (s.eval(0.5, sp + h).0 - s.eval(0.5, sp - h).0) / (2.0 * h);
            assert_relative_eq!(dchi, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn default_family_monotonicity_closed_form_pointwise() {
        // phi + 2 phi' y1 = psi0 + c lambda (lambda+y1)^{-3/2} >= psi0.
        let p = ViscosityParams { psi0: 0.9, k0: 0.6, k1: 0.5, k2: 0.3, lambda: 0.8 };
        let v = ViscosityModel::Family(p);
        for i in graded_grid(1e5, 1000) {
            let (phi, dphi) = v.eval(i, 1.0, 0.5);
            let c = p.k0 + p.k1 * (1.0 - p.k2 * 0.5);
            let closed = p.psi0 + c * p.lambda * (p.lambda + i).powf(-1.5);
            assert_relative_eq!(phi + 2.0 * dphi * i, closed, max_relative = 1e-12);
            assert!(phi + 2.0 * dphi * i >= p.psi0 - 1e-12);
        }
    }

    #[test]
    fn slip_family_monotonicity_lower_envelope() {
        // chi + 2 chi' y2 >= c0 + c1 sigmoid - c2/8.
        let p = SlipParams { c0: 1.0, c1: 0.7, c2: 2.0, f0: 1.3, s0: 0.9 };
        let m = SlipModel::Family(p);
        for f_nu in [-5.0, 0.0, 5.0] {
            for s in graded_grid(1e4, 1000) {
                let (chi, dchi) = m.eval(f_nu, s);
                let sig = 1.0 / (1.0 + (f_nu / p.f0).exp());
                assert!(chi + 2.0 * dchi * s >= p.c0 + p.c1 * sig - p.c2 / 8.0 - 1e-12);
            }
        }
    }

    #[test]
    fn electric_field_kinds() {
        let mesh = crate::mesh::unit_square_two_tris();
        let e = ElectricField::Uniform(Vector2::new(0.0, 1.0));
        assert_eq!(e.eval(&mesh, Point::new(0.3, 0.3)).unwrap(), Vector2::new(0.0, 1.0));

        let nodal = ElectricField::Nodal(vec![Vector2::new(2.0, 1.0); 4]);
        let v = nodal.eval(&mesh, Point::new(0.37, 0.11)).unwrap();
        assert_relative_eq!(v.x, 2.0, max_relative = 1e-14);
        assert_relative_eq!(v.y, 1.0, max_relative = 1e-14);

        let analytic = ElectricField::Analytic {
            e1: Expr::parse("0").unwrap(),
            e2: Expr::parse("x1").unwrap(),
        };
        let v = analytic.eval(&mesh, Point::new(0.5, 0.2)).unwrap();
        assert_relative_eq!(v.y, 0.5);

        assert!(matches!(
            analytic.eval(&mesh, Point::new(2.0, 2.0)),
            Err(ModelError::OutsideDomain(_, _))
        ));
    }

    #[test]
    fn tabulated_viscosity_is_empirical() {
        // Table of the constant-viscosity function; bounds come from sampling.
        let table = TensorTable {
            axes: vec![vec![0.0, 1.0, 10.0, 100.0], vec![0.0, 1.0], vec![0.0, 1.0]],
            values: vec![2.0; 4 * 2 * 2],
        };
        let v = ViscosityModel::Table(table);
        let s = SlipModel::constant(1.0);
        let mut vbox = ValidationBox::with_e_max(1.0);
        vbox.i_max = 100.0;
        vbox.s_max = 100.0;
        let bounds = validate_constitutive(&v, &s, &vbox).unwrap();
        assert!(bounds.empirical);
        assert_relative_eq!(bounds.a[0], 2.0, max_relative = 1e-9);
        assert_relative_eq!(bounds.a[1], 2.0, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn invariant_objectivity(g in prop::array::uniform4(-10.0f64..10.0), w in -10.0f64..10.0) {
            let grad = Matrix2::new(g[0], g[1], g[2], g[3]);
            let skew = Matrix2::new(0.0, w, -w, 0.0);
            let i1 = invariant_i(&grad);
            prop_assert!((i1 - invariant_i(&grad.transpose())).abs() <= 1e-12 * (1.0 + i1));
            prop_assert!((i1 - invariant_i(&(grad + skew))).abs() <= 1e-10 * (1.0 + i1));
        }

        #[test]
        fn mu_angle_in_unit_interval_and_scale_invariant(
            ux in -5.0f64..5.0, uy in -5.0f64..5.0,
            ex in -5.0f64..5.0, ey in -5.0f64..5.0,
            alpha in 0.0f64..1.0, scale in 0.1f64..100.0,
        ) {
            prop_assume!(ex.abs() + ey.abs() > 1e-6);
            let s = MuSettings { alpha_reg: alpha, frame_velocity: Vector2::zeros(), assume_nonzero_velocity: true };
            let u = Vector2::new(ux, uy);
            let e = Vector2::new(ex, ey);
            let mu = mu_angle(u, e, &s).unwrap();
            prop_assert!((0.0..=1.0).contains(&mu));
            let mu_scaled = mu_angle(u, scale * e, &s).unwrap();
            prop_assert!((mu - mu_scaled).abs() < 1e-12);
        }
    }
}
