//! Solution algorithms: the penalty method (divergence penalization with
//! pressure recovery and continuation) and the mixed saddle-point Galerkin
//! method, both driven by a frozen-coefficient fixed-point outer loop with
//! damped Newton inner solves.
//!
//! The outer map freezes the angle field inside the viscosity and the
//! regularized normal traction inside the slip law at the current iterate;
//! the remaining strain and slip-speed nonlinearities stay in the inner
//! problem, which is strongly monotone and Lipschitz, so Newton with Armijo
//! backtracking is safe there.

use crate::assembly::{DiscreteSystem, Frozen};
use crate::sparse::{axpy, norm2, CsrMatrix, LltSolver, LuSolver, TripletList};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Penalty,
    Mixed,
}

/// Which slip law enters the weak form: the traction variant keeps the
/// squared slip speed as an inner nonlinearity; the mollified-velocity
/// variant freezes the regularized slip speed with the traction, which drops
/// the slip-coefficient derivative from the inner problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlipVariant {
    Traction,
    MollifiedVelocity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolveMethod,
    /// Penalty parameter.
    pub alpha: f64,
    /// Optional strictly decreasing continuation schedule.
    pub alpha_schedule: Vec<f64>,
    /// Relative tolerance of the outer fixed point (Z-norm of the velocity
    /// update and L2 norm of the pressure update).
    pub tol_fp: f64,
    /// Relative tolerance of the inner Newton residual.
    pub tol_newton: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Damping factor in (0, 1] applied to the outer update.
    pub damping: f64,
    pub slip_variant: SlipVariant,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolveMethod::Mixed,
            alpha: 1e-6,
            alpha_schedule: Vec::new(),
            tol_fp: 1e-8,
            tol_newton: 1e-10,
            max_outer: 50,
            max_inner: 30,
            damping: 1.0,
            slip_variant: SlipVariant::Traction,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha <= 0.0 {
            return Err("penalty parameter must be positive".into());
        }
        if self.tol_fp <= 0.0 || self.tol_newton <= 0.0 {
            return Err("tolerances must be positive".into());
        }
        if !(0.0 < self.damping && self.damping <= 1.0) {
            return Err("damping factor must lie in (0, 1]".into());
        }
        if !self.alpha_schedule.windows(2).all(|w| w[0] > w[1]) {
            return Err("alpha schedule must be strictly decreasing".into());
        }
        if self.alpha_schedule.iter().any(|a| *a <= 0.0) {
            return Err("alpha schedule entries must be positive".into());
        }
        Ok(())
    }
}

/// Nodal solution: full two-component velocity at every P2 node and pressure
/// at the vertices.
#[derive(Clone, Debug)]
pub struct SolutionFields {
    pub velocity: Vec<Vector2<f64>>,
    pub pressure: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: SolveMethod,
    pub alpha: Option<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    /// Newton residual history per outer iteration.
    pub residual_history: Vec<Vec<f64>>,
    /// Z-norm update ratio of the last two outer iterations.
    pub contraction_ratio: Option<f64>,
    pub div_u_l2: f64,
    pub z_norm_u: f64,
    pub pressure_l2: f64,
    pub load_dual_norm: f64,
    /// `|K+F|_{Z*} / min(2 a1, b1)`.
    pub apriori_bound: f64,
    pub apriori_bound_satisfied: bool,
    /// Set when some Armijo line search could not reduce the residual.
    pub backtracking_stalled: bool,
    /// Set when the mollifier fell back to unmollified values somewhere.
    pub underresolved_kernel: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("inner Newton diverged after {iterations} iterations (residual {last_residual:.3e})")]
    NewtonDiverged { iterations: usize, last_residual: f64, history: Vec<f64> },
    #[error("outer fixed point did not converge within {} iterations", .0.outer_iterations)]
    OuterNonConvergence(Box<SolverReport>),
    #[error("{0}")]
    Singular(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// Velocity/pressure iterate in dof coordinates.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct InnerStats {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub backtracking_stalled: bool,
}

pub struct OuterOutcome {
    pub iterate: Iterate,
    pub outer_iterations: usize,
    pub inner_stats: Vec<InnerStats>,
    pub converged: bool,
    pub contraction_ratio: Option<f64>,
    pub underresolved_kernel: bool,
}

/// Frozen-coefficient fixed-point driver shared by both methods.
///
/// `inner` solves the problem with frozen coefficients from the given
/// iterate; `full_residual` re-freezes at the new iterate and evaluates the
/// residual of the full nonlinear problem, which grants early convergence
/// when the frozen maps are iterate-independent. Convergence otherwise
/// requires both update norms to drop below the relative tolerance.
pub fn outer_fixed_point<I, R>(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
    start: Iterate,
    mut inner: I,
    mut full_residual: R,
) -> Result<OuterOutcome, SolveError>
where
    I: FnMut(&Frozen, &Iterate) -> Result<(Iterate, InnerStats), SolveError>,
    R: FnMut(&Frozen, &Iterate) -> f64,
{
    let mollified = cfg.slip_variant == SlipVariant::MollifiedVelocity;
    let load_norm = norm2(&sys.load);
    let mut state = start;
    let mut inner_stats = Vec::new();
    let mut underresolved = false;
    let mut prev_step: Option<f64> = None;
    let mut contraction = None;
    let theta = cfg.damping;

    for outer in 1..=cfg.max_outer {
        let frozen = sys.freeze(&state.u, &state.p, mollified);
        underresolved |= frozen.slip.traction.underresolved_points > 0;
        let (hat, stats) = inner(&frozen, &state)?;
        inner_stats.push(stats);

        let mut new_u = state.u.clone();
        let mut new_p = state.p.clone();
        for (v, h) in new_u.iter_mut().zip(&hat.u) {
            *v = (1.0 - theta) * *v + theta * h;
        }
        for (v, h) in new_p.iter_mut().zip(&hat.p) {
            *v = (1.0 - theta) * *v + theta * h;
        }
        if new_u.iter().any(|v| !v.is_finite()) || new_p.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite("outer iterate".into()));
        }

        let du: Vec<f64> = new_u.iter().zip(&state.u).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = new_p.iter().zip(&state.p).map(|(a, b)| a - b).collect();
        let du_norm = sys.z_norm(&du);
        let dp_norm = sys.pressure_l2(&dp);
        let u_scale = sys.z_norm(&state.u).max(1.0);
        let p_scale = sys.pressure_l2(&state.p).max(1.0);
        if let Some(prev) = prev_step {
            if prev > 0.0 {
                contraction = Some(du_norm / prev);
            }
        }
        prev_step = Some(du_norm);
        state = Iterate { u: new_u, p: new_p };

        let step_small = du_norm <= cfg.tol_fp * u_scale && dp_norm <= cfg.tol_fp * p_scale;
        let step_converged = if step_small {
            true
        } else {
            // Re-freeze at the new iterate; if the full nonlinear residual is
            // already at the Newton tolerance the fixed point is reached
            // (constant frozen maps converge here in one outer iteration).
            let refrozen = sys.freeze(&state.u, &state.p, mollified);
            let rn = full_residual(&refrozen, &state);
            rn <= cfg.tol_newton * load_norm || rn == 0.0
        };
        if step_converged {
            return Ok(OuterOutcome {
                iterate: state,
                outer_iterations: outer,
                inner_stats,
                converged: true,
                contraction_ratio: contraction,
                underresolved_kernel: underresolved,
            });
        }
    }
    Ok(OuterOutcome {
        iterate: state,
        outer_iterations: cfg.max_outer,
        inner_stats,
        converged: false,
        contraction_ratio: contraction,
        underresolved_kernel: underresolved,
    })
}

/// Residual of the penalty problem at `u` with frozen coefficients:
/// viscous + slip + divergence penalty minus load.
fn penalty_residual(sys: &DiscreteSystem, frozen: &Frozen, u: &[f64], alpha: f64) -> Vec<f64> {
    let u_nodal = sys.dof.velocity_from_dofs(u);
    let (mut r, _) = crate::assembly::assemble_viscous(
        &sys.dof,
        &sys.mesh,
        &sys.elems,
        &sys.viscosity,
        &sys.e_at_qp,
        &frozen.mu_vertex,
        &u_nodal,
        false,
    );
    let (rs, _) =
        crate::assembly::assemble_slip(&sys.dof, &sys.bedges, &sys.slip, &frozen.slip, &u_nodal, false);
    axpy(&mut r, 1.0, &rs);
    let pen = sys.div_penalty.matvec(u);
    axpy(&mut r, 1.0 / alpha, &pen);
    axpy(&mut r, -1.0, &sys.load);
    r
}

fn penalty_jacobian(sys: &DiscreteSystem, frozen: &Frozen, u: &[f64], alpha: f64) -> CsrMatrix {
    let u_nodal = sys.dof.velocity_from_dofs(u);
    let (_, jv) = crate::assembly::assemble_viscous(
        &sys.dof,
        &sys.mesh,
        &sys.elems,
        &sys.viscosity,
        &sys.e_at_qp,
        &frozen.mu_vertex,
        &u_nodal,
        true,
    );
    let (_, js) =
        crate::assembly::assemble_slip(&sys.dof, &sys.bedges, &sys.slip, &frozen.slip, &u_nodal, true);
    let mut trip = jv.unwrap();
    trip.extend_from(&js.unwrap(), 0, 0);
    // Divergence penalty contribution.
    for r in 0..sys.div_penalty.nrows {
        let (cols, vals) = sys.div_penalty.row(r);
        for (c, v) in cols.iter().zip(vals) {
            trip.push(r, *c, v / alpha);
        }
    }
    trip.to_csr()
}

/// Damped Newton on the penalty problem with frozen coefficients. The
/// Jacobian inherits positive definiteness from the monotonicity bounds, so
/// a Cholesky factorization is attempted first.
fn penalty_inner(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
    frozen: &Frozen,
    start: &[f64],
    alpha: f64,
) -> Result<(Vec<f64>, InnerStats), SolveError> {
    let load_norm = norm2(&sys.load);
    let target = cfg.tol_newton * load_norm;
    let mut q = start.to_vec();
    let mut r = penalty_residual(sys, frozen, &q, alpha);
    let mut rn = norm2(&r);
    let mut stats = InnerStats { residual_history: vec![rn], ..Default::default() };
    for iter in 1..=cfg.max_inner {
        stats.iterations = iter;
        if rn <= target || rn == 0.0 {
            return Ok((q, stats));
        }
        if !rn.is_finite() {
            return Err(SolveError::NonFinite("penalty residual".into()));
        }
        let jac = penalty_jacobian(sys, frozen, &q, alpha);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = match LltSolver::new(&jac) {
            Ok(s) => s.solve(&neg_r),
            Err(_) => LuSolver::new(&jac)
                .map_err(|_| SolveError::Singular("penalty matrix singular".into()))?
                .solve(&neg_r),
        };
        let (q_new, r_new, rn_new, stalled) =
            armijo(|qq| penalty_residual(sys, frozen, qq, alpha), &q, &delta, rn);
        stats.backtracking_stalled |= stalled;
        q = q_new;
        r = r_new;
        rn = rn_new;
        stats.residual_history.push(rn);
    }
    if rn <= target || rn == 0.0 {
        return Ok((q, stats));
    }
    Err(SolveError::NewtonDiverged {
        iterations: cfg.max_inner,
        last_residual: rn,
        history: stats.residual_history,
    })
}

/// Armijo backtracking on the residual norm: halve the step up to 8 times
/// until the norm decreases sufficiently; if it never does, take the last
/// trial and report the stall.
fn armijo(
    residual: impl Fn(&[f64]) -> Vec<f64>,
    q: &[f64],
    delta: &[f64],
    rn0: f64,
) -> (Vec<f64>, Vec<f64>, f64, bool) {
    let mut s = 1.0;
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for _ in 0..=8 {
        let mut q_try = q.to_vec();
        axpy(&mut q_try, s, delta);
        let r_try = residual(&q_try);
        let rn_try = norm2(&r_try);
        if rn_try <= (1.0 - 1e-4 * s) * rn0 {
            return (q_try, r_try, rn_try, false);
        }
        match &best {
            Some((_, _, rn_best)) if *rn_best <= rn_try => {}
            _ => best = Some((q_try, r_try, rn_try)),
        }
        s *= 0.5;
    }
    let (q_try, r_try, rn_try) = best.expect("at least one trial");
    (q_try, r_try, rn_try, true)
}

fn finish_report(
    sys: &DiscreteSystem,
    method: SolveMethod,
    alpha: Option<f64>,
    outcome: &OuterOutcome,
    wall_time_s: f64,
) -> SolverReport {
    let z_u = sys.z_norm(&outcome.iterate.u);
    let load_dual = sys.load_dual_norm();
    let apriori = load_dual / sys.bounds.mu1_coercive();
    SolverReport {
        method,
        alpha,
        converged: outcome.converged,
        outer_iterations: outcome.outer_iterations,
        inner_iterations: outcome.inner_stats.iter().map(|s| s.iterations).collect(),
        residual_history: outcome.inner_stats.iter().map(|s| s.residual_history.clone()).collect(),
        contraction_ratio: outcome.contraction_ratio,
        div_u_l2: sys.div_l2(&outcome.iterate.u),
        z_norm_u: z_u,
        pressure_l2: sys.pressure_l2(&outcome.iterate.p),
        load_dual_norm: load_dual,
        apriori_bound: apriori,
        apriori_bound_satisfied: z_u <= apriori * (1.0 + 1e-8) + 1e-14,
        backtracking_stalled: outcome.inner_stats.iter().any(|s| s.backtracking_stalled),
        underresolved_kernel: outcome.underresolved_kernel,
        wall_time_s,
    }
}

fn fields_from(sys: &DiscreteSystem, it: &Iterate) -> SolutionFields {
    SolutionFields { velocity: sys.dof.velocity_from_dofs(&it.u), pressure: it.p.clone() }
}

/// Solve the penalty problem at `cfg.alpha`, optionally warm-started.
pub fn solve_penalty_from(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
    warm: Option<&Iterate>,
) -> Result<(SolutionFields, SolverReport, Iterate), SolveError> {
    cfg.validate().map_err(SolveError::Config)?;
    let t0 = std::time::Instant::now();
    let alpha = cfg.alpha;
    let start = match warm {
        Some(it) => Iterate { u: it.u.clone(), p: sys.recover_pressure(&it.u, alpha) },
        None => Iterate {
            u: vec![0.0; sys.n_velocity_dofs()],
            p: vec![0.0; sys.n_pressure_dofs()],
        },
    };
    let outcome = outer_fixed_point(
        sys,
        cfg,
        start,
        |frozen, state| {
            let (u, stats) = penalty_inner(sys, cfg, frozen, &state.u, alpha)?;
            let p = sys.recover_pressure(&u, alpha);
            Ok((Iterate { u, p }, stats))
        },
        |frozen, state| norm2(&penalty_residual(sys, frozen, &state.u, alpha)),
    )?;
    let report = finish_report(sys, SolveMethod::Penalty, Some(alpha), &outcome, t0.elapsed().as_secs_f64());
    if !report.converged {
        return Err(SolveError::OuterNonConvergence(Box::new(report)));
    }
    Ok((fields_from(sys, &outcome.iterate), report, outcome.iterate))
}

pub fn solve_penalty(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
) -> Result<(SolutionFields, SolverReport), SolveError> {
    solve_penalty_from(sys, cfg, None).map(|(f, r, _)| (f, r))
}

/// One continuation step: the penalty parameter and the solve outcome.
pub struct ContinuationStep {
    pub alpha: f64,
    pub result: Result<(SolutionFields, SolverReport), SolveError>,
}

/// Run the penalty solver over a decreasing schedule, warm-starting each
/// solve from the previous one. Failures are recorded and the remaining
/// parameters continue from the last success.
pub fn penalty_continuation(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
    schedule: &[f64],
) -> Vec<ContinuationStep> {
    let mut steps = Vec::with_capacity(schedule.len());
    let mut warm: Option<Iterate> = None;
    for &alpha in schedule {
        let mut cfg_i = cfg.clone();
        cfg_i.alpha = alpha;
        cfg_i.alpha_schedule = Vec::new();
        match solve_penalty_from(sys, &cfg_i, warm.as_ref()) {
            Ok((fields, report, iterate)) => {
                warm = Some(iterate);
                steps.push(ContinuationStep { alpha, result: Ok((fields, report)) });
            }
            Err(e) => steps.push(ContinuationStep { alpha, result: Err(e) }),
        }
    }
    steps
}

/// Residual of the mixed problem at `(u, r)` with `r = -p`:
/// `F1 = M(u) + A(u) + B^T r - L`, `F2 = B u`.
fn mixed_residual(sys: &DiscreteSystem, frozen: &Frozen, u: &[f64], r_neg_p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let u_nodal = sys.dof.velocity_from_dofs(u);
    let (mut f1, _) = crate::assembly::assemble_viscous(
        &sys.dof,
        &sys.mesh,
        &sys.elems,
        &sys.viscosity,
        &sys.e_at_qp,
        &frozen.mu_vertex,
        &u_nodal,
        false,
    );
    let (rs, _) =
        crate::assembly::assemble_slip(&sys.dof, &sys.bedges, &sys.slip, &frozen.slip, &u_nodal, false);
    axpy(&mut f1, 1.0, &rs);
    let bt = sys.b_div.matvec_transpose(r_neg_p);
    axpy(&mut f1, 1.0, &bt);
    axpy(&mut f1, -1.0, &sys.load);
    let f2 = sys.b_div.matvec(u);
    (f1, f2)
}

fn stack(sys: &DiscreteSystem, f1: &[f64], f2: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sys.n_velocity_dofs() + sys.n_pressure_dofs());
    out.extend_from_slice(f1);
    out.extend_from_slice(f2);
    out
}

/// Newton on the frozen-coefficient saddle problem. Each step solves the
/// symmetric indefinite block system `[J B^T; B 0]` by a sparse direct
/// factorization with pivoting.
fn mixed_inner(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
    frozen: &Frozen,
    start_u: &[f64],
    start_p: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, InnerStats), SolveError> {
    let nu = sys.n_velocity_dofs();
    let np = sys.n_pressure_dofs();
    let load_norm = norm2(&sys.load);
    let target = cfg.tol_newton * load_norm;
    let mut u = start_u.to_vec();
    let mut r_neg_p: Vec<f64> = start_p.iter().map(|p| -p).collect();
    let (mut f1, mut f2) = mixed_residual(sys, frozen, &u, &r_neg_p);
    let mut rn = norm2(&stack(sys, &f1, &f2));
    let mut stats = InnerStats { residual_history: vec![rn], ..Default::default() };
    for iter in 1..=cfg.max_inner {
        stats.iterations = iter;
        if rn <= target || rn == 0.0 {
            let p = r_neg_p.iter().map(|r| -r).collect();
            return Ok((u, p, stats));
        }
        if !rn.is_finite() {
            return Err(SolveError::NonFinite("mixed residual".into()));
        }
        // Assemble [J B^T; B 0].
        let u_nodal = sys.dof.velocity_from_dofs(&u);
        let (_, jv) = crate::assembly::assemble_viscous(
            &sys.dof,
            &sys.mesh,
            &sys.elems,
            &sys.viscosity,
            &sys.e_at_qp,
            &frozen.mu_vertex,
            &u_nodal,
            true,
        );
        let (_, js) = crate::assembly::assemble_slip(
            &sys.dof,
            &sys.bedges,
            &sys.slip,
            &frozen.slip,
            &u_nodal,
            true,
        );
        let mut trip = TripletList::new(nu + np, nu + np);
        trip.extend_from(&jv.unwrap(), 0, 0);
        trip.extend_from(&js.unwrap(), 0, 0);
        for row in 0..np {
            let (cols, vals) = sys.b_div.row(row);
            for (c, v) in cols.iter().zip(vals) {
                trip.push(nu + row, *c, *v);
                trip.push(*c, nu + row, *v);
            }
        }
        let saddle = trip.to_csr();
        let lu = LuSolver::new(&saddle).map_err(|_| {
            SolveError::Singular(
                "saddle system singular; check the discrete inf-sup condition (run the infsup verification)"
                    .into(),
            )
        })?;
        let mut rhs = stack(sys, &f1, &f2);
        for v in &mut rhs {
            *v = -*v;
        }
        let delta = lu.solve(&rhs);

        let mut s = 1.0;
        let mut accepted = false;
        let mut best: Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64)> = None;
        for _ in 0..=8 {
            let mut u_try = u.clone();
            let mut r_try = r_neg_p.clone();
            for (k, v) in u_try.iter_mut().enumerate() {
                *v += s * delta[k];
            }
            for (k, v) in r_try.iter_mut().enumerate() {
                *v += s * delta[nu + k];
            }
            let (f1_t, f2_t) = mixed_residual(sys, frozen, &u_try, &r_try);
            let rn_t = norm2(&stack(sys, &f1_t, &f2_t));
            if rn_t <= (1.0 - 1e-4 * s) * rn {
                u = u_try;
                r_neg_p = r_try;
                f1 = f1_t;
                f2 = f2_t;
                rn = rn_t;
                accepted = true;
                break;
            }
            match &best {
                Some((_, _, _, _, rn_best)) if *rn_best <= rn_t => {}
                _ => best = Some((u_try, r_try, f1_t, f2_t, rn_t)),
            }
            s *= 0.5;
        }
        if !accepted {
            let (u_b, r_b, f1_b, f2_b, rn_b) = best.expect("at least one trial");
            u = u_b;
            r_neg_p = r_b;
            f1 = f1_b;
            f2 = f2_b;
            rn = rn_b;
            stats.backtracking_stalled = true;
        }
        stats.residual_history.push(rn);
    }
    if rn <= target || rn == 0.0 {
        let p = r_neg_p.iter().map(|r| -r).collect();
        return Ok((u, p, stats));
    }
    Err(SolveError::NewtonDiverged {
        iterations: cfg.max_inner,
        last_residual: rn,
        history: stats.residual_history,
    })
}

/// Mixed Galerkin solve with exact discrete incompressibility.
pub fn solve_mixed(
    sys: &DiscreteSystem,
    cfg: &SolverConfig,
) -> Result<(SolutionFields, SolverReport), SolveError> {
    cfg.validate().map_err(SolveError::Config)?;
    let t0 = std::time::Instant::now();
    let start = Iterate {
        u: vec![0.0; sys.n_velocity_dofs()],
        p: vec![0.0; sys.n_pressure_dofs()],
    };
    let outcome = outer_fixed_point(
        sys,
        cfg,
        start,
        |frozen, state| {
            let (u, p, stats) = mixed_inner(sys, cfg, frozen, &state.u, &state.p)?;
            Ok((Iterate { u, p }, stats))
        },
        |frozen, state| {
            let r_neg_p: Vec<f64> = state.p.iter().map(|p| -p).collect();
            let (f1, f2) = mixed_residual(sys, frozen, &state.u, &r_neg_p);
            norm2(&stack(sys, &f1, &f2))
        },
    )?;
    let report = finish_report(sys, SolveMethod::Mixed, None, &outcome, t0.elapsed().as_secs_f64());
    if !report.converged {
        return Err(SolveError::OuterNonConvergence(Box::new(report)));
    }
    Ok((fields_from(sys, &outcome.iterate), report))
}

/// Residual operator of the frozen-coefficient problem without load or
/// penalty: the viscous plus slip parts only. This is the operator whose
/// monotonicity and Lipschitz constants the verification module probes.
pub fn frozen_operator_apply(sys: &DiscreteSystem, frozen: &Frozen, u: &[f64]) -> Vec<f64> {
    let u_nodal = sys.dof.velocity_from_dofs(u);
    let (mut r, _) = crate::assembly::assemble_viscous(
        &sys.dof,
        &sys.mesh,
        &sys.elems,
        &sys.viscosity,
        &sys.e_at_qp,
        &frozen.mu_vertex,
        &u_nodal,
        false,
    );
    let (rs, _) =
        crate::assembly::assemble_slip(&sys.dof, &sys.bedges, &sys.slip, &frozen.slip, &u_nodal, false);
    axpy(&mut r, 1.0, &rs);
    r
}

/// Convenience: velocity max-norm distance between two solutions.
pub fn velocity_max_distance(a: &SolutionFields, b: &SolutionFields) -> f64 {
    a.velocity
        .iter()
        .zip(&b.velocity)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Z-norm of the dof-space difference of two iterates.
pub fn iterate_distance(sys: &DiscreteSystem, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    sys.z_norm(&d)
}
