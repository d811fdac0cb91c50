//! Semi-implicit theta-method time stepping and the coupled driver.
//!
//! Each step solves, in order: the Fisher-Kolmogorov transport step with the
//! nonlinear reaction linearized around the extrapolated concentration
//! `c* = (3/2) c^n - (1/2) c^{n-1}`, the logistic atrophy step with the
//! carrying capacity frozen at the new concentration, and the quasi-static
//! elasticity solve forced by the new atrophy field.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{create_space, l2_project, DgField, DgSpace};
use crate::forms::{
    assemble_coupling, assemble_diffusion_sip, assemble_elasticity_sip, assemble_logistic,
    assemble_logistic_nonlinear, assemble_mass, diffusion_boundary_rhs, elasticity_boundary_rhs,
    volume_rhs_scalar, volume_rhs_vector, PenaltyParams,
};
use crate::geometry::Vec3;
use crate::linalg::{cg, gmres, BlockJacobi, CsrMatrix, SolverReport};
use crate::mesh::{classify_faces, BoundarySpec, FacePartition, Mesh};
use crate::physics::{beta_of_c, ModelParams};

/// Uniform partition of `[0, T]` into `n_steps` intervals.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end > 0.0) {
            return Err(Error::InvalidParameter(
                "dt and t_end must be positive".into(),
            ));
        }
        let n = (t_end / dt).round() as usize;
        if n == 0 || ((n as f64) * dt - t_end).abs() > 1e-9 * t_end {
            return Err(Error::InvalidParameter(format!(
                "t_end = {t_end} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(TimeGrid { dt, n_steps: n })
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Second-order extrapolant `1.5 a - 0.5 b`.
pub fn extrapolate(c_n: &[f64], c_nm1: &[f64]) -> Result<Vec<f64>> {
    if c_n.len() != c_nm1.len() {
        return Err(Error::DimensionMismatch(format!(
            "extrapolate: {} vs {}",
            c_n.len(),
            c_nm1.len()
        )));
    }
    Ok(c_n
        .iter()
        .zip(c_nm1)
        .map(|(a, b)| 1.5 * a - 0.5 * b)
        .collect())
}

/// Time-stepper state: the current and previous coefficient vectors of the
/// evolving fields plus the latest displacement.
#[derive(Debug, Clone)]
pub struct StepperState {
    pub c: DgField,
    pub c_prev: DgField,
    pub g: DgField,
    pub g_prev: DgField,
    pub u: DgField,
    pub t: f64,
    pub step: usize,
}

/// Stationary operators of the transport equation.
pub struct FkOperators {
    pub m_c: CsrMatrix,
    pub a_c: CsrMatrix,
    pub m_alpha: CsrMatrix,
    /// A_c - M_alpha, the theta-weighted stiffness of the step matrix.
    pub stiff: CsrMatrix,
}

impl FkOperators {
    pub fn assemble(
        space: &DgSpace,
        params: &ModelParams,
        part: &FacePartition,
    ) -> Result<Self> {
        let pen = PenaltyParams {
            eta0: params.eta0,
            xi0: params.xi0,
        };
        let d = params.diffusion()?;
        let m_c = assemble_mass(space, |_, _| 1.0);
        let a_c = assemble_diffusion_sip(space, |_| d, params.alpha, part, &pen)?;
        let m_alpha = assemble_mass(space, |_, _| params.alpha);
        let stiff = a_c.add_scaled(&m_alpha, -1.0);
        Ok(FkOperators {
            m_c,
            a_c,
            m_alpha,
            stiff,
        })
    }
}

fn dof_block_layout(space: &DgSpace) -> Vec<usize> {
    let mut out: Vec<usize> = (0..space.n_elements())
        .map(|e| space.element_dofs(e).start)
        .collect();
    out.push(space.n_dofs());
    out
}

/// CG with block-Jacobi, falling back to restarted GMRES if CG reports an
/// indefinite matrix. Non-convergence is an error.
fn solve_step_system(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    layout: &[usize],
    label: &str,
) -> Result<(Vec<f64>, SolverReport)> {
    let tol = 1e-10;
    let maxit = 10 * a.rows;
    let precond = BlockJacobi::new(a, layout)?;
    let attempt = cg(a, b, x0, tol, maxit, &precond);
    let (x, report) = match attempt {
        Ok(pair) => pair,
        Err(Error::IndefiniteMatrix { .. }) => gmres(a, b, x0, 30, tol, maxit, &precond)?,
        Err(e) => return Err(e),
    };
    if !report.converged {
        return Err(Error::SolverDiverged {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    let _ = label;
    Ok((x, report))
}

/// One theta-step of the transport equation:
/// `[M + theta dt (A - M_a) + (dt/2) M~_a(c*)] C^{n+1}
///   = [M - (1-theta) dt (A - M_a) - (dt/2) M~_a(c*)] C^n
///     + dt (theta F^{n+1} + (1-theta) F^n)`.
/// The extrapolated reaction matrix keeps its Crank-Nicolson split for every
/// theta. `clamp` restricts the extrapolated concentration to [0, 1] inside
/// the reaction weight.
#[allow(clippy::too_many_arguments)]
pub fn step_fk(
    space: &DgSpace,
    ops: &FkOperators,
    c_n: &[f64],
    c_star: &DgField,
    f_np1: &[f64],
    f_n: &[f64],
    dt: f64,
    theta: f64,
    alpha: f64,
    clamp: bool,
) -> Result<Vec<f64>> {
    let m_tilde = crate::forms::assemble_mass_field_weight(space, c_star, |c| {
        alpha * if clamp { c.clamp(0.0, 1.0) } else { c }
    });
    let lhs = ops
        .m_c
        .add_scaled(&ops.stiff, theta * dt)
        .add_scaled(&m_tilde, 0.5 * dt);
    let rhs_mat = ops
        .m_c
        .add_scaled(&ops.stiff, -(1.0 - theta) * dt)
        .add_scaled(&m_tilde, -0.5 * dt);
    let mut b = rhs_mat.mul_vec(c_n);
    for i in 0..b.len() {
        b[i] += dt * (theta * f_np1[i] + (1.0 - theta) * f_n[i]);
    }
    let layout = dof_block_layout(space);
    // The extrapolant is a second-order predictor of the new state; it is a
    // much better CG start than C^n.
    let (x, _) = solve_step_system(&lhs, &b, Some(&c_star.coeffs), &layout, "fk")?;
    Ok(x)
}

/// One theta-step of the logistic atrophy law with the carrying capacity
/// frozen at the supplied concentration field (both implicit and explicit
/// sides):
/// `[M - theta dt M_b + (dt/2) M~_b(g*)] g^{n+1}
///   = [M + (1-theta) dt M_b - (dt/2) M~_b(g*)] g^n + dt F_g`.
#[allow(clippy::too_many_arguments)]
pub fn step_logistic(
    gspace: &DgSpace,
    m_g: &CsrMatrix,
    g_n: &[f64],
    g_star: &DgField,
    c_np1: &DgField,
    dt: f64,
    theta: f64,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let decoupled = params.c_cr >= 1.0;
    let (m_beta, f_g, m_tilde) = if decoupled {
        // beta stays 1: M_beta = -(1/tau) M_g, F_g = 0, and the nonlinear
        // matrix reduces to the g*-weighted mass.
        let m_beta = m_g.scaled(-1.0 / params.tau);
        let f_g = vec![0.0; gspace.n_dofs()];
        let m_tilde =
            crate::forms::assemble_mass_field_weight(gspace, g_star, |g| g / params.tau);
        (m_beta, f_g, m_tilde)
    } else {
        let beta =
            |e: usize, x: Vec3| beta_of_c(c_np1.eval_scalar(e, x), params.gamma, params.c_cr);
        let (m_beta, f_g) = assemble_logistic(gspace, beta, params.tau);
        let m_tilde = assemble_logistic_nonlinear(gspace, g_star, beta, params.tau);
        (m_beta, f_g, m_tilde)
    };
    let lhs = m_g
        .add_scaled(&m_beta, -theta * dt)
        .add_scaled(&m_tilde, 0.5 * dt);
    let rhs_mat = m_g
        .add_scaled(&m_beta, (1.0 - theta) * dt)
        .add_scaled(&m_tilde, -0.5 * dt);
    let mut b = rhs_mat.mul_vec(g_n);
    for i in 0..b.len() {
        b[i] += dt * f_g[i];
    }
    let layout = dof_block_layout(gspace);
    let (x, _) = solve_step_system(&lhs, &b, Some(&g_star.coeffs), &layout, "logistic")?;
    Ok(x)
}

/// Quasi-static elasticity solve `K_E U = F_E + B g`.
pub fn solve_elasticity(
    k_e: &CsrMatrix,
    b_g: &CsrMatrix,
    g: &[f64],
    f_e: &[f64],
    precond: &BlockJacobi,
) -> Result<(Vec<f64>, SolverReport)> {
    let coupling = b_g.mul_vec(g);
    let b: Vec<f64> = f_e.iter().zip(&coupling).map(|(a, c)| a + c).collect();
    let tol = 1e-10;
    let maxit = 10 * k_e.rows;
    let (x, report) = cg(k_e, &b, None, tol, maxit, precond)?;
    if !report.converged {
        return Err(Error::SolverDiverged {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok((x, report))
}

/// Scalar data as a function of position and time.
pub type ScalarFn = Box<dyn Fn(Vec3, f64) -> f64 + Send + Sync>;
/// Vector data as a function of position and time.
pub type VectorFn = Box<dyn Fn(Vec3, f64) -> Vec3 + Send + Sync>;

/// Everything a coupled run needs. Boundary data and forcings default to
/// homogeneous; initial conditions default to zero.
pub struct CoupledConfig {
    pub mesh: Arc<Mesh>,
    pub params: ModelParams,
    pub p_c: usize,
    pub p_g: usize,
    pub p_u: usize,
    pub bc_c: BoundarySpec,
    pub bc_u: BoundarySpec,
    pub c_dirichlet: ScalarFn,
    pub c_neumann: ScalarFn,
    /// Whether the concentration boundary data depends on time (forces the
    /// lifting to be reassembled every step).
    pub c_data_time_dependent: bool,
    pub f_c: Option<ScalarFn>,
    pub f_c_time_dependent: bool,
    pub u_dirichlet: VectorFn,
    pub u_traction: VectorFn,
    pub f_u: Option<VectorFn>,
    pub c0: Box<dyn Fn(Vec3) -> f64 + Send + Sync>,
    pub g0: Box<dyn Fn(Vec3) -> f64 + Send + Sync>,
    /// Clamp the extrapolated concentration inside the reaction weight.
    /// Physical runs keep this on; manufactured-solution runs whose exact
    /// concentration leaves [0, 1] must switch it off.
    pub clamp_concentration: bool,
    /// Solve the elasticity system inside every step. Studies that only need
    /// the final displacement can defer it and call
    /// [`CoupledDriver::solve_elasticity_now`] themselves.
    pub elasticity_every_step: bool,
    /// Number of startup transport steps taken with backward Euler before
    /// switching to the configured theta (Rannacher smoothing). The
    /// projected initial data excites stiff modes of the interior-penalty
    /// operator that the trapezoidal rule leaves undamped; two implicit
    /// steps remove them without affecting the second-order accuracy.
    pub fk_smoothing_steps: usize,
}

impl CoupledConfig {
    pub fn new(mesh: Arc<Mesh>, params: ModelParams, p_c: usize, p_g: usize, p_u: usize) -> Self {
        CoupledConfig {
            mesh,
            params,
            p_c,
            p_g,
            p_u,
            bc_c: BoundarySpec::all(crate::mesh::BcKind::Neumann),
            bc_u: BoundarySpec::all(crate::mesh::BcKind::Dirichlet),
            c_dirichlet: Box::new(|_, _| 0.0),
            c_neumann: Box::new(|_, _| 0.0),
            c_data_time_dependent: false,
            f_c: None,
            f_c_time_dependent: false,
            u_dirichlet: Box::new(|_, _| [0.0; 3]),
            u_traction: Box::new(|_, _| [0.0; 3]),
            f_u: None,
            c0: Box::new(|_| 0.0),
            g0: Box::new(|_| 0.0),
            clamp_concentration: true,
            elasticity_every_step: true,
            fk_smoothing_steps: 2,
        }
    }
}

/// Assembled operators and cached loads of a coupled run.
pub struct CoupledDriver {
    pub config: CoupledConfig,
    pub cspace: Arc<DgSpace>,
    pub gspace: Arc<DgSpace>,
    pub vspace: Arc<DgSpace>,
    pub part_c: FacePartition,
    pub part_u: FacePartition,
    pub fk: FkOperators,
    pub m_g: CsrMatrix,
    pub k_e: CsrMatrix,
    pub b_g: CsrMatrix,
    k_e_precond: BlockJacobi,
    f_e: Vec<f64>,
    /// Last assembled FK load, keyed by time.
    f_c_cache: std::sync::Mutex<Option<(f64, Vec<f64>)>>,
}

impl CoupledDriver {
    pub fn new(config: CoupledConfig) -> Result<Self> {
        config.params.validate()?;
        let mesh = config.mesh.clone();
        let cspace = create_space(mesh.clone(), config.p_c, 1)?;
        let gspace = create_space(mesh.clone(), config.p_g, 1)?;
        let vspace = create_space(mesh.clone(), config.p_u, mesh.dim)?;
        let part_c = classify_faces(&mesh, &config.bc_c)?;
        let part_u = classify_faces(&mesh, &config.bc_u)?;
        if part_u.dirichlet.is_empty() {
            return Err(Error::SingularSystem(
                "the displacement field has no Dirichlet faces; rigid modes make the \
                 elasticity system singular"
                    .into(),
            ));
        }
        let pen = PenaltyParams {
            eta0: config.params.eta0,
            xi0: config.params.xi0,
        };
        let fk = FkOperators::assemble(&cspace, &config.params, &part_c)?;
        let m_g = assemble_mass(&gspace, |_, _| 1.0);
        let k_e = assemble_elasticity_sip(
            &vspace,
            config.params.mu,
            config.params.lambda,
            &part_u,
            &pen,
        )?;
        let b_g = assemble_coupling(
            &gspace,
            &vspace,
            config.params.mu,
            config.params.lambda,
            &part_u,
        )?;
        let layout = dof_block_layout(&vspace);
        let k_e_precond = BlockJacobi::new(&k_e, &layout)?;
        let f_e = Self::assemble_f_e(&vspace, &part_u, &config, &pen, 0.0)?;
        Ok(CoupledDriver {
            config,
            cspace,
            gspace,
            vspace,
            part_c,
            part_u,
            fk,
            m_g,
            k_e,
            b_g,
            k_e_precond,
            f_e,
            f_c_cache: std::sync::Mutex::new(None),
        })
    }

    fn assemble_f_e(
        vspace: &DgSpace,
        part_u: &FacePartition,
        config: &CoupledConfig,
        pen: &PenaltyParams,
        t: f64,
    ) -> Result<Vec<f64>> {
        let mut f_e = elasticity_boundary_rhs(
            vspace,
            part_u,
            config.params.mu,
            config.params.lambda,
            pen,
            |x| (config.u_dirichlet)(x, t),
            |x| (config.u_traction)(x, t),
        )?;
        if let Some(f_u) = &config.f_u {
            let vol = volume_rhs_vector(vspace, |x| f_u(x, t));
            for (a, b) in f_e.iter_mut().zip(vol) {
                *a += b;
            }
        }
        Ok(f_e)
    }

    /// FK load at time `t`: volume forcing plus boundary lifting.
    fn assemble_f_c(&self, t: f64) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let pen = PenaltyParams {
            eta0: cfg.params.eta0,
            xi0: cfg.params.xi0,
        };
        let d = cfg.params.diffusion()?;
        let mut f = diffusion_boundary_rhs(
            &self.cspace,
            &self.part_c,
            |_| d,
            cfg.params.alpha,
            &pen,
            |x| (cfg.c_dirichlet)(x, t),
            |x| (cfg.c_neumann)(x, t),
        )?;
        if let Some(f_c) = &cfg.f_c {
            let vol = volume_rhs_scalar(&self.cspace, |x| f_c(x, t));
            for (a, b) in f.iter_mut().zip(vol) {
                *a += b;
            }
        }
        Ok(f)
    }

    fn fk_load_time_dependent(&self) -> bool {
        self.config.c_data_time_dependent
            || (self.config.f_c.is_some() && self.config.f_c_time_dependent)
    }

    fn f_c_at(&self, t: f64) -> Result<Vec<f64>> {
        if !self.fk_load_time_dependent() {
            let mut cache = self.f_c_cache.lock().unwrap();
            if cache.is_none() {
                *cache = Some((0.0, self.assemble_f_c(0.0)?));
            }
            return Ok(cache.as_ref().unwrap().1.clone());
        }
        {
            let cache = self.f_c_cache.lock().unwrap();
            if let Some((tc, f)) = cache.as_ref() {
                if (tc - t).abs() < 1e-14 {
                    return Ok(f.clone());
                }
            }
        }
        let f = self.assemble_f_c(t)?;
        *self.f_c_cache.lock().unwrap() = Some((t, f.clone()));
        Ok(f)
    }

    /// Project the initial conditions and solve the initial elasticity
    /// system.
    pub fn initial_state(&self) -> Result<StepperState> {
        let c = l2_project(&self.cspace, |x| (self.config.c0)(x));
        let g = l2_project(&self.gspace, |x| (self.config.g0)(x));
        let mut state = StepperState {
            c_prev: c.clone(),
            c,
            g_prev: g.clone(),
            g,
            u: DgField::zeros(self.vspace.clone()),
            t: 0.0,
            step: 0,
        };
        if self.config.elasticity_every_step {
            self.solve_elasticity_now(&mut state)?;
        }
        Ok(state)
    }

    /// Extrapolated field `1.5 f^n - 0.5 f^{n-1}` (the first step uses `f^0`).
    fn extrapolant(&self, state: &StepperState, current: &DgField, prev: &DgField) -> Result<DgField> {
        let coeffs = if state.step == 0 {
            current.coeffs.clone()
        } else {
            extrapolate(&current.coeffs, &prev.coeffs)?
        };
        DgField::from_coeffs(current.space.clone(), coeffs)
    }

    /// Advance the state by one step: transport, atrophy, then (optionally)
    /// elasticity. Failures carry the step index and time.
    pub fn advance(&self, state: &mut StepperState) -> Result<()> {
        let dt = self.config.params.dt;
        let theta = self.config.params.theta;
        let t_next = state.t + dt;
        let step = state.step;
        let wrap = |e: Error| e.at_step(step, t_next);

        let c_star = self.extrapolant(state, &state.c, &state.c_prev).map_err(wrap)?;
        let f_n = self.f_c_at(state.t).map_err(wrap)?;
        let f_np1 = self.f_c_at(t_next).map_err(wrap)?;
        // Startup smoothing for the stiff transport operator.
        let theta_fk = if state.step < self.config.fk_smoothing_steps {
            1.0
        } else {
            theta
        };
        let c_new = step_fk(
            &self.cspace,
            &self.fk,
            &state.c.coeffs,
            &c_star,
            &f_np1,
            &f_n,
            dt,
            theta_fk,
            self.config.params.alpha,
            self.config.clamp_concentration,
        )
        .map_err(wrap)?;
        let c_new = DgField::from_coeffs(self.cspace.clone(), c_new).map_err(wrap)?;

        let g_star = self.extrapolant(state, &state.g, &state.g_prev).map_err(wrap)?;
        let g_new = step_logistic(
            &self.gspace,
            &self.m_g,
            &state.g.coeffs,
            &g_star,
            &c_new,
            dt,
            theta,
            &self.config.params,
        )
        .map_err(wrap)?;
        let g_new = DgField::from_coeffs(self.gspace.clone(), g_new).map_err(wrap)?;

        state.c_prev = std::mem::replace(&mut state.c, c_new);
        state.g_prev = std::mem::replace(&mut state.g, g_new);
        state.t = t_next;
        state.step += 1;

        if self.config.elasticity_every_step {
            self.solve_elasticity_now(state).map_err(wrap)?;
        }
        Ok(())
    }

    /// Solve the elasticity system for the current atrophy field.
    pub fn solve_elasticity_now(&self, state: &mut StepperState) -> Result<()> {
        let (u, _) = solve_elasticity(
            &self.k_e,
            &self.b_g,
            &state.g.coeffs,
            &self.f_e,
            &self.k_e_precond,
        )?;
        state.u = DgField::from_coeffs(self.vspace.clone(), u)?;
        Ok(())
    }
}

/// Run the coupled model over `grid`, invoking `on_step` after the initial
/// solve and after every step. Deterministic for a fixed configuration.
pub fn run_coupled(
    config: CoupledConfig,
    grid: TimeGrid,
    mut on_step: impl FnMut(&CoupledDriver, &StepperState) -> Result<()>,
) -> Result<StepperState> {
    let driver = CoupledDriver::new(config)?;
    let mut state = driver.initial_state()?;
    on_step(&driver, &state)?;
    for _ in 0..grid.n_steps {
        driver.advance(&mut state)?;
        on_step(&driver, &state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockAccumulator;
    use crate::mesh::{build_structured, BcKind, DomainBox, ElemKind};
    use crate::physics::logistic_exact;

    fn quad_mesh(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured(2, n, ElemKind::Quad, DomainBox::unit()).unwrap())
    }

    #[test]
    fn extrapolate_arithmetic() {
        let v = vec![1.0, -2.0, 4.0];
        let same = extrapolate(&v, &v).unwrap();
        assert_eq!(same, v);
        let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let out = extrapolate(&doubled, &v).unwrap();
        for (o, x) in out.iter().zip(&v) {
            assert!((o - 2.5 * x).abs() < 1e-15);
        }
        assert!(extrapolate(&v, &v[..2]).is_err());
    }

    #[test]
    fn time_grid_validation() {
        let g = TimeGrid::new(1e-3, 0.1).unwrap();
        assert_eq!(g.n_steps, 100);
        assert!((g.t_end() - 0.1).abs() < 1e-12);
        assert!(TimeGrid::new(0.03, 0.1).is_err());
        assert!(TimeGrid::new(-0.1, 1.0).is_err());
    }

    fn zero_matrix_like(space: &DgSpace) -> CsrMatrix {
        let layout = dof_block_layout(space);
        BlockAccumulator::new(layout.clone(), layout).into_csr()
    }

    #[test]
    fn fk_step_without_dynamics_is_identity() {
        // Zero diffusion and reaction operators: C^{n+1} = C^n.
        let mesh = quad_mesh(2);
        let space = create_space(mesh, 2, 1).unwrap();
        let m_c = assemble_mass(&space, |_, _| 1.0);
        let zero = zero_matrix_like(&space);
        let ops = FkOperators {
            stiff: zero_matrix_like(&space),
            a_c: zero.clone(),
            m_alpha: zero,
            m_c,
        };
        let c: Vec<f64> = (0..space.n_dofs()).map(|i| (i as f64).sin()).collect();
        let c_field = DgField::from_coeffs(space.clone(), c.clone()).unwrap();
        let f = vec![0.0; space.n_dofs()];
        let out = step_fk(&space, &ops, &c, &c_field, &f, &f, 0.05, 0.5, 0.0, true).unwrap();
        for (a, b) in out.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_constant_state_reproduces_scalar_logistic() {
        // Pure Neumann, f = 0, spatially constant c: the FK step must track
        // the logistic ODE dc/dt = alpha c (1 - c) to second order.
        let mesh = quad_mesh(2);
        let space = create_space(mesh, 1, 1).unwrap();
        let mut params = ModelParams::default();
        params.alpha = 0.9;
        params.c_cr = 1.0;
        let part = classify_faces(&space.mesh, &BoundarySpec::all(BcKind::Neumann)).unwrap();
        let ops = FkOperators::assemble(&space, &params, &part).unwrap();
        let c0 = 0.2;
        let exact = |t: f64| {
            let r = (1.0 - c0) / c0;
            1.0 / (1.0 + r * (-params.alpha * t).exp())
        };
        let t_end = 0.5f64;
        let mut errs = Vec::new();
        for dt in [0.05f64, 0.025] {
            let n = (t_end / dt).round() as usize;
            let mut c = l2_project(&space, |_| c0);
            let mut c_prev = c.clone();
            let f = vec![0.0; space.n_dofs()];
            for step in 0..n {
                let star = if step == 0 {
                    c.coeffs.clone()
                } else {
                    extrapolate(&c.coeffs, &c_prev.coeffs).unwrap()
                };
                let star = DgField::from_coeffs(space.clone(), star).unwrap();
                let out =
                    step_fk(&space, &ops, &c.coeffs, &star, &f, &f, dt, 0.5, params.alpha, true)
                        .unwrap();
                c_prev = std::mem::replace(
                    &mut c,
                    DgField::from_coeffs(space.clone(), out).unwrap(),
                );
            }
            let got = c.element_mean(0);
            errs.push((got - exact(t_end)).abs());
        }
        // Second order: halving dt divides the error by about 4.
        let ratio = errs[0] / errs[1];
        assert!(
            (3.0..5.5).contains(&ratio),
            "errors {errs:?}, ratio {ratio}"
        );
    }

    #[test]
    fn logistic_step_cases() {
        let mesh = quad_mesh(1);
        let gspace = create_space(mesh.clone(), 1, 1).unwrap();
        let cspace = create_space(mesh, 1, 1).unwrap();
        let m_g = assemble_mass(&gspace, |_, _| 1.0);
        let mut params = ModelParams::default();
        params.tau = 1.0;
        params.c_cr = 1.0; // beta stays 1

        // Equilibrium: g0 = 0 with beta = 1 stays exactly zero.
        let c_zero = l2_project(&cspace, |_| 0.0);
        let g0 = l2_project(&gspace, |_| 0.0);
        let out = step_logistic(
            &gspace, &m_g, &g0.coeffs, &g0, &c_zero, 0.05, 0.5, &params,
        )
        .unwrap();
        for v in &out {
            assert!(v.abs() < 1e-14);
        }

        // g0 = 1: after 100 CN steps of dt = 1e-3 the mean matches the
        // closed form 1 / (2 e^t - 1) to second order.
        let dt = 1e-3;
        let mut g = l2_project(&gspace, |_| 1.0);
        let mut g_prev = g.clone();
        for step in 0..100 {
            let star = if step == 0 {
                g.coeffs.clone()
            } else {
                extrapolate(&g.coeffs, &g_prev.coeffs).unwrap()
            };
            let star = DgField::from_coeffs(gspace.clone(), star).unwrap();
            let out =
                step_logistic(&gspace, &m_g, &g.coeffs, &star, &c_zero, dt, 0.5, &params).unwrap();
            g_prev = std::mem::replace(&mut g, DgField::from_coeffs(gspace.clone(), out).unwrap());
        }
        let exact = logistic_exact(0.1, 1.0, 1.0, 1.0).unwrap();
        assert!(
            (g.element_mean(0) - exact).abs() < 1e-6,
            "got {}, exact {exact}",
            g.element_mean(0)
        );

        // Saturated concentration: g relaxes to -gamma.
        let mut params = ModelParams::default();
        params.c_cr = 0.0;
        let c_one = l2_project(&cspace, |_| 1.0);
        let mut g = l2_project(&gspace, |_| 0.0);
        let mut g_prev = g.clone();
        let dt = 0.05;
        for step in 0..400 {
            let star = if step == 0 {
                g.coeffs.clone()
            } else {
                extrapolate(&g.coeffs, &g_prev.coeffs).unwrap()
            };
            let star = DgField::from_coeffs(gspace.clone(), star).unwrap();
            let out =
                step_logistic(&gspace, &m_g, &g.coeffs, &star, &c_one, dt, 0.5, &params).unwrap();
            g_prev = std::mem::replace(&mut g, DgField::from_coeffs(gspace.clone(), out).unwrap());
        }
        assert!((g.element_mean(0) + 0.05).abs() < 1e-6);
    }

    #[test]
    fn trivial_coupled_fixed_point() {
        let mesh = quad_mesh(2);
        let mut params = ModelParams::default();
        params.dt = 0.1;
        params.t_end = 0.5;
        let mut config = CoupledConfig::new(mesh, params, 1, 1, 1);
        config.bc_u = BoundarySpec::all(BcKind::Dirichlet);
        let grid = TimeGrid::new(0.1, 0.5).unwrap();
        let end = run_coupled(config, grid, |_, _| Ok(())).unwrap();
        assert!(end.c.coeffs.iter().all(|v| *v == 0.0));
        assert!(end.g.coeffs.iter().all(|v| *v == 0.0));
        assert!(end.u.coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gamma_zero_keeps_atrophy_and_displacement_zero() {
        let mesh = quad_mesh(2);
        let mut params = ModelParams::default();
        params.gamma = 0.0;
        params.dt = 0.1;
        params.t_end = 0.5;
        let mut config = CoupledConfig::new(mesh, params, 1, 1, 1);
        config.c0 = Box::new(|x| 0.5 * (-(x[0] * x[0] + x[1] * x[1])).exp());
        let grid = TimeGrid::new(0.1, 0.5).unwrap();
        let end = run_coupled(config, grid, |_, _| Ok(())).unwrap();
        assert!(end.c.domain_mean() > 0.1);
        assert!(end.g.coeffs.iter().all(|v| *v == 0.0));
        assert!(end.u.coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn restart_reproduces_run_bitwise() {
        let mesh = quad_mesh(2);
        let mut params = ModelParams::default();
        params.dt = 0.05;
        params.t_end = 0.5;
        let make_config = || {
            let mut c = CoupledConfig::new(quad_mesh(2), params.clone(), 2, 1, 1);
            c.c0 = Box::new(|x| 0.4 * (-8.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.4).powi(2))).exp());
            c
        };
        let _ = mesh;
        let grid10 = TimeGrid::new(0.05, 0.5).unwrap();
        let full = run_coupled(make_config(), grid10, |_, _| Ok(())).unwrap();

        let driver = CoupledDriver::new(make_config()).unwrap();
        let mut state = driver.initial_state().unwrap();
        for _ in 0..5 {
            driver.advance(&mut state).unwrap();
        }
        // Snapshot and resume through a fresh driver.
        let snapshot = state.clone();
        let driver2 = CoupledDriver::new(make_config()).unwrap();
        let mut resumed = snapshot;
        for _ in 0..5 {
            driver2.advance(&mut resumed).unwrap();
        }
        assert_eq!(full.c.coeffs, resumed.c.coeffs);
        assert_eq!(full.g.coeffs, resumed.g.coeffs);
        assert_eq!(full.u.coeffs, resumed.u.coeffs);
    }

    #[test]
    fn theta_one_and_half_both_stable_on_coupled_run() {
        for theta in [0.5, 1.0] {
            let mesh = quad_mesh(2);
            let mut params = ModelParams::default();
            params.theta = theta;
            params.dt = 0.05;
            params.t_end = 1.0;
            let mut config = CoupledConfig::new(mesh, params, 1, 1, 1);
            config.c0 = Box::new(|_| 0.4);
            let grid = TimeGrid::new(0.05, 1.0).unwrap();
            let end = run_coupled(config, grid, |_, _| Ok(())).unwrap();
            assert!(end.c.coeffs.iter().all(|v| v.is_finite()));
            let mean = end.c.domain_mean();
            assert!((0.0..=1.05).contains(&mean), "theta {theta}: mean {mean}");
        }
    }
}
