//! Manufactured-solution convergence studies: spatial rate tables for the
//! concentration and displacement fields, and a temporal table for the
//! logistic stepper against its closed form.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{create_space, l2_project, DgField};
use crate::forms::{assemble_mass, PenaltyParams};
use crate::harness::manufactured::Manufactured;
use crate::harness::norms::{error_norms_scalar, error_norms_vector};
use crate::mesh::{build_structured, BcKind, BoundarySpec, DomainBox, ElemKind};
use crate::physics::{logistic_exact, ModelParams};
use crate::timeint::{
    extrapolate, step_logistic, CoupledConfig, CoupledDriver, TimeGrid,
};

/// One mesh level of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub p: usize,
    pub h: f64,
    pub l2_c: f64,
    pub dg_c: f64,
    pub l2_u: f64,
    pub dg_u: f64,
}

/// Least-squares slopes of one polynomial degree, fitted over the finest
/// three levels.
#[derive(Debug, Clone, Copy)]
pub struct SlopeSet {
    pub p: usize,
    pub l2_c: f64,
    pub dg_c: f64,
    pub l2_u: f64,
    pub dg_u: f64,
}

impl SlopeSet {
    /// The expected bands: `p + 1` for L2 (within [p+0.8, p+1.4]) and `p`
    /// for the DG norm (within [p-0.2, p+0.6]).
    pub fn within_bands(&self) -> bool {
        let p = self.p as f64;
        let l2_ok = |s: f64| s >= p + 0.8 && s <= p + 1.4;
        let dg_ok = |s: f64| s >= p - 0.2 && s <= p + 0.6;
        l2_ok(self.l2_c) && dg_ok(self.dg_c) && l2_ok(self.l2_u) && dg_ok(self.dg_u)
    }
}

#[derive(Debug, Clone)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub slopes: Vec<SlopeSet>,
}

impl RateTable {
    pub fn passes(&self) -> bool {
        !self.slopes.is_empty() && self.slopes.iter().all(SlopeSet::within_bands)
    }

    /// Deterministic CSV rendering: one row per (p, h), slopes as comment
    /// footer lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,h,e_l2_c,e_dg_c,e_l2_u,e_dg_u\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.p, r.h, r.l2_c, r.dg_c, r.l2_u, r.dg_u
            );
        }
        for s in &self.slopes {
            let _ = writeln!(
                out,
                "# slopes p={}: l2_c={:.4}, dg_c={:.4}, l2_u={:.4}, dg_u={:.4}",
                s.p, s.l2_c, s.dg_c, s.l2_u, s.dg_u
            );
        }
        out
    }
}

/// Least-squares slope of log(err) against log(h) over the finest `take`
/// levels (h descending in `rows`).
fn fit_slope(hs: &[f64], errs: &[f64], take: usize) -> f64 {
    let n = hs.len();
    let lo = n.saturating_sub(take);
    let xs: Vec<f64> = hs[lo..].iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs[lo..].iter().map(|e| e.max(1e-300).ln()).collect();
    let m = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub dim: usize,
    pub degrees: Vec<usize>,
    /// Cells per axis for each refinement level (ascending).
    pub cells: Vec<usize>,
    pub params: ModelParams,
}

impl ConvergenceConfig {
    /// The default study: Crank-Nicolson, dt = 1e-3, T = 0.1, reference
    /// parameter set, four triangle levels in 2D or the standard tetrahedral
    /// sequence in 3D.
    pub fn standard(dim: usize, degrees: Vec<usize>, levels: usize) -> Result<Self> {
        let mut params = ModelParams::default();
        params.dt = 1e-3;
        params.t_end = 0.1;
        params.theta = 0.5;
        params.c_cr = 1.0; // decoupled: beta stays 1
        let base = match dim {
            2 => 3,
            3 => 2,
            d => {
                return Err(Error::InvalidParameter(format!(
                    "dimension must be 2 or 3, got {d}"
                )))
            }
        };
        let cells = (0..levels).map(|k| base << k).collect();
        Ok(ConvergenceConfig {
            dim,
            degrees,
            cells,
            params,
        })
    }
}

fn manufactured_coupled_config(
    mesh: Arc<crate::mesh::Mesh>,
    params: &ModelParams,
    ms: Manufactured,
    p: usize,
) -> CoupledConfig {
    let mut config = CoupledConfig::new(mesh, params.clone(), p, p, p);
    config.bc_c = BoundarySpec::all(BcKind::Dirichlet);
    config.bc_u = BoundarySpec::all(BcKind::Dirichlet);
    config.c_dirichlet = Box::new(move |x, t| ms.c(x, t));
    config.c_data_time_dependent = true;
    config.f_c = Some(Box::new(move |x, t| ms.f_c(x, t)));
    config.f_c_time_dependent = true;
    config.u_dirichlet = Box::new(move |x, _| ms.u(x));
    config.f_u = Some(Box::new(move |x, _| ms.f_u(x)));
    config.c0 = Box::new(move |x| ms.c(x, 0.0));
    config.g0 = Box::new(|_| 1.0);
    // The exact concentration leaves [0, 1]; clamping the reaction weight
    // would break consistency with the manufactured forcing.
    config.clamp_concentration = false;
    config.elasticity_every_step = false;
    config
}

/// Run the manufactured convergence study and fit the rates.
pub fn run_convergence(config: &ConvergenceConfig) -> Result<RateTable> {
    if config.cells.len() < 3 {
        return Err(Error::InvalidParameter(
            "rate fits need at least 3 mesh levels".into(),
        ));
    }
    let ms = Manufactured::new(config.dim, &config.params)?;
    ms.verify(50)?;
    let t_end = config.params.t_end;
    let grid = TimeGrid::new(config.params.dt, t_end)?;
    let pen = PenaltyParams {
        eta0: config.params.eta0,
        xi0: config.params.xi0,
    };
    let d_iso = config.params.diffusion()?;

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &p in &config.degrees {
        let mut hs = Vec::new();
        let mut errs = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for &n in &config.cells {
            let kind = if config.dim == 2 {
                ElemKind::Tri
            } else {
                ElemKind::Tet
            };
            let mesh = Arc::new(build_structured(config.dim, n, kind, DomainBox::unit())?);
            let h = mesh.h_max();
            let cfg = manufactured_coupled_config(mesh, &config.params, ms, p);
            let driver = CoupledDriver::new(cfg)?;
            let mut state = driver.initial_state()?;
            for _ in 0..grid.n_steps {
                driver.advance(&mut state)?;
            }
            driver.solve_elasticity_now(&mut state)?;

            let (l2_c, dg_c) = error_norms_scalar(
                &state.c,
                &driver.part_c,
                |_| d_iso,
                config.params.alpha,
                &pen,
                |x| ms.c(x, t_end),
                |x| ms.grad_c(x, t_end),
            )?;
            let (l2_u, dg_u) = error_norms_vector(
                &state.u,
                &driver.part_u,
                config.params.mu,
                config.params.lambda,
                &pen,
                |x| ms.u(x),
                |x| ms.grad_u(x),
            )?;
            rows.push(RateRow {
                p,
                h,
                l2_c,
                dg_c,
                l2_u,
                dg_u,
            });
            hs.push(h);
            errs[0].push(l2_c);
            errs[1].push(dg_c);
            errs[2].push(l2_u);
            errs[3].push(dg_u);
        }
        slopes.push(SlopeSet {
            p,
            l2_c: fit_slope(&hs, &errs[0], 3),
            dg_c: fit_slope(&hs, &errs[1], 3),
            l2_u: fit_slope(&hs, &errs[2], 3),
            dg_u: fit_slope(&hs, &errs[3], 3),
        });
    }
    Ok(RateTable { rows, slopes })
}

/// Temporal convergence of the logistic stepper against the closed form
/// with `beta = 1`, `g0 = 1`; returns (dt, error at T) pairs and the fitted
/// slope.
pub fn run_logistic_convergence(
    dts: &[f64],
    t_end: f64,
    theta: f64,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let mesh = Arc::new(build_structured(2, 1, ElemKind::Quad, DomainBox::unit())?);
    let gspace = create_space(mesh.clone(), 1, 1)?;
    let cspace = create_space(mesh, 1, 1)?;
    let m_g = assemble_mass(&gspace, |_, _| 1.0);
    let mut params = ModelParams::default();
    params.c_cr = 1.0;
    params.tau = 1.0;
    let c_zero = l2_project(&cspace, |_| 0.0);
    let exact = logistic_exact(t_end, 1.0, 1.0, params.tau)?;

    let mut table = Vec::new();
    for &dt in dts {
        let grid = TimeGrid::new(dt, t_end)?;
        let mut g = l2_project(&gspace, |_| 1.0);
        let mut g_prev = g.clone();
        for step in 0..grid.n_steps {
            let star = if step == 0 {
                g.coeffs.clone()
            } else {
                extrapolate(&g.coeffs, &g_prev.coeffs)?
            };
            let star = DgField::from_coeffs(gspace.clone(), star)?;
            let next = step_logistic(&gspace, &m_g, &g.coeffs, &star, &c_zero, dt, theta, &params)?;
            g_prev = std::mem::replace(&mut g, DgField::from_coeffs(gspace.clone(), next)?);
        }
        table.push((dt, (g.element_mean(0) - exact).abs()));
    }
    let hs: Vec<f64> = table.iter().map(|r| r.0).collect();
    let es: Vec<f64> = table.iter().map(|r| r.1).collect();
    let slope = fit_slope(&hs, &es, hs.len());
    Ok((table, slope))
}

/// Check that the coupled driver on a decoupled manufactured configuration
/// (`beta = 1` throughout) reproduces standalone single-equation runs
/// bitwise: the transport loop alone, the atrophy loop alone, and one
/// elasticity solve at the final time.
pub fn decoupled_matches_standalone(n: usize, p: usize) -> Result<bool> {
    use crate::forms::{
        assemble_coupling, assemble_elasticity_sip, diffusion_boundary_rhs,
        elasticity_boundary_rhs, volume_rhs_scalar, volume_rhs_vector,
    };
    use crate::linalg::BlockJacobi;
    use crate::mesh::classify_faces;
    use crate::timeint::{solve_elasticity, step_fk, FkOperators};

    let mut params = ModelParams::default();
    params.dt = 1e-2;
    params.t_end = 5e-2;
    params.c_cr = 1.0;
    let ms = Manufactured::new(2, &params)?;
    let grid = TimeGrid::new(params.dt, params.t_end)?;

    let mesh = Arc::new(build_structured(2, n, ElemKind::Tri, DomainBox::unit())?);
    let cfg = manufactured_coupled_config(mesh.clone(), &params, ms, p);
    let driver = CoupledDriver::new(cfg)?;
    let mut state = driver.initial_state()?;
    for _ in 0..grid.n_steps {
        driver.advance(&mut state)?;
    }
    driver.solve_elasticity_now(&mut state)?;

    // Standalone transport loop.
    let pen = PenaltyParams {
        eta0: params.eta0,
        xi0: params.xi0,
    };
    let d = params.diffusion()?;
    let cspace = create_space(mesh.clone(), p, 1)?;
    let part_c = classify_faces(&mesh, &BoundarySpec::all(BcKind::Dirichlet))?;
    let fk = FkOperators::assemble(&cspace, &params, &part_c)?;
    let f_c_at = |t: f64| -> Result<Vec<f64>> {
        let mut f = diffusion_boundary_rhs(
            &cspace,
            &part_c,
            |_| d,
            params.alpha,
            &pen,
            |x| ms.c(x, t),
            |_| 0.0,
        )?;
        for (a, b) in f
            .iter_mut()
            .zip(volume_rhs_scalar(&cspace, |x| ms.f_c(x, t)))
        {
            *a += b;
        }
        Ok(f)
    };
    let mut c = l2_project(&cspace, |x| ms.c(x, 0.0));
    let mut c_prev = c.clone();
    for step in 0..grid.n_steps {
        let t = step as f64 * params.dt;
        let star = if step == 0 {
            c.coeffs.clone()
        } else {
            extrapolate(&c.coeffs, &c_prev.coeffs)?
        };
        let star = DgField::from_coeffs(cspace.clone(), star)?;
        let theta_fk = if step < 2 { 1.0 } else { params.theta };
        let next = step_fk(
            &cspace,
            &fk,
            &c.coeffs,
            &star,
            &f_c_at(t + params.dt)?,
            &f_c_at(t)?,
            params.dt,
            theta_fk,
            params.alpha,
            false,
        )?;
        c_prev = std::mem::replace(&mut c, DgField::from_coeffs(cspace.clone(), next)?);
    }

    // Standalone atrophy loop (beta = 1 regardless of the concentration).
    let gspace = create_space(mesh.clone(), p, 1)?;
    let m_g = assemble_mass(&gspace, |_, _| 1.0);
    let c_dummy = l2_project(&cspace, |_| 0.0);
    let mut g = l2_project(&gspace, |_| 1.0);
    let mut g_prev = g.clone();
    for step in 0..grid.n_steps {
        let star = if step == 0 {
            g.coeffs.clone()
        } else {
            extrapolate(&g.coeffs, &g_prev.coeffs)?
        };
        let star = DgField::from_coeffs(gspace.clone(), star)?;
        let next = step_logistic(
            &gspace,
            &m_g,
            &g.coeffs,
            &star,
            &c_dummy,
            params.dt,
            params.theta,
            &params,
        )?;
        g_prev = std::mem::replace(&mut g, DgField::from_coeffs(gspace.clone(), next)?);
    }

    // Standalone elasticity solve at the final time.
    let vspace = create_space(mesh.clone(), p, 2)?;
    let part_u = classify_faces(&mesh, &BoundarySpec::all(BcKind::Dirichlet))?;
    let k_e = assemble_elasticity_sip(&vspace, params.mu, params.lambda, &part_u, &pen)?;
    let b_g = assemble_coupling(&gspace, &vspace, params.mu, params.lambda, &part_u)?;
    let mut f_e = elasticity_boundary_rhs(
        &vspace,
        &part_u,
        params.mu,
        params.lambda,
        &pen,
        |x| ms.u(x),
        |_| [0.0; 3],
    )?;
    for (a, b) in f_e
        .iter_mut()
        .zip(volume_rhs_vector(&vspace, |x| ms.f_u(x)))
    {
        *a += b;
    }
    let layout: Vec<usize> = {
        let mut v: Vec<usize> = (0..vspace.n_elements())
            .map(|e| vspace.element_dofs(e).start)
            .collect();
        v.push(vspace.n_dofs());
        v
    };
    let precond = BlockJacobi::new(&k_e, &layout)?;
    let (u, _) = solve_elasticity(&k_e, &b_g, &g.coeffs, &f_e, &precond)?;

    Ok(state.c.coeffs == c.coeffs && state.g.coeffs == g.coeffs && state.u.coeffs == u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_fit_recovers_exact_power() {
        let hs = [0.4f64, 0.2, 0.1, 0.05];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h.powi(2)).collect();
        let s = fit_slope(&hs, &errs, 3);
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_table_is_second_order() {
        let (table, slope) =
            run_logistic_convergence(&[4e-3, 2e-3, 1e-3], 0.1, 0.5).unwrap();
        assert!(table.windows(2).all(|w| w[1].1 < w[0].1));
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn logistic_theta_one_is_first_order() {
        let (_, slope) = run_logistic_convergence(&[4e-3, 2e-3, 1e-3], 0.1, 1.0).unwrap();
        assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn coupled_equals_standalone_bitwise() {
        assert!(decoupled_matches_standalone(2, 1).unwrap());
    }

    #[test]
    fn rate_table_csv_shape() {
        let table = RateTable {
            rows: vec![RateRow {
                p: 1,
                h: 0.5,
                l2_c: 1e-2,
                dg_c: 1e-1,
                l2_u: 2e-2,
                dg_u: 2e-1,
            }],
            slopes: vec![SlopeSet {
                p: 1,
                l2_c: 2.0,
                dg_c: 1.0,
                l2_u: 2.0,
                dg_u: 1.0,
            }],
        };
        let csv = table.to_csv();
        assert!(csv.starts_with("p,h,"));
        assert!(csv.contains("# slopes p=1"));
        assert!(table.passes());
    }
}
