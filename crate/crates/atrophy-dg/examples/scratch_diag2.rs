use std::sync::Arc;

use atrophy_dg::fespace::DgField;
use atrophy_dg::forms::PenaltyParams;
use atrophy_dg::harness::{error_norms_scalar, Manufactured};
use atrophy_dg::mesh::*;
use atrophy_dg::physics::ModelParams;
use atrophy_dg::timeint::*;

fn main() {
    let mut params = ModelParams::default();
    params.t_end = 0.1;
    params.c_cr = 1.0;
    if std::env::var("NO_REACTION").is_ok() {
        params.alpha = 0.0;
    }
    if std::env::var("THETA1").is_ok() {
        params.theta = 1.0;
    }
    let ms = Manufactured::new(2, &params).unwrap();
    let pen = PenaltyParams::default();
    let d = params.diffusion().unwrap();
    let p = 2;
    let n = 16;
    for dt in [1e-3, 5e-4, 2.5e-4] {
        params.dt = dt;
        let mesh = Arc::new(build_structured(2, n, ElemKind::Tri, DomainBox::unit()).unwrap());
        let mut cfg = CoupledConfig::new(mesh, params.clone(), p, p, p);
        cfg.bc_c = BoundarySpec::all(BcKind::Dirichlet);
        cfg.bc_u = BoundarySpec::all(BcKind::Dirichlet);
        cfg.c_dirichlet = Box::new(move |x, t| ms.c(x, t));
        cfg.c_data_time_dependent = true;
        cfg.f_c = Some(Box::new(move |x, t| ms.f_c(x, t)));
        cfg.f_c_time_dependent = true;
        cfg.c0 = Box::new(move |x| ms.c(x, 0.0));
        cfg.g0 = Box::new(|_| 1.0);
        cfg.clamp_concentration = false;
        cfg.elasticity_every_step = false;
        let grid = TimeGrid::new(dt, params.t_end).unwrap();
        let driver = CoupledDriver::new(cfg).unwrap();
        let mut state = driver.initial_state().unwrap();
        for _ in 0..grid.n_steps {
            driver.advance(&mut state).unwrap();
        }
        let (l2, dg) = error_norms_scalar(
            &state.c,
            &driver.part_c,
            |_| d,
            params.alpha,
            &pen,
            |x| ms.c(x, 0.1),
            |x| ms.grad_c(x, 0.1),
        )
        .unwrap();
        println!("dt={dt:.2e}: L2 {l2:.4e} DG {dg:.4e}");
        let _ = DgField::zeros(driver.cspace.clone());
    }
}
