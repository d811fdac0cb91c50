use std::sync::Arc;
use std::time::Instant;

use atrophy_dg::harness::Manufactured;
use atrophy_dg::mesh::*;
use atrophy_dg::physics::ModelParams;
use atrophy_dg::timeint::*;

fn main() {
    let mut params = ModelParams::default();
    params.dt = 1e-3;
    params.t_end = 0.1;
    params.c_cr = 1.0;
    let ms = Manufactured::new(2, &params).unwrap();
    let p = 3;
    let n = 32;
    let mesh = Arc::new(build_structured(2, n, ElemKind::Tri, DomainBox::unit()).unwrap());
    let mut cfg = CoupledConfig::new(mesh, params.clone(), p, p, p);
    cfg.bc_c = BoundarySpec::all(BcKind::Dirichlet);
    cfg.bc_u = BoundarySpec::all(BcKind::Dirichlet);
    cfg.c_dirichlet = Box::new(move |x, t| ms.c(x, t));
    cfg.c_data_time_dependent = true;
    cfg.f_c = Some(Box::new(move |x, t| ms.f_c(x, t)));
    cfg.f_c_time_dependent = true;
    cfg.u_dirichlet = Box::new(move |x, _| ms.u(x));
    cfg.f_u = Some(Box::new(move |x, _| ms.f_u(x)));
    cfg.c0 = Box::new(move |x| ms.c(x, 0.0));
    cfg.g0 = Box::new(|_| 1.0);
    cfg.clamp_concentration = false;
    cfg.elasticity_every_step = false;

    let t0 = Instant::now();
    let driver = CoupledDriver::new(cfg).unwrap();
    println!("driver setup (spaces + A_c + K_E + B_g + precond): {:?}", t0.elapsed());

    let t0 = Instant::now();
    let mut state = driver.initial_state().unwrap();
    println!("initial state: {:?}", t0.elapsed());

    let t0 = Instant::now();
    for _ in 0..100 {
        driver.advance(&mut state).unwrap();
    }
    println!("100 coupled steps (fk + logistic): {:?}", t0.elapsed());

    let t0 = Instant::now();
    driver.solve_elasticity_now(&mut state).unwrap();
    println!("elasticity solve: {:?}", t0.elapsed());
}
