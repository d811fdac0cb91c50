use std::sync::Arc;
use std::time::Instant;

use atrophy_dg::fespace::{create_space, l2_project};
use atrophy_dg::forms::*;
use atrophy_dg::linalg::{cg, BlockJacobi};
use atrophy_dg::mesh::*;
use atrophy_dg::physics::ModelParams;
use atrophy_dg::timeint::FkOperators;

fn main() {
    let params = ModelParams::default();
    let p = 3;
    let n = 32;
    let mesh = Arc::new(build_structured(2, n, ElemKind::Tri, DomainBox::unit()).unwrap());
    let space = create_space(mesh.clone(), p, 1).unwrap();
    let part = classify_faces(&mesh, &BoundarySpec::all(BcKind::Dirichlet)).unwrap();
    let ops = FkOperators::assemble(&space, &params, &part).unwrap();
    println!("nnz(A_c) = {}", ops.a_c.nnz());

    let c = l2_project(&space, |x| {
        (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos()
    });
    let dt = 1e-3;
    let theta = 0.5;

    let t0 = Instant::now();
    let m_tilde = assemble_mass_field_weight(&space, &c, |v| 0.9 * v);
    println!("m_tilde assembly: {:?}", t0.elapsed());

    let t0 = Instant::now();
    let lhs = ops
        .m_c
        .add_scaled(&ops.stiff, theta * dt)
        .add_scaled(&m_tilde, 0.5 * dt);
    println!("lhs merge (2 add_scaled): {:?}", t0.elapsed());

    let t0 = Instant::now();
    let rhs_mat = ops
        .m_c
        .add_scaled(&ops.stiff, -(1.0 - theta) * dt)
        .add_scaled(&m_tilde, -0.5 * dt);
    let b = rhs_mat.mul_vec(&c.coeffs);
    println!("rhs merge + spmv: {:?}", t0.elapsed());

    let layout: Vec<usize> = {
        let mut v: Vec<usize> = (0..space.n_elements())
            .map(|e| space.element_dofs(e).start)
            .collect();
        v.push(space.n_dofs());
        v
    };
    let t0 = Instant::now();
    let bj = BlockJacobi::new(&lhs, &layout).unwrap();
    println!("block-jacobi build: {:?}", t0.elapsed());

    let t0 = Instant::now();
    let (_, rep) = cg(&lhs, &b, Some(&c.coeffs), 1e-10, 10 * lhs.rows, &bj).unwrap();
    println!("cg bj: {:?} ({} iterations, residual {:.2e})", t0.elapsed(), rep.iterations, rep.residual);

    let t0 = Instant::now();
    let (_, rep) = cg(&lhs, &b, Some(&c.coeffs), 1e-10, 10 * lhs.rows, &atrophy_dg::linalg::IdentityPrecond).unwrap();
    println!("cg id: {:?} ({} iterations)", t0.elapsed(), rep.iterations);

    // K_E solve iteration count for reference
    let vspace = create_space(mesh.clone(), p, 2).unwrap();
    let k_e = assemble_elasticity_sip(&vspace, params.mu, params.lambda, &part, &PenaltyParams::default()).unwrap();
    let vlayout: Vec<usize> = {
        let mut v: Vec<usize> = (0..vspace.n_elements())
            .map(|e| vspace.element_dofs(e).start)
            .collect();
        v.push(vspace.n_dofs());
        v
    };
    let kbj = BlockJacobi::new(&k_e, &vlayout).unwrap();
    let fb: Vec<f64> = (0..k_e.rows).map(|i| ((i % 11) as f64 - 5.0) * 0.1).collect();
    let t0 = Instant::now();
    let (_, rep) = cg(&k_e, &fb, None, 1e-10, 10 * k_e.rows, &kbj).unwrap();
    println!("k_e cg bj: {:?} ({} iterations)", t0.elapsed(), rep.iterations);
}
