use std::f64::consts::PI;
use std::sync::Arc;

use atrophy_dg::fespace::{create_space, l2_project};
use atrophy_dg::forms::*;
use atrophy_dg::harness::error_norms_scalar;
use atrophy_dg::linalg::{cg, BlockJacobi};
use atrophy_dg::mesh::*;

fn main() {
    let t = 0.1f64;
    let d = atrophy_dg::geometry::mat_scale(&atrophy_dg::geometry::identity(), 8.0);
    let pen = PenaltyParams::default();
    let exact = move |x: [f64; 3]| (PI * x[0]).cos() * (PI * x[1]).cos() * (-t).exp();
    let grad = move |x: [f64; 3]| {
        let e = (-t).exp();
        [
            -PI * (PI * x[0]).sin() * (PI * x[1]).cos() * e,
            -PI * (PI * x[0]).cos() * (PI * x[1]).sin() * e,
            0.0,
        ]
    };
    let f = move |x: [f64; 3]| 8.0 * 2.0 * PI * PI * exact(x);
    for p in [2usize, 3] {
        println!("elliptic p = {p}");
        for n in [8usize, 16, 32] {
            let mesh = Arc::new(build_structured(2, n, ElemKind::Tri, DomainBox::unit()).unwrap());
            let space = create_space(mesh.clone(), p, 1).unwrap();
            let part = classify_faces(&mesh, &BoundarySpec::all(BcKind::Dirichlet)).unwrap();
            let a = assemble_diffusion_sip(&space, |_| d, 0.9, &part, &pen).unwrap();
            let mut b =
                diffusion_boundary_rhs(&space, &part, |_| d, 0.9, &pen, exact, |_| 0.0).unwrap();
            for (acc, v) in b.iter_mut().zip(volume_rhs_scalar(&space, f)) {
                *acc += v;
            }
            let layout: Vec<usize> = {
                let mut v: Vec<usize> = (0..space.n_elements())
                    .map(|e| space.element_dofs(e).start)
                    .collect();
                v.push(space.n_dofs());
                v
            };
            let bj = BlockJacobi::new(&a, &layout).unwrap();
            let (x, rep) = cg(&a, &b, None, 1e-12, 10 * a.rows, &bj).unwrap();
            assert!(rep.converged);
            let field = atrophy_dg::fespace::DgField::from_coeffs(space.clone(), x).unwrap();
            let (l2, dg) =
                error_norms_scalar(&field, &part, |_| d, 0.9, &pen, exact, grad).unwrap();
            // Best-approximation baseline: projection of the exact solution.
            let proj = l2_project(&space, exact);
            let (l2p, dgp) =
                error_norms_scalar(&proj, &part, |_| d, 0.9, &pen, exact, grad).unwrap();
            println!(
                "  n={n:3} h={:.4}: L2 {l2:.3e} DG {dg:.3e} | proj L2 {l2p:.3e} DG {dgp:.3e}",
                mesh.h_max()
            );
        }
    }
}
