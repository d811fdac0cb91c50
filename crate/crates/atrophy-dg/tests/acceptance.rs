//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Heavy studies are shared between criteria through lazy statics, so the
//! 2D rate table and the steady-state trajectory are computed once.

use std::sync::{Arc, LazyLock};

use atrophy_dg::fespace::{create_space, l2_project, l2_project_vector};
use atrophy_dg::forms::{
    assemble_coupling, assemble_diffusion_sip, assemble_elasticity_sip, assemble_logistic,
    assemble_logistic_nonlinear, assemble_mass, PenaltyParams,
};
use atrophy_dg::geometry::{identity, mat_mul, mat_scale, transpose, Mat3};
use atrophy_dg::harness::{
    run_convergence, run_logistic_convergence, run_steady_state, ConvergenceConfig, RateTable,
    SteadyConfig, SteadyReport,
};
use atrophy_dg::mesh::{
    agglomerate, build_structured, classify_faces, BcKind, BoundarySpec, DomainBox, ElemKind,
    Mesh,
};
use atrophy_dg::oracle;
use atrophy_dg::physics::{
    beta_of_c, diffusion_tensor, piola_linear, pullback_transport, ModelParams,
};

fn init() {
    atrophy_dg::configure_threads_from_env();
}

/// Shared 2D manufactured study (criteria 1 and 2).
static RATES_2D: LazyLock<RateTable> = LazyLock::new(|| {
    init();
    let config = ConvergenceConfig::standard(2, vec![1, 2, 3], 4).expect("config");
    run_convergence(&config).expect("2D convergence study")
});

/// Shared steady-state trajectory (criteria 5 and 8).
static STEADY: LazyLock<SteadyReport> = LazyLock::new(|| {
    init();
    let config = SteadyConfig::annulus_default().expect("config");
    run_steady_state(&config).expect("steady-state study")
});

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_spatial_convergence_concentration_2d() {
    let table = &*RATES_2D;
    let mut pass = true;
    let mut detail = String::new();
    for s in &table.slopes {
        let p = s.p as f64;
        let ok = s.l2_c >= p + 0.8 && s.l2_c <= p + 1.4 && s.dg_c >= p - 0.2 && s.dg_c <= p + 0.6;
        pass &= ok;
        detail.push_str(&format!("p={}: L2 {:.3} DG {:.3}; ", s.p, s.l2_c, s.dg_c));
    }
    report("1 [2D rates, c]", pass, detail.trim_end());
}

#[test]
fn criterion_2_spatial_convergence_displacement_2d() {
    let table = &*RATES_2D;
    let mut pass = true;
    let mut detail = String::new();
    for s in &table.slopes {
        let p = s.p as f64;
        let ok = s.l2_u >= p + 0.8 && s.l2_u <= p + 1.4 && s.dg_u >= p - 0.2 && s.dg_u <= p + 0.6;
        pass &= ok;
        detail.push_str(&format!("p={}: L2 {:.3} DG {:.3}; ", s.p, s.l2_u, s.dg_u));
    }
    report("2 [2D rates, u]", pass, detail.trim_end());
}

#[test]
fn criterion_3_spot_check_3d() {
    init();
    // Reference tetrahedral sequence h = 0.8660, 0.4330, 0.2165 (, 0.1083).
    // Degree 1 runs the full four-level sequence with the fit over the two
    // finest pairs; degree 2 stays within the desk-scale budget on three
    // levels and is judged on its finest pair.
    let mut pass = true;
    let mut detail = String::new();

    let mut cc = ConvergenceConfig::standard(3, vec![1], 4).expect("config");
    cc.cells = vec![2, 4, 8, 16];
    let table = run_convergence(&cc).expect("3D p=1 study");
    let s = &table.slopes[0];
    let ok = s.l2_c >= 1.8
        && s.l2_c <= 2.4
        && s.dg_c >= 0.8
        && s.dg_c <= 1.6
        && s.l2_u >= 1.8
        && s.l2_u <= 2.4
        && s.dg_u >= 0.8
        && s.dg_u <= 1.6;
    pass &= ok;
    detail.push_str(&format!(
        "p=1: L2(c) {:.3} DG(c) {:.3} L2(u) {:.3} DG(u) {:.3}; ",
        s.l2_c, s.dg_c, s.l2_u, s.dg_u
    ));

    let mut cc = ConvergenceConfig::standard(3, vec![2], 3).expect("config");
    cc.cells = vec![2, 4, 8];
    let table = run_convergence(&cc).expect("3D p=2 study");
    let rows = &table.rows;
    let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
    let slope = |e1: f64, e2: f64| (e1 / e2).ln() / (a.h / b.h).ln();
    let (l2c, dgc) = (slope(a.l2_c, b.l2_c), slope(a.dg_c, b.dg_c));
    let (l2u, dgu) = (slope(a.l2_u, b.l2_u), slope(a.dg_u, b.dg_u));
    let ok = l2c >= 2.8
        && l2c <= 3.4
        && dgc >= 1.8
        && dgc <= 2.6
        && l2u >= 2.8
        && l2u <= 3.4
        && dgu >= 1.8
        && dgu <= 2.6;
    pass &= ok;
    detail.push_str(&format!(
        "p=2 (finest pair): L2(c) {l2c:.3} DG(c) {dgc:.3} L2(u) {l2u:.3} DG(u) {dgu:.3}"
    ));
    report("3 [3D rates]", pass, &detail);
}

#[test]
fn criterion_4_logistic_oracle() {
    init();
    let (table, slope) =
        run_logistic_convergence(&[1e-3, 5e-4, 2.5e-4], 0.1, 0.5).expect("logistic study");
    let err_at_dt3 = table[0].1;
    let pass = err_at_dt3 <= 1e-6 && (slope - 2.0).abs() <= 0.1;
    report(
        "4 [logistic oracle]",
        pass,
        &format!("error(dt=1e-3) = {err_at_dt3:.3e}, halving slope = {slope:.3}"),
    );
}

#[test]
fn criterion_5_steady_state_saturation() {
    let last = *STEADY.final_sample();
    let pass = last.c_mean >= 0.999 && (last.g_mean + 0.05).abs() <= 1e-3;
    report(
        "5 [steady state]",
        pass,
        &format!(
            "mean(c)(T) = {:.6}, mean(g)(T) = {:.7}",
            last.c_mean, last.g_mean
        ),
    );
}

fn four_element_meshes() -> Vec<(&'static str, Arc<Mesh>)> {
    let tri = Arc::new(build_structured(2, 1, ElemKind::Tri, DomainBox::unit()).unwrap());
    let quad = Arc::new(build_structured(2, 2, ElemKind::Quad, DomainBox::unit()).unwrap());
    let fine = build_structured(2, 4, ElemKind::Quad, DomainBox::unit()).unwrap();
    let poly = Arc::new(agglomerate(&fine, 2).unwrap());
    let tets = {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0],
        ];
        let cells = vec![[0usize, 1, 2, 3], [4, 1, 3, 2]];
        Arc::new(Mesh::from_tetrahedra(vertices, cells, |_, _| Some("wall".into())).unwrap())
    };
    vec![
        ("triangles", tri),
        ("quads", quad),
        ("polygons", poly),
        ("tetrahedra", tets),
    ]
}

#[test]
fn criterion_6_oracle_equivalence() {
    init();
    let params = ModelParams::default();
    let pen = PenaltyParams::default();
    let mut worst = 0.0f64;
    for (name, mesh) in four_element_meshes() {
        assert!(mesh.n_elements() <= 4, "{name}: oracle meshes stay tiny");
        let dim = mesh.dim;
        let d = diffusion_tensor(8.0, if dim == 3 { 80.0 } else { 0.0 }, [1.0, 0.0, 0.0])
            .unwrap();
        let p = 2;
        let cspace = create_space(mesh.clone(), p, 1).unwrap();
        let gspace = create_space(mesh.clone(), 1, 1).unwrap();
        let vspace = create_space(mesh.clone(), p, dim).unwrap();
        let part = classify_faces(&mesh, &BoundarySpec::all(BcKind::Dirichlet)).unwrap();
        let c_star = l2_project(&cspace, |x| 0.2 + 0.5 * x[0] - 0.3 * x[1] * x[1]);
        let g_star = l2_project(&gspace, |x| -0.02 * (1.0 + x[0]));
        let beta = |e: usize, x: [f64; 3]| {
            beta_of_c(c_star.eval_scalar(e, x), params.gamma, params.c_cr)
        };

        let mut check = |label: &str, diff: f64| {
            worst = worst.max(diff);
            assert!(diff < 1e-12, "{name}/{label}: relative max diff {diff:.2e}");
        };

        let m_c = assemble_mass(&cspace, |_, _| 1.0);
        check("M_c", oracle::max_rel_diff(&m_c, &oracle::dense_mass(&cspace, |_, _| 1.0)));

        let m_alpha = assemble_mass(&cspace, |_, _| params.alpha);
        check(
            "M_alpha",
            oracle::max_rel_diff(&m_alpha, &oracle::dense_mass(&cspace, |_, _| params.alpha)),
        );

        let m_ta = assemble_mass(&cspace, |e, x| params.alpha * c_star.eval_scalar(e, x));
        check(
            "M~_alpha",
            oracle::max_rel_diff(
                &m_ta,
                &oracle::dense_mass(&cspace, |e, x| params.alpha * c_star.eval_scalar(e, x)),
            ),
        );

        let a_c = assemble_diffusion_sip(&cspace, |_| d, params.alpha, &part, &pen).unwrap();
        check(
            "A_c",
            oracle::max_rel_diff(
                &a_c,
                &oracle::dense_diffusion(&cspace, |_| d, params.alpha, &part, &pen).unwrap(),
            ),
        );

        let (m_beta, _) = assemble_logistic(&gspace, beta, params.tau);
        check(
            "M_beta",
            oracle::max_rel_diff(
                &m_beta,
                &oracle::dense_mass(&gspace, |e, x| (1.0 - 2.0 / beta(e, x)) / params.tau),
            ),
        );

        let m_tb = assemble_logistic_nonlinear(&gspace, &g_star, beta, params.tau);
        check(
            "M~_beta",
            oracle::max_rel_diff(
                &m_tb,
                &oracle::dense_mass(&gspace, |e, x| {
                    g_star.eval_scalar(e, x) / (params.tau * beta(e, x))
                }),
            ),
        );

        let k_e = assemble_elasticity_sip(&vspace, params.mu, params.lambda, &part, &pen).unwrap();
        check(
            "K_E",
            oracle::max_rel_diff(
                &k_e,
                &oracle::dense_elasticity(&vspace, params.mu, params.lambda, &part, &pen)
                    .unwrap(),
            ),
        );

        let b_g = assemble_coupling(&gspace, &vspace, params.mu, params.lambda, &part).unwrap();
        check(
            "B_g",
            oracle::max_rel_diff(
                &b_g,
                &oracle::dense_coupling(&gspace, &vspace, params.mu, params.lambda, &part)
                    .unwrap(),
            ),
        );
    }
    report(
        "6 [oracle equivalence]",
        true,
        &format!("8 operators on 4 mesh families, worst relative diff {worst:.2e}"),
    );
}

#[test]
fn criterion_7_structural_properties() {
    init();
    let pen = PenaltyParams::default();
    let d = mat_scale(&identity(), 8.0);
    let mut detail = String::new();

    // Symmetry on a representative mesh set, including polygons.
    let mut sym_ok = true;
    for (_, mesh) in four_element_meshes() {
        let dim = mesh.dim;
        let cspace = create_space(mesh.clone(), 2, 1).unwrap();
        let vspace = create_space(mesh.clone(), 2, dim).unwrap();
        let part = classify_faces(&mesh, &BoundarySpec::all(BcKind::Dirichlet)).unwrap();
        let a_c = assemble_diffusion_sip(&cspace, |_| d, 0.9, &part, &pen).unwrap();
        let k_e = assemble_elasticity_sip(&vspace, 216.0, 505.0, &part, &pen).unwrap();
        sym_ok &= a_c.symmetry_defect() <= 1e-12 && k_e.symmetry_defect() <= 1e-12;
    }
    detail.push_str(&format!("symmetry {}; ", ok_str(sym_ok)));

    // Rigid modes in the pure-Neumann kernel, 2D and 3D.
    let mut rigid_ok = true;
    {
        let mesh = Arc::new(build_structured(2, 2, ElemKind::Tri, DomainBox::unit()).unwrap());
        let vspace = create_space(mesh.clone(), 2, 2).unwrap();
        let part = classify_faces(&mesh, &BoundarySpec::all(BcKind::Neumann)).unwrap();
        let k = assemble_elasticity_sip(&vspace, 216.0, 505.0, &part, &pen).unwrap();
        let scale = k.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let modes: [Box<dyn Fn([f64; 3]) -> [f64; 3] + Sync>; 3] = [
            Box::new(|_| [1.0, 0.0, 0.0]),
            Box::new(|_| [0.0, 1.0, 0.0]),
            Box::new(|x| [-x[1], x[0], 0.0]),
        ];
        for m in &modes {
            let u = l2_project_vector(&vspace, m);
            rigid_ok &= k.mul_vec(&u.coeffs).iter().all(|v| v.abs() <= 1e-10 * scale);
        }
    }
    {
        let mesh = Arc::new(build_structured(3, 1, ElemKind::Tet, DomainBox::unit()).unwrap());
        let vspace = create_space(mesh.clone(), 1, 3).unwrap();
        let part = classify_faces(&mesh, &BoundarySpec::all(BcKind::Neumann)).unwrap();
        let k = assemble_elasticity_sip(&vspace, 216.0, 505.0, &part, &pen).unwrap();
        let scale = k.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let modes: [Box<dyn Fn([f64; 3]) -> [f64; 3] + Sync>; 6] = [
            Box::new(|_| [1.0, 0.0, 0.0]),
            Box::new(|_| [0.0, 1.0, 0.0]),
            Box::new(|_| [0.0, 0.0, 1.0]),
            Box::new(|x| [-x[1], x[0], 0.0]),
            Box::new(|x| [0.0, -x[2], x[1]]),
            Box::new(|x| [x[2], 0.0, -x[0]]),
        ];
        for m in &modes {
            let u = l2_project_vector(&vspace, m);
            rigid_ok &= k.mul_vec(&u.coeffs).iter().all(|v| v.abs() <= 1e-10 * scale);
        }
    }
    detail.push_str(&format!("rigid modes {}; ", ok_str(rigid_ok)));

    // Mass matrices equal the identity under the orthonormal basis.
    let mut mass_ok = true;
    for (_, mesh) in four_element_meshes() {
        let space = create_space(mesh.clone(), 3, 1).unwrap();
        let m = assemble_mass(&space, |_, _| 1.0);
        for i in 0..m.rows {
            for j in 0..m.cols {
                let expect = if i == j { 1.0 } else { 0.0 };
                mass_ok &= (m.get(i, j) - expect).abs() <= 1e-10;
            }
        }
    }
    detail.push_str(&format!("mass identity {}; ", ok_str(mass_ok)));

    // Compatible isotropic shrink is exactly stress free.
    let mut stress_ok = true;
    for dim in [2usize, 3] {
        for g in [-0.05, -0.01, 0.3] {
            let mut grad = [[0.0; 3]; 3];
            for k in 0..dim {
                grad[k][k] = g;
            }
            let p = piola_linear(&grad, g, 216.0, 505.0, dim);
            stress_ok &= p == [[0.0; 3]; 3];
        }
    }
    detail.push_str(&format!("stress-free atrophy {}", ok_str(stress_ok)));

    report(
        "7 [structural]",
        sym_ok && rigid_ok && mass_ok && stress_ok,
        &detail,
    );
}

fn ok_str(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "VIOLATED"
    }
}

#[test]
fn criterion_8_soft_maximum_principle() {
    let r = &*STEADY;
    let pass = r.c_means_min >= -0.05 && r.c_means_max <= 1.05;
    report(
        "8 [soft maximum principle]",
        pass,
        &format!(
            "element means of c within [{:.4}, {:.4}] for all steps",
            r.c_means_min, r.c_means_max
        ),
    );
}

#[test]
fn criterion_9_pullback_identities() {
    init();
    let d = diffusion_tensor(8.0, 80.0, [0.0, 1.0, 0.0]).unwrap();
    // F = I reproduces D exactly; F = 2I doubles it exactly.
    let exact_id = pullback_transport(&identity(), &d, 3).unwrap() == d;
    let two = mat_scale(&identity(), 2.0);
    let doubled = pullback_transport(&two, &d, 3).unwrap();
    let mut exact_two = true;
    for i in 0..3 {
        for j in 0..3 {
            exact_two &= doubled[i][j] == 2.0 * d[i][j];
        }
    }

    // 100 pseudo-random SPD (D, F) pairs: symmetry and positive
    // definiteness of the pull-back.
    let mut seed = 0x7a1c_e5d3_9b24_f017u64;
    let mut next = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut random_ok = true;
    let mut count = 0;
    while count < 100 {
        let mut b: Mat3 = [[0.0; 3]; 3];
        let mut f: Mat3 = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = next();
                f[i][j] = next();
            }
            f[i][i] += 1.5;
        }
        if atrophy_dg::geometry::det(&f, 3) <= 0.05 {
            continue;
        }
        count += 1;
        let mut dd = mat_mul(&b, &transpose(&b));
        for i in 0..3 {
            dd[i][i] += 0.5;
        }
        let out = pullback_transport(&f, &dd, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                random_ok &=
                    (out[i][j] - out[j][i]).abs() <= 1e-12 * (1.0 + out[i][j].abs());
            }
        }
        // PD via Cholesky on the symmetrized result.
        let na = nalgebra::Matrix3::from_fn(|i, j| 0.5 * (out[i][j] + out[j][i]));
        random_ok &= nalgebra::Cholesky::new(na).is_some();
    }
    report(
        "9 [pull-back identities]",
        exact_id && exact_two && random_ok,
        &format!(
            "F=I exact: {exact_id}, F=2I exact: {exact_two}, 100 random SPD pairs: {}",
            ok_str(random_ok)
        ),
    );
}
