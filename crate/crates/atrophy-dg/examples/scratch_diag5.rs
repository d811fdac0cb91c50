use std::time::Instant;

use atrophy_dg::harness::{run_convergence, ConvergenceConfig};

fn main() {
    let t0 = Instant::now();
    let mut cc = ConvergenceConfig::standard(3, vec![1], 3).unwrap();
    cc.cells = vec![2, 4, 8, 16];
    let table = run_convergence(&cc).unwrap();
    println!("{}", table.to_csv());
    println!("p=1 four-mesh run: {:?}", t0.elapsed());
    // Pairwise slopes over the finest pair for every field.
    let rows = &table.rows;
    let last = rows.len() - 1;
    let (a, b) = (&rows[last - 1], &rows[last]);
    let s = |e1: f64, e2: f64| (e1 / e2).ln() / (a.h / b.h).ln();
    println!(
        "finest-pair slopes: l2_c {:.3} dg_c {:.3} l2_u {:.3} dg_u {:.3}",
        s(a.l2_c, b.l2_c),
        s(a.dg_c, b.dg_c),
        s(a.l2_u, b.l2_u),
        s(a.dg_u, b.dg_u)
    );
}
