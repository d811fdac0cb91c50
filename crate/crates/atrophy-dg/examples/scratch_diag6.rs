use std::time::Instant;

use atrophy_dg::harness::{run_steady_state, SteadyConfig};

fn main() {
    let t0 = Instant::now();
    let config = SteadyConfig::annulus_default().unwrap();
    let report = run_steady_state(&config).unwrap();
    let last = report.final_sample();
    println!(
        "T = {}: mean(c) = {:.6}, mean(g) = {:.7}, |u| = {:.4e}",
        last.t, last.c_mean, last.g_mean, last.u_l2
    );
    println!(
        "element-mean bounds over the run: [{:.4}, {:.4}]",
        report.c_means_min, report.c_means_max
    );
    println!("passed: {}", report.passed);
    println!("runtime: {:?}", t0.elapsed());
}
