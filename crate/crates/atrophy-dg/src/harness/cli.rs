//! Command-line front end: `converge`, `run`, and `mesh-info` subcommands.
//!
//! Exit codes: 0 on success/PASS, 1 on FAIL or runtime failure, 2 on
//! configuration or usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::config::{load_run_config, RunConfig};
use crate::harness::convergence::{run_convergence, ConvergenceConfig};
use crate::harness::steady::{sample_state, summary_csv, SteadySample};
use crate::harness::vtk::write_vtk;
use crate::timeint::run_coupled;

#[derive(Parser)]
#[command(
    name = "atrophy-dg",
    version,
    about = "Polytopal DG solver for pathogen-driven tissue atrophy"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution convergence study; writes rates.csv and prints
    /// PASS/FAIL per degree.
    Converge {
        /// Spatial dimension (2 or 3).
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Polynomial degrees, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        p: Vec<usize>,
        /// Number of uniformly refined mesh levels.
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Time-integration parameter (0.5 = Crank-Nicolson).
        #[arg(long)]
        theta: Option<f64>,
        /// Optional run config whose [params]/[time] sections override the
        /// reference parameter set.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for rates.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Reserved for future stochastic studies.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Coupled simulation from a config file; writes summary.csv and VTK
    /// snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the [output] directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
        /// Reserved for future stochastic studies.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print element and face statistics of a mesh.
    MeshInfo {
        /// Take the mesh from a run config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Import a Gmsh .msh file instead.
        #[arg(long)]
        gmsh: Option<PathBuf>,
        /// Structured mesh: dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Structured mesh: cells per axis.
        #[arg(long)]
        cells: Option<usize>,
        /// Structured mesh: element kind (tri | quad | tet).
        #[arg(long)]
        kind: Option<String>,
    },
}

/// Run the CLI on the given arguments (including argv[0]); returns the
/// process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    crate::configure_threads_from_env();
    match run_command(cli.cmd) {
        Ok(code) => code,
        Err(e @ Error::Config(_)) | Err(e @ Error::InvalidParameter(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_command(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Converge {
            dim,
            p,
            levels,
            theta,
            config,
            out,
            seed: _,
        } => {
            let mut cc = ConvergenceConfig::standard(dim, p, levels)?;
            if let Some(path) = config {
                let rc = load_run_config(path)?;
                let mut params = rc.model_params();
                // The study dictates decoupling; keep the overridden
                // physical constants but not the coupling threshold.
                params.c_cr = 1.0;
                cc.params = params;
            }
            if let Some(theta) = theta {
                cc.params.theta = theta;
            }
            let table = run_convergence(&cc)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("rates.csv"), table.to_csv())?;
            for s in &table.slopes {
                let verdict = if s.within_bands() { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} p={}: L2(c) slope {:.3}, DG(c) slope {:.3}, L2(u) slope {:.3}, DG(u) slope {:.3}",
                    s.p, s.l2_c, s.dg_c, s.l2_u, s.dg_u
                );
            }
            println!("wrote {}", out.join("rates.csv").display());
            Ok(if table.passes() { 0 } else { 1 })
        }
        Command::Run {
            config,
            out,
            theta,
            seed: _,
        } => {
            let mut rc = load_run_config(config)?;
            if let Some(theta) = theta {
                rc.time.theta = theta;
            }
            if let Some(out) = out {
                rc.output.dir = out;
            }
            let summary = execute_run(&rc)?;
            let last = summary.last().expect("at least the initial sample");
            println!(
                "finished at t = {:.3}: mean(c) = {:.6}, mean(g) = {:.6}, |u|_L2 = {:.6e}",
                last.t, last.c_mean, last.g_mean, last.u_l2
            );
            println!("wrote {}", rc.output.dir.join("summary.csv").display());
            Ok(0)
        }
        Command::MeshInfo {
            config,
            gmsh,
            dim,
            cells,
            kind,
        } => {
            let mesh = mesh_from_flags(config, gmsh, dim, cells, kind)?;
            let boundary = mesh.boundary_faces().count();
            println!(
                "{} elements, {} faces, {} boundary",
                mesh.n_elements(),
                mesh.n_faces(),
                boundary
            );
            println!(
                "dim {}, h_max = {:.6}, total measure = {:.12}",
                mesh.dim,
                mesh.h_max(),
                mesh.total_measure()
            );
            let mut tags: BTreeMap<String, usize> = BTreeMap::new();
            for f in mesh.boundary_faces() {
                let tag = mesh.faces[f].tag().unwrap_or("<untagged>").to_string();
                *tags.entry(tag).or_insert(0) += 1;
            }
            for (tag, count) in tags {
                println!("  boundary tag {tag}: {count} faces");
            }
            Ok(0)
        }
    }
}

fn mesh_from_flags(
    config: Option<PathBuf>,
    gmsh: Option<PathBuf>,
    dim: Option<usize>,
    cells: Option<usize>,
    kind: Option<String>,
) -> Result<std::sync::Arc<crate::mesh::Mesh>> {
    if let Some(path) = config {
        return load_run_config(path)?.build_mesh();
    }
    if let Some(path) = gmsh {
        return Ok(std::sync::Arc::new(crate::mesh::import_gmsh(path)?));
    }
    let dim = dim.unwrap_or(2);
    let cells = cells.unwrap_or(2);
    let kind = match kind.as_deref().unwrap_or("quad") {
        "tri" => crate::mesh::ElemKind::Tri,
        "quad" => crate::mesh::ElemKind::Quad,
        "tet" => crate::mesh::ElemKind::Tet,
        other => return Err(Error::Config(format!("unknown element kind {other:?}"))),
    };
    Ok(std::sync::Arc::new(crate::mesh::build_structured(
        dim,
        cells,
        kind,
        crate::mesh::DomainBox::unit(),
    )?))
}

/// Execute a coupled run from a config file, writing summary.csv and VTK
/// snapshots; returns the sampled trajectory.
pub fn execute_run(rc: &RunConfig) -> Result<Vec<SteadySample>> {
    let (coupled, grid) = rc.build()?;
    let out_dir = rc.output.dir.clone();
    let stride = rc.output.stride;
    std::fs::create_dir_all(&out_dir)?;
    let mut samples = Vec::with_capacity(grid.n_steps + 1);
    run_coupled(coupled, grid, |_, state| {
        samples.push(sample_state(state.t, &state.c, &state.g, &state.u));
        if stride > 0 && state.step % stride == 0 {
            let path = out_dir.join(format!("snapshot_{:04}.vtk", state.step / stride));
            write_vtk(
                &state.c.space.mesh,
                &[("c", &state.c), ("g", &state.g), ("u", &state.u)],
                &path,
            )?;
        }
        Ok(())
    })?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&samples))?;
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(args: &[&str]) -> Vec<String> {
        std::iter::once("atrophy-dg")
            .chain(args.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn unknown_flag_exits_2() {
        assert_eq!(cli(argv(&["mesh-info", "--bogus"])), 2);
        assert_eq!(cli(argv(&["no-such-command"])), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(cli(argv(&["--help"])), 0);
    }

    #[test]
    fn mesh_info_quad_grid() {
        // "4 elements, 12 faces, 8 boundary" for the 2x2 quad grid.
        assert_eq!(
            cli(argv(&["mesh-info", "--dim", "2", "--cells", "2", "--kind", "quad"])),
            0
        );
    }

    #[test]
    fn run_missing_config_exits_2() {
        assert_eq!(cli(argv(&["run", "--config", "/nonexistent.toml"])), 2);
    }

    #[test]
    fn short_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = format!(
            r#"
[mesh]
kind = "annulus"
n_radial = 2
n_angular = 8

[time]
dt = 0.1
t_end = 0.3

[params]
p_c = 1
p_g = 1
p_u = 1

[bc.u]
inner = "dirichlet"
outer = "neumann"

[ic]
kind = "uniform"
value = 0.3

[output]
dir = "{}"
stride = 1
"#,
            dir.path().display()
        );
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, cfg).unwrap();
        let code = cli(argv(&["run", "--config", cfg_path.to_str().unwrap()]));
        assert_eq!(code, 0);
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("snapshot_0000.vtk").exists());
        assert!(dir.path().join("snapshot_0003.vtk").exists());
    }
}
