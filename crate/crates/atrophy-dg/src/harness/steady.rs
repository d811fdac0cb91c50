//! Coupled steady-state study on the annulus: a Gaussian pathogen seed
//! spreads under homogeneous Neumann conditions until concentration and
//! atrophy saturate at their equilibria.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::Result;
use crate::fespace::DgField;
use crate::geometry::{dist, Vec3};
use crate::mesh::{build_annulus, BcKind, BoundarySpec, Mesh};
use crate::physics::ModelParams;
use crate::timeint::{run_coupled, CoupledConfig, TimeGrid};

#[derive(Debug, Clone)]
pub struct SteadyConfig {
    pub mesh: Arc<Mesh>,
    pub params: ModelParams,
    pub p: usize,
    /// Gaussian initial concentration: amplitude, center, width.
    pub amplitude: f64,
    pub center: Vec3,
    pub width: f64,
    /// Snapshot output: directory and stride in steps (0 disables VTK).
    pub output: Option<(PathBuf, usize)>,
}

impl SteadyConfig {
    /// The annulus configuration: reference parameters, dt = 0.05, T = 15,
    /// degree 2, Gaussian seed of amplitude 0.4 centered at (0.05, 0.05).
    pub fn annulus_default() -> Result<Self> {
        let mesh = Arc::new(build_annulus(0.05, 0.1, 4, 16)?);
        let mut params = ModelParams::default();
        params.dt = 0.05;
        params.t_end = 15.0;
        params.c_cr = 0.0;
        Ok(SteadyConfig {
            mesh,
            params,
            p: 2,
            amplitude: 0.4,
            center: [0.05, 0.05, 0.0],
            width: 0.05,
            output: None,
        })
    }
}

/// One sampled time level: extrema over element means plus the displacement
/// L2 norm.
#[derive(Debug, Clone, Copy)]
pub struct SteadySample {
    pub t: f64,
    pub c_min: f64,
    pub c_mean: f64,
    pub c_max: f64,
    pub g_min: f64,
    pub g_mean: f64,
    pub g_max: f64,
    pub u_l2: f64,
}

#[derive(Debug, Clone)]
pub struct SteadyReport {
    pub samples: Vec<SteadySample>,
    /// Global extrema of the element means of c over the whole run.
    pub c_means_min: f64,
    pub c_means_max: f64,
    pub passed: bool,
}

impl SteadyReport {
    pub fn final_sample(&self) -> &SteadySample {
        self.samples.last().expect("at least the initial sample")
    }

    pub fn summary_csv(&self) -> String {
        summary_csv(&self.samples)
    }
}

/// Deterministic CSV rendering of a sampled trajectory.
pub fn summary_csv(samples: &[SteadySample]) -> String {
    let mut out = String::from("t,c_min,c_mean,c_max,g_min,g_mean,g_max,u_l2\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{:.6},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.c_min, s.c_mean, s.c_max, s.g_min, s.g_mean, s.g_max, s.u_l2
        );
    }
    out
}

pub(crate) fn sample_state(t: f64, c: &DgField, g: &DgField, u: &DgField) -> SteadySample {
    let mesh = &c.space.mesh;
    let total = mesh.total_measure();
    let stats = |f: &DgField| {
        let means = f.element_means();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut integral = 0.0;
        for (e, m) in means.iter().enumerate() {
            lo = lo.min(*m);
            hi = hi.max(*m);
            integral += m * mesh.elements[e].measure;
        }
        (lo, integral / total, hi)
    };
    let (c_min, c_mean, c_max) = stats(c);
    let (g_min, g_mean, g_max) = stats(g);
    SteadySample {
        t,
        c_min,
        c_mean,
        c_max,
        g_min,
        g_mean,
        g_max,
        u_l2: u.l2_norm(),
    }
}

/// Run the coupled model to its saturated state and report the trajectory.
/// Passes when the final mean concentration reaches 0.999 and the mean
/// atrophy rate sits within 1e-3 of `-gamma`.
pub fn run_steady_state(config: &SteadyConfig) -> Result<SteadyReport> {
    let params = config.params.clone();
    let grid = TimeGrid::new(params.dt, params.t_end)?;
    let gamma = params.gamma;

    let mut cc = CoupledConfig::new(config.mesh.clone(), params, config.p, config.p, config.p);
    cc.bc_c = BoundarySpec::all(BcKind::Neumann);
    cc.bc_u = BoundarySpec::new()
        .with("inner", BcKind::Dirichlet)
        .with("outer", BcKind::Neumann);
    let (amp, center, width) = (config.amplitude, config.center, config.width);
    cc.c0 = Box::new(move |x| {
        let r = dist(x, center) / width;
        amp * (-0.5 * r * r).exp()
    });

    let mut samples = Vec::with_capacity(grid.n_steps + 1);
    let mut c_means_min = f64::INFINITY;
    let mut c_means_max = f64::NEG_INFINITY;
    let output = config.output.clone();
    if let Some((dir, _)) = &output {
        std::fs::create_dir_all(dir)?;
    }
    let end = run_coupled(cc, grid, |_, state| {
        let s = sample_state(state.t, &state.c, &state.g, &state.u);
        c_means_min = c_means_min.min(s.c_min);
        c_means_max = c_means_max.max(s.c_max);
        samples.push(s);
        if let Some((dir, stride)) = &output {
            if *stride > 0 && state.step % stride == 0 {
                let path = dir.join(format!("snapshot_{:04}.vtk", state.step / stride));
                crate::harness::vtk::write_vtk(
                    &state.c.space.mesh,
                    &[("c", &state.c), ("g", &state.g), ("u", &state.u)],
                    &path,
                )?;
            }
        }
        Ok(())
    })?;
    let _ = end;

    let last = samples.last().expect("samples");
    let passed = last.c_mean >= 0.999 && (last.g_mean + gamma).abs() <= 1e-3;
    Ok(SteadyReport {
        samples,
        c_means_min,
        c_means_max,
        passed,
    })
}
