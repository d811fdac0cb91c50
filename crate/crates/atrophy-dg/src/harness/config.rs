//! Run configuration files: TOML with sections `[mesh]`, `[params]`,
//! `[time]`, `[bc.c]`, `[bc.u]`, `[ic]`, `[output]`. See `configs/` for
//! annotated fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{dist, Vec3};
use crate::mesh::{
    agglomerate, build_annulus, build_structured, import_gmsh, BcKind, BoundarySpec, DomainBox,
    ElemKind, Mesh,
};
use crate::physics::ModelParams;
use crate::timeint::{CoupledConfig, TimeGrid};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub kind: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_elem")]
    pub elem: String,
    #[serde(default)]
    pub box_lo: Option<[f64; 3]>,
    #[serde(default)]
    pub box_hi: Option<[f64; 3]>,
    /// Merge blocks of a structured quad mesh into polygons.
    #[serde(default)]
    pub group_edge: Option<usize>,
    #[serde(default = "default_r_inner")]
    pub r_inner: f64,
    #[serde(default = "default_r_outer")]
    pub r_outer: f64,
    #[serde(default = "default_n_radial")]
    pub n_radial: usize,
    #[serde(default = "default_n_angular")]
    pub n_angular: usize,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_dim() -> usize {
    2
}
fn default_cells() -> usize {
    8
}
fn default_elem() -> String {
    "tri".into()
}
fn default_r_inner() -> f64 {
    0.05
}
fn default_r_outer() -> f64 {
    0.1
}
fn default_n_radial() -> usize {
    4
}
fn default_n_angular() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default = "d_ext_default")]
    pub d_ext: f64,
    #[serde(default)]
    pub d_axn: f64,
    #[serde(default = "axon_default")]
    pub axon_dir: [f64; 3],
    #[serde(default = "alpha_default")]
    pub alpha: f64,
    #[serde(default = "lambda_default")]
    pub lambda: f64,
    #[serde(default = "mu_default")]
    pub mu: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "gamma_default")]
    pub gamma: f64,
    #[serde(default)]
    pub c_cr: f64,
    #[serde(default = "pen_default")]
    pub eta0: f64,
    #[serde(default = "pen_default")]
    pub xi0: f64,
    #[serde(default = "two")]
    pub p_c: usize,
    #[serde(default = "two")]
    pub p_g: usize,
    #[serde(default = "two")]
    pub p_u: usize,
}

fn d_ext_default() -> f64 {
    8.0
}
fn axon_default() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn alpha_default() -> f64 {
    0.9
}
fn lambda_default() -> f64 {
    505.0
}
fn mu_default() -> f64 {
    216.0
}
fn one() -> f64 {
    1.0
}
fn gamma_default() -> f64 {
    0.05
}
fn pen_default() -> f64 {
    10.0
}
fn two() -> usize {
    2
}

impl Default for ParamsSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "theta_default")]
    pub theta: f64,
}

fn theta_default() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    #[serde(default)]
    pub c: BTreeMap<String, BcKind>,
    #[serde(default)]
    pub u: BTreeMap<String, BcKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSection {
    #[serde(default = "zero_kind")]
    pub kind: String,
    #[serde(default = "amp_default")]
    pub amplitude: f64,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default = "width_default")]
    pub width: f64,
    #[serde(default)]
    pub value: f64,
    /// Expression in the variables x, y, z (evalexpr syntax, e.g.
    /// `0.4 * math::exp(-(x * x + y * y))`).
    #[serde(default)]
    pub formula: Option<String>,
    /// Uniform initial atrophy rate.
    #[serde(default)]
    pub g0: f64,
}

fn zero_kind() -> String {
    "zero".into()
}
fn amp_default() -> f64 {
    0.4
}
fn width_default() -> f64 {
    0.05
}

impl Default for IcSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "out_default")]
    pub dir: PathBuf,
    /// Snapshot every `stride` steps (0 disables VTK output).
    #[serde(default)]
    pub stride: usize,
}

fn out_default() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: out_default(),
            stride: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    #[serde(default)]
    pub params: ParamsSection,
    pub time: TimeSection,
    #[serde(default)]
    pub bc: BcSection,
    #[serde(default)]
    pub ic: IcSection,
    #[serde(default)]
    pub output: OutputSection,
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    parse_run_config(&text)
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    pub fn build_mesh(&self) -> Result<Arc<Mesh>> {
        let m = &self.mesh;
        let mesh = match m.kind.as_str() {
            "structured" => {
                let kind = match m.elem.as_str() {
                    "tri" => ElemKind::Tri,
                    "quad" => ElemKind::Quad,
                    "tet" => ElemKind::Tet,
                    other => {
                        return Err(Error::Config(format!("unknown element kind {other:?}")))
                    }
                };
                let domain = DomainBox::new(
                    m.box_lo.unwrap_or([0.0; 3]),
                    m.box_hi.unwrap_or([1.0; 3]),
                );
                let base = build_structured(m.dim, m.cells, kind, domain)?;
                match m.group_edge {
                    Some(g) if g > 1 => agglomerate(&base, g)?,
                    _ => base,
                }
            }
            "annulus" => build_annulus(m.r_inner, m.r_outer, m.n_radial, m.n_angular)?,
            "gmsh" => {
                let path = m
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("gmsh mesh needs path = \"...\"".into()))?;
                import_gmsh(path)?
            }
            other => return Err(Error::Config(format!("unknown mesh kind {other:?}"))),
        };
        Ok(Arc::new(mesh))
    }

    pub fn model_params(&self) -> ModelParams {
        let p = &self.params;
        ModelParams {
            d_ext: p.d_ext,
            d_axn: p.d_axn,
            axon_dir: p.axon_dir,
            alpha: p.alpha,
            lambda: p.lambda,
            mu: p.mu,
            tau: p.tau,
            gamma: p.gamma,
            c_cr: p.c_cr,
            theta: self.time.theta,
            dt: self.time.dt,
            t_end: self.time.t_end,
            eta0: p.eta0,
            xi0: p.xi0,
        }
    }

    fn initial_concentration(&self) -> Result<Box<dyn Fn(Vec3) -> f64 + Send + Sync>> {
        let ic = &self.ic;
        match ic.kind.as_str() {
            "zero" => Ok(Box::new(|_| 0.0)),
            "uniform" => {
                let v = ic.value;
                Ok(Box::new(move |_| v))
            }
            "gaussian" => {
                let (a, c, w) = (ic.amplitude, ic.center, ic.width);
                if !(w > 0.0) {
                    return Err(Error::Config("gaussian ic needs width > 0".into()));
                }
                Ok(Box::new(move |x| {
                    let r = dist(x, c) / w;
                    a * (-0.5 * r * r).exp()
                }))
            }
            "expression" => {
                let formula = ic
                    .formula
                    .as_ref()
                    .ok_or_else(|| Error::Config("expression ic needs formula = \"...\"".into()))?;
                compile_expression(formula)
            }
            other => Err(Error::Config(format!("unknown ic kind {other:?}"))),
        }
    }

    /// Assemble the driver configuration and the time grid.
    pub fn build(&self) -> Result<(CoupledConfig, TimeGrid)> {
        let mesh = self.build_mesh()?;
        let params = self.model_params();
        let grid = TimeGrid::new(params.dt, params.t_end)?;
        let mut config = CoupledConfig::new(
            mesh,
            params,
            self.params.p_c,
            self.params.p_g,
            self.params.p_u,
        );
        config.bc_c = spec_from_map(&self.bc.c, BcKind::Neumann);
        config.bc_u = spec_from_map(&self.bc.u, BcKind::Dirichlet);
        config.c0 = self.initial_concentration()?;
        let g0 = self.ic.g0;
        config.g0 = Box::new(move |_| g0);
        Ok((config, grid))
    }
}

fn spec_from_map(map: &BTreeMap<String, BcKind>, default_all: BcKind) -> BoundarySpec {
    if map.is_empty() {
        return BoundarySpec::all(default_all);
    }
    let mut spec = BoundarySpec::new();
    for (tag, kind) in map {
        spec = spec.with(tag, *kind);
    }
    spec
}

/// Compile an expression in x, y, z into an initial-condition closure.
fn compile_expression(formula: &str) -> Result<Box<dyn Fn(Vec3) -> f64 + Send + Sync>> {
    use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
    let node = evalexpr::build_operator_tree(formula)
        .map_err(|e| Error::Config(format!("bad ic formula: {e}")))?;
    // Fail early on anything but x, y, z.
    {
        let mut ctx = HashMapContext::new();
        for (name, v) in [("x", 0.1), ("y", 0.2), ("z", 0.3)] {
            ctx.set_value(name.into(), Value::Float(v))
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        node.eval_number_with_context(&ctx)
            .map_err(|e| Error::Config(format!("ic formula does not evaluate: {e}")))?;
    }
    Ok(Box::new(move |x: Vec3| {
        let mut ctx = HashMapContext::new();
        let _ = ctx.set_value("x".into(), Value::Float(x[0]));
        let _ = ctx.set_value("y".into(), Value::Float(x[1]));
        let _ = ctx.set_value("z".into(), Value::Float(x[2]));
        node.eval_number_with_context(&ctx).unwrap_or(f64::NAN)
    }))
}
