//! Crate-wide error type.

/// Errors produced anywhere in the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("gmsh parse error at line {line}: {msg}")]
    GmshParse { line: usize, msg: String },

    #[error("quadrature order {requested} not supported (max {max})")]
    QuadratureOrder { requested: usize, max: usize },

    #[error("degenerate element {element}: {msg}")]
    DegenerateElement { element: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix not positive definite (p^T A p = {curvature:.3e} at CG iteration {iteration})")]
    IndefiniteMatrix { iteration: usize, curvature: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("boundary face {face} carries tag {tag:?} not matched by the boundary spec")]
    UnmatchedBoundary { face: usize, tag: Option<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("time step {step} (t = {time}) failed: {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the time-step context it occurred in.
    pub fn at_step(self, step: usize, time: f64) -> Error {
        Error::Step {
            step,
            time,
            source: Box::new(self),
        }
    }
}
