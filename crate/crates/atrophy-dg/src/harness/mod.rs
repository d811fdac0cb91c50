//! Study harness: run configurations, error norms, manufactured-solution
//! convergence suites, the coupled steady-state study, VTK/CSV output, and
//! the CLI entry point.

pub mod cli;
pub mod config;
pub mod convergence;
pub mod manufactured;
pub mod norms;
pub mod steady;
pub mod vtk;

pub use cli::{cli, execute_run};
pub use config::{load_run_config, parse_run_config, RunConfig};
pub use convergence::{
    decoupled_matches_standalone, run_convergence, run_logistic_convergence, ConvergenceConfig,
    RateRow, RateTable, SlopeSet,
};
pub use manufactured::Manufactured;
pub use norms::{error_norms_scalar, error_norms_vector};
pub use steady::{run_steady_state, SteadyConfig, SteadyReport, SteadySample};
pub use vtk::{read_vtk, write_vtk, VtkData};
