//! Discontinuous Galerkin solver for pathogen-driven tissue atrophy.
//!
//! The library couples three fields on a shared polytopal mesh:
//!
//! * a Fisher-Kolmogorov reaction-diffusion equation for the relative
//!   pathogen concentration `c`,
//! * a logistic evolution law for the inelastic length-reduction rate `g`,
//!   whose carrying capacity shrinks with `c`,
//! * quasi-static linear morpho-elasticity for the displacement `u`, forced
//!   by the isotropic inelastic strain `g I`.
//!
//! Space is discretized with a symmetric interior-penalty DG method on
//! triangles, quadrilaterals, agglomerated polygons, or tetrahedra; time
//! with a semi-implicit theta-method (Crank-Nicolson by default) that
//! linearizes the reaction terms through second-order extrapolation.
//!
//! Start from [`timeint::run_coupled`] for coupled simulations or
//! [`harness`] for the convergence and steady-state studies; the `examples/`
//! directory exercises every major capability.

pub mod error;
pub mod fespace;
pub mod forms;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod physics;
pub mod timeint;

pub use error::{Error, Result};

/// Cap the rayon worker count from the `ATROPHYDG_THREADS` environment
/// variable. Call once at startup; later calls are no-ops.
pub fn configure_threads_from_env() {
    if let Ok(v) = std::env::var("ATROPHYDG_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}
