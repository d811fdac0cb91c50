//! Constitutive formulas: diffusion tensor, concentration-dependent carrying
//! capacity, logistic atrophy law and its closed-form solution, linearized
//! Piola-Kirchhoff stress, and the Lagrangian pull-back of a transport
//! tensor.

use crate::error::{Error, Result};
use crate::geometry::{det, identity, inverse, mat_mul, mat_scale, norm, sym, transpose, Mat3};

/// All physical and numerical constants of the coupled model.
///
/// Units: diffusivities in mm^2/year, Lame parameters in Pa, `alpha` and
/// `1/tau` in 1/year, lengths in mm, times in years.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub d_ext: f64,
    pub d_axn: f64,
    /// Axonal direction; must be a unit vector when `d_axn > 0`.
    pub axon_dir: [f64; 3],
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Concentration threshold below which no atrophy occurs. A value of 1
    /// (together with clamped concentrations) disables atrophy entirely.
    pub c_cr: f64,
    pub theta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub eta0: f64,
    pub xi0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            d_ext: 8.0,
            d_axn: 0.0,
            axon_dir: [1.0, 0.0, 0.0],
            alpha: 0.9,
            lambda: 505.0,
            mu: 216.0,
            tau: 1.0,
            gamma: 0.05,
            c_cr: 0.0,
            theta: 0.5,
            dt: 0.05,
            t_end: 15.0,
            eta0: 10.0,
            xi0: 10.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_ext > 0.0) || self.d_axn < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "need d_ext > 0 and d_axn >= 0 (got {}, {})",
                self.d_ext, self.d_axn
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) && self.gamma != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.c_cr) {
            return Err(Error::InvalidParameter(format!(
                "c_cr must lie in [0, 1], got {}",
                self.c_cr
            )));
        }
        if !(self.mu > 0.0) || self.lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "need mu > 0 and lambda >= 0 (got {}, {})",
                self.mu, self.lambda
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter(
                "dt and t_end must be positive".into(),
            ));
        }
        if !(self.eta0 > 0.0) || !(self.xi0 > 0.0) {
            return Err(Error::InvalidParameter(
                "penalty constants must be positive".into(),
            ));
        }
        if self.d_axn > 0.0 && (norm(self.axon_dir) - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(
                "axon_dir must be a unit vector when d_axn > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn diffusion(&self) -> Result<Mat3> {
        diffusion_tensor(self.d_ext, self.d_axn, self.axon_dir)
    }

    /// Largest eigenvalue of the isotropic elasticity tensor, `2 mu + d lambda`.
    pub fn elasticity_bound(&self, dim: usize) -> f64 {
        2.0 * self.mu + dim as f64 * self.lambda
    }
}

/// Transversely isotropic diffusion tensor `d_ext I + d_axn (n (x) n)`.
pub fn diffusion_tensor(d_ext: f64, d_axn: f64, n: [f64; 3]) -> Result<Mat3> {
    if d_axn > 0.0 && (norm(n) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "axonal direction must be a unit vector (|n| = {})",
            norm(n)
        )));
    }
    let mut d = mat_scale(&identity(), d_ext);
    if d_axn > 0.0 {
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] += d_axn * n[i] * n[j];
            }
        }
    }
    Ok(d)
}

/// Concentration-dependent carrying capacity of the logistic law. The input
/// concentration is clamped to [0, 1]; `c_cr >= 1` always yields 1.
pub fn beta_of_c(c: f64, gamma: f64, c_cr: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= c_cr || c_cr >= 1.0 {
        1.0
    } else {
        1.0 - gamma * (c - c_cr) / (1.0 - c_cr)
    }
}

/// Right-hand side of the logistic atrophy law,
/// `(1/tau) (1 + g) (1 - (1 + g) / beta)`.
pub fn logistic_rhs(g: f64, beta: f64, tau: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Ok((1.0 + g) * (1.0 - (1.0 + g) / beta) / tau)
}

/// Closed-form solution of the logistic law from `g(0) = g0`:
/// `g(t) = beta (1 + g0) e^{t/tau} / (beta + (1 + g0)(e^{t/tau} - 1)) - 1`.
pub fn logistic_exact(t: f64, g0: f64, beta: f64, tau: f64) -> Result<f64> {
    if !(beta > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter(
            "beta and tau must be positive".into(),
        ));
    }
    if 1.0 + g0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need 1 + g0 > 0, got g0 = {g0}"
        )));
    }
    let e = (t / tau).exp();
    let denom = beta + (1.0 + g0) * (e - 1.0);
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidParameter(
            "degenerate denominator in the logistic closed form".into(),
        ));
    }
    Ok(beta * (1.0 + g0) * e / denom - 1.0)
}

/// Linearized first Piola-Kirchhoff stress. Computed through the elastic
/// strain `E_e = sym(grad_u) - g I`, so a compatible isotropic shrink
/// (`grad_u = g I`) returns exactly zero stress.
pub fn piola_linear(grad_u: &Mat3, g: f64, mu: f64, lambda: f64, dim: usize) -> Mat3 {
    let mut e_e = sym(grad_u);
    let mut tr = 0.0;
    for (d, row) in e_e.iter_mut().enumerate().take(dim) {
        row[d] -= g;
        tr += row[d];
    }
    let mut p = mat_scale(&e_e, 2.0 * mu);
    for d in 0..dim {
        p[d][d] += lambda * tr;
    }
    p
}

/// Pull-back of a transport tensor to the reference configuration,
/// `J F^{-1} D F^{-T}`.
pub fn pullback_transport(f: &Mat3, d: &Mat3, dim: usize) -> Result<Mat3> {
    let j = det(f, dim);
    if !(j > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "deformation gradient must have positive determinant (det = {j})"
        )));
    }
    let f_inv = inverse(f, dim).ok_or_else(|| {
        Error::SingularSystem("deformation gradient is not invertible".into())
    })?;
    let tmp = mat_mul(&f_inv, d);
    Ok(mat_scale(&mat_mul(&tmp, &transpose(&f_inv)), j))
}

/// Linearized local volume change indicator, `3 g`.
pub fn volume_change(g: f64) -> f64 {
    3.0 * g
}
