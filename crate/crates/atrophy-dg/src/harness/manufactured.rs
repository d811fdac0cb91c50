//! Manufactured solutions for the convergence studies, with the forcing
//! terms derived analytically and machine-verified by finite-difference
//! residual checks before every use.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::physics::{logistic_exact, piola_linear, ModelParams};

/// Exact fields of the decoupled convergence test in `dim` dimensions:
/// a product-cosine concentration decaying in time, a spatially uniform
/// logistic atrophy rate started at 1, and a stationary trigonometric
/// displacement.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub dim: usize,
    pub d_ext: f64,
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl Manufactured {
    pub fn new(dim: usize, params: &ModelParams) -> Result<Self> {
        if params.d_axn != 0.0 {
            return Err(Error::InvalidParameter(
                "the manufactured forcing assumes an isotropic diffusion tensor".into(),
            ));
        }
        Ok(Manufactured {
            dim,
            d_ext: params.d_ext,
            alpha: params.alpha,
            mu: params.mu,
            lambda: params.lambda,
            tau: params.tau,
        })
    }

    pub fn c(&self, x: Vec3, t: f64) -> f64 {
        let mut v = (PI * x[0]).cos() * (PI * x[1]).cos();
        if self.dim == 3 {
            v *= (PI * x[2]).cos();
        }
        v * (-t).exp()
    }

    pub fn grad_c(&self, x: Vec3, t: f64) -> Vec3 {
        let e = (-t).exp();
        let (cx, sx) = ((PI * x[0]).cos(), (PI * x[0]).sin());
        let (cy, sy) = ((PI * x[1]).cos(), (PI * x[1]).sin());
        if self.dim == 2 {
            [-PI * sx * cy * e, -PI * cx * sy * e, 0.0]
        } else {
            let (cz, sz) = ((PI * x[2]).cos(), (PI * x[2]).sin());
            [
                -PI * sx * cy * cz * e,
                -PI * cx * sy * cz * e,
                -PI * cx * cy * sz * e,
            ]
        }
    }

    /// Transport forcing `f_c = dc/dt - d_ext lap(c) - alpha c (1 - c)`.
    pub fn f_c(&self, x: Vec3, t: f64) -> f64 {
        let c = self.c(x, t);
        let lap = -(self.dim as f64) * PI * PI * c;
        -c - self.d_ext * lap - self.alpha * c * (1.0 - c)
    }

    pub fn g(&self, t: f64) -> f64 {
        logistic_exact(t, 1.0, 1.0, self.tau).expect("closed-form logistic")
    }

    pub fn u(&self, x: Vec3) -> Vec3 {
        let u0 = -(2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos();
        let u1 = (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
        if self.dim == 2 {
            [u0, u1, 0.0]
        } else {
            [u0, u1, x[2]]
        }
    }

    pub fn grad_u(&self, x: Vec3) -> Mat3 {
        let (c2x, s2x) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
        let (c2y, s2y) = ((2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin());
        let mut g = [[0.0; 3]; 3];
        g[0][0] = 2.0 * PI * s2x * c2y;
        g[0][1] = 2.0 * PI * c2x * s2y;
        g[1][0] = 2.0 * PI * c2x * s2y;
        g[1][1] = 2.0 * PI * s2x * c2y;
        if self.dim == 3 {
            g[2][2] = 1.0;
        }
        g
    }

    /// Elasticity forcing `f_u = -div P`. The atrophy contribution drops out
    /// because the manufactured `g` is spatially uniform, leaving
    /// `f_u = 8 pi^2 (2 mu + lambda) [u_x, u_y, 0]`.
    pub fn f_u(&self, x: Vec3) -> Vec3 {
        let k = 8.0 * PI * PI * (2.0 * self.mu + self.lambda);
        let u = self.u(x);
        [k * u[0], k * u[1], 0.0]
    }

    /// Verify every closed form above against centered finite differences at
    /// `samples` pseudo-random space-time points (relative tolerance 1e-5).
    pub fn verify(&self, samples: usize) -> Result<()> {
        let mut seed = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let h1 = 1e-6; // first derivatives
        let h2 = 1e-4; // second derivatives
        for k in 0..samples {
            let x = [
                0.05 + 0.9 * next(),
                0.05 + 0.9 * next(),
                if self.dim == 3 { 0.05 + 0.9 * next() } else { 0.0 },
            ];
            let t = 0.1 * next();

            // grad c against finite differences.
            let gc = self.grad_c(x, t);
            for d in 0..self.dim {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h1;
                xm[d] -= h1;
                let fd = (self.c(xp, t) - self.c(xm, t)) / (2.0 * h1);
                check(gc[d], fd, 1e-5, "grad_c", k)?;
            }

            // Transport residual: dc/dt - d_ext lap c - alpha c (1 - c) - f_c.
            let dcdt = (self.c(x, t + h1) - self.c(x, t - h1)) / (2.0 * h1);
            let mut lap = 0.0;
            for d in 0..self.dim {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h2;
                xm[d] -= h2;
                lap += (self.c(xp, t) - 2.0 * self.c(x, t) + self.c(xm, t)) / (h2 * h2);
            }
            let c = self.c(x, t);
            let resid = dcdt - self.d_ext * lap - self.alpha * c * (1.0 - c) - self.f_c(x, t);
            check(resid, 0.0, 1e-5 * (1.0 + self.f_c(x, t).abs()), "f_c residual", k)?;

            // grad u against finite differences.
            let gu = self.grad_u(x);
            for a in 0..self.dim {
                for d in 0..self.dim {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += h1;
                    xm[d] -= h1;
                    let fd = (self.u(xp)[a] - self.u(xm)[a]) / (2.0 * h1);
                    check(gu[a][d], fd, 1e-5, "grad_u", k)?;
                }
            }

            // Elasticity residual: -div P(u, g(t)) - f_u, with the stress
            // differentiated through the analytic displacement gradient.
            let g = self.g(t);
            let fu = self.f_u(x);
            for a in 0..self.dim {
                let mut div = 0.0;
                for d in 0..self.dim {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += h1;
                    xm[d] -= h1;
                    let pp = piola_linear(&self.grad_u(xp), g, self.mu, self.lambda, self.dim);
                    let pm = piola_linear(&self.grad_u(xm), g, self.mu, self.lambda, self.dim);
                    div += (pp[a][d] - pm[a][d]) / (2.0 * h1);
                }
                let resid = -div - fu[a];
                check(resid, 0.0, 1e-5 * (1.0 + fu[a].abs()), "f_u residual", k)?;
            }
        }
        Ok(())
    }
}

fn check(got: f64, want: f64, tol: f64, what: &str, sample: usize) -> Result<()> {
    let scale = want.abs().max(1.0);
    if (got - want).abs() > tol * scale {
        return Err(Error::InvalidParameter(format!(
            "manufactured-solution self-check failed for {what} at sample {sample}: \
             {got} vs {want}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_terms_pass_fd_check_2d_and_3d() {
        let params = ModelParams::default();
        Manufactured::new(2, &params).unwrap().verify(50).unwrap();
        Manufactured::new(3, &params).unwrap().verify(50).unwrap();
    }

    #[test]
    fn anisotropic_params_rejected() {
        let mut params = ModelParams::default();
        params.d_axn = 80.0;
        assert!(Manufactured::new(2, &params).is_err());
    }

    #[test]
    fn g_matches_reference_form() {
        let m = Manufactured::new(2, &ModelParams::default()).unwrap();
        for t in [0.0, 0.05, 0.1] {
            assert!((m.g(t) - 1.0 / (2.0 * t.exp() - 1.0)).abs() < 1e-14);
        }
    }
}
