//! Per-element modal bases: bounding-box-scaled monomials orthonormalized
//! against the element L2 inner product by modified Gram-Schmidt. Works
//! uniformly on simplices and star-shaped polygons, and makes every mass
//! matrix the identity.

use crate::error::{Error, Result};
use crate::fespace::quadrature::QuadratureRule;
use crate::geometry::Vec3;

/// Multi-indices of total degree <= p over `dim` axes, graded by degree and
/// lexicographic within a degree.
pub fn multi_indices(dim: usize, p: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=p {
        match dim {
            2 => {
                for a in (0..=total).rev() {
                    out.push([a, total - a, 0]);
                }
            }
            3 => {
                for a in (0..=total).rev() {
                    for b in (0..=(total - a)).rev() {
                        out.push([a, b, total - a - b]);
                    }
                }
            }
            _ => panic!("unsupported dimension {dim}"),
        }
    }
    out
}

/// dim P_p over `dim` variables: C(p + dim, dim).
pub fn n_modes(dim: usize, p: usize) -> usize {
    match dim {
        2 => (p + 1) * (p + 2) / 2,
        3 => (p + 1) * (p + 2) * (p + 3) / 6,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Basis function values and gradients at a single point.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec3>,
}

/// Orthonormalized modal basis of one element. `coeff[i]` expresses the i-th
/// basis function as a combination of scaled monomials.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    dim: usize,
    degree: usize,
    exponents: Vec<[usize; 3]>,
    center: Vec3,
    half: Vec3,
    coeff: Vec<Vec<f64>>,
}

impl ElementBasis {
    /// Orthonormalize the scaled monomials with respect to the discrete L2
    /// inner product carried by `rule`, which must be exact to degree `2p`.
    pub fn new(
        dim: usize,
        degree: usize,
        bbox: (Vec3, Vec3),
        rule: &QuadratureRule,
        element_index: usize,
    ) -> Result<Self> {
        let center = [
            0.5 * (bbox.0[0] + bbox.1[0]),
            0.5 * (bbox.0[1] + bbox.1[1]),
            0.5 * (bbox.0[2] + bbox.1[2]),
        ];
        let mut half = [
            0.5 * (bbox.1[0] - bbox.0[0]),
            0.5 * (bbox.1[1] - bbox.0[1]),
            0.5 * (bbox.1[2] - bbox.0[2]),
        ];
        for d in dim..3 {
            half[d] = 1.0;
        }
        for (d, h) in half.iter().enumerate().take(dim) {
            if *h <= 0.0 {
                return Err(Error::DegenerateElement {
                    element: element_index,
                    msg: format!("bounding box collapsed along axis {d}"),
                });
            }
        }
        let exponents = multi_indices(dim, degree);
        let n = exponents.len();
        let nq = rule.len();

        // Monomial samples at the quadrature points, one row per mode.
        let mut samples = vec![vec![0.0f64; nq]; n];
        for (q, &x) in rule.points.iter().enumerate() {
            let t = [
                (x[0] - center[0]) / half[0],
                (x[1] - center[1]) / half[1],
                (x[2] - center[2]) / half[2],
            ];
            for (m, e) in exponents.iter().enumerate() {
                samples[m][q] =
                    t[0].powi(e[0] as i32) * t[1].powi(e[1] as i32) * t[2].powi(e[2] as i32);
            }
        }

        let ip = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .zip(&rule.weights)
                .map(|((&x, &y), &w)| w * x * y)
                .sum()
        };

        // Modified Gram-Schmidt with one re-orthogonalization pass, tracking
        // the monomial coefficients alongside the sample vectors.
        let mut coeff: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            })
            .collect();
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = samples[i].clone();
            let norm0 = ip(&v, &v).sqrt();
            for _pass in 0..2 {
                for (j, phi) in ortho.iter().enumerate() {
                    let r = ip(&v, phi);
                    for (vq, pq) in v.iter_mut().zip(phi) {
                        *vq -= r * pq;
                    }
                    let (head, tail) = coeff.split_at_mut(i);
                    for (c, cj) in tail[0].iter_mut().zip(&head[j]) {
                        *c -= r * cj;
                    }
                }
            }
            let nrm = ip(&v, &v).sqrt();
            if !(nrm > 1e-12 * norm0.max(1e-300)) {
                return Err(Error::DegenerateElement {
                    element: element_index,
                    msg: format!("Gram matrix numerically singular at mode {i}"),
                });
            }
            for vq in &mut v {
                *vq /= nrm;
            }
            for c in &mut coeff[i] {
                *c /= nrm;
            }
            ortho.push(v);
        }

        Ok(ElementBasis {
            dim,
            degree,
            exponents,
            center,
            half,
            coeff,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Values of all basis functions at `x`.
    pub fn values(&self, x: Vec3) -> Vec<f64> {
        let mono = self.monomials(x);
        self.coeff
            .iter()
            .map(|row| row.iter().zip(&mono).map(|(c, m)| c * m).sum())
            .collect()
    }

    /// Values and gradients of all basis functions at `x`.
    pub fn eval(&self, x: Vec3) -> BasisEval {
        let n = self.n_modes();
        let (mono, grad) = self.monomials_with_grad(x);
        let mut values = vec![0.0; n];
        let mut gradients = vec![[0.0; 3]; n];
        for (i, row) in self.coeff.iter().enumerate() {
            let mut v = 0.0;
            let mut g = [0.0; 3];
            for (j, &c) in row.iter().enumerate() {
                v += c * mono[j];
                for d in 0..self.dim {
                    g[d] += c * grad[j][d];
                }
            }
            values[i] = v;
            gradients[i] = g;
        }
        BasisEval { values, gradients }
    }

    fn scaled(&self, x: Vec3) -> Vec3 {
        [
            (x[0] - self.center[0]) / self.half[0],
            (x[1] - self.center[1]) / self.half[1],
            (x[2] - self.center[2]) / self.half[2],
        ]
    }

    fn monomials(&self, x: Vec3) -> Vec<f64> {
        let t = self.scaled(x);
        let pow = powers(t, self.degree);
        self.exponents
            .iter()
            .map(|e| pow[0][e[0]] * pow[1][e[1]] * pow[2][e[2]])
            .collect()
    }

    fn monomials_with_grad(&self, x: Vec3) -> (Vec<f64>, Vec<Vec3>) {
        let t = self.scaled(x);
        let pow = powers(t, self.degree);
        let mut vals = Vec::with_capacity(self.exponents.len());
        let mut grads = Vec::with_capacity(self.exponents.len());
        for e in &self.exponents {
            vals.push(pow[0][e[0]] * pow[1][e[1]] * pow[2][e[2]]);
            let mut g = [0.0; 3];
            for d in 0..self.dim {
                if e[d] > 0 {
                    let mut dv = e[d] as f64 / self.half[d];
                    for (axis, pw) in pow.iter().enumerate() {
                        let exp = if axis == d { e[axis] - 1 } else { e[axis] };
                        dv *= pw[exp];
                    }
                    g[d] = dv;
                }
            }
            grads.push(g);
        }
        (vals, grads)
    }
}

fn powers(t: Vec3, p: usize) -> [Vec<f64>; 3] {
    let mut out = [vec![1.0; p + 1], vec![1.0; p + 1], vec![1.0; p + 1]];
    for d in 0..3 {
        for k in 1..=p {
            out[d][k] = out[d][k - 1] * t[d];
        }
    }
    out
}
