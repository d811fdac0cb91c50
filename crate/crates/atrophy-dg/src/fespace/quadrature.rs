//! Quadrature on segments, triangles, tetrahedra, and star-shaped polygons.
//!
//! Simplex rules are built by collapsing tensor-product Gauss-Legendre grids
//! onto the simplex (Duffy map); all weights stay positive. Polygons are
//! integrated by fanning triangles from the centroid.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use crate::error::{Error, Result};
use crate::geometry::{add, cross, norm, scale, sub, Vec3};

/// Highest polynomial order any rule factory will accept.
pub const MAX_ORDER: usize = 40;

/// Points and measure-weighted weights; `sum(weights)` equals the measure of
/// the integration domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(Vec3) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::QuadratureOrder {
            requested: order,
            max: MAX_ORDER,
        });
    }
    Ok(())
}

/// Gauss-Legendre nodes/weights on [0, 1]; an `n`-point rule is exact for
/// polynomials of degree `2n - 1`. Computed by Newton iteration on the
/// Legendre recurrence and cached.
pub fn gauss_legendre_01(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: LazyLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> =
        LazyLock::new(|| Mutex::new(HashMap::new()));
    let mut cache = CACHE.lock().unwrap();
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(compute_gauss_legendre_01(n)))
        .clone()
}

fn compute_gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] -> [0, 1].
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Legendre polynomial value and derivative at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Rule on the segment `[a, b]`, exact for polynomials of degree `order`.
pub fn segment_rule(a: Vec3, b: Vec3, order: usize) -> Result<QuadratureRule> {
    check_order(order)?;
    let n = order / 2 + 1;
    let gl = gauss_legendre_01(n);
    let len = norm(sub(b, a));
    let points = gl.0.iter().map(|&t| add(a, scale(sub(b, a), t))).collect();
    let weights = gl.1.iter().map(|&w| w * len).collect();
    Ok(QuadratureRule { points, weights })
}

/// Rule on the triangle `(a, b, c)`, exact for polynomials of degree `order`.
///
/// Uses the Duffy collapse `s = u, t = v(1-u)` of a tensor GL grid; the
/// Jacobian raises the u-degree by one, hence `2n - 1 >= order + 1`.
pub fn triangle_rule(a: Vec3, b: Vec3, c: Vec3, order: usize) -> Result<QuadratureRule> {
    check_order(order)?;
    let n = (order + 3) / 2;
    let gl = gauss_legendre_01(n);
    let area2 = triangle_area2(a, b, c);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (i, &u) in gl.0.iter().enumerate() {
        for (j, &v) in gl.0.iter().enumerate() {
            let s = u;
            let t = v * (1.0 - u);
            let x = add(a, add(scale(sub(b, a), s), scale(sub(c, a), t)));
            points.push(x);
            weights.push(gl.1[i] * gl.1[j] * (1.0 - u) * area2);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Rule on the tetrahedron `(a, b, c, d)`, exact for degree `order`.
pub fn tetrahedron_rule(a: Vec3, b: Vec3, c: Vec3, d: Vec3, order: usize) -> Result<QuadratureRule> {
    check_order(order)?;
    let n = (order + 4) / 2;
    let gl = gauss_legendre_01(n);
    let vol6 = tet_volume6(a, b, c, d).abs();
    let m = n * n * n;
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (i, &u) in gl.0.iter().enumerate() {
        for (j, &v) in gl.0.iter().enumerate() {
            for (k, &w) in gl.0.iter().enumerate() {
                let s = u;
                let t = v * (1.0 - u);
                let r = w * (1.0 - u) * (1.0 - v);
                let x = add(
                    a,
                    add(
                        scale(sub(b, a), s),
                        add(scale(sub(c, a), t), scale(sub(d, a), r)),
                    ),
                );
                points.push(x);
                let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                weights.push(gl.1[i] * gl.1[j] * gl.1[k] * jac * vol6);
            }
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Fan rule on a star-shaped polygon: one triangle rule per edge, apexed at
/// `center`. `poly` lists the boundary vertices in order.
pub fn polygon_fan_rule(poly: &[Vec3], center: Vec3, order: usize) -> Result<QuadratureRule> {
    check_order(order)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let tri = triangle_rule(center, poly[i], poly[(i + 1) % n], order)?;
        points.extend(tri.points);
        weights.extend(tri.weights);
    }
    Ok(QuadratureRule { points, weights })
}

/// Twice the (unsigned) area of a triangle embedded in 2D or 3D.
pub fn triangle_area2(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    norm(cross(sub(b, a), sub(c, a)))
}

/// Six times the signed volume of a tetrahedron.
pub fn tet_volume6(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    crate::geometry::dot(cross(sub(b, a), sub(c, a)), sub(d, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORIGIN: Vec3 = [0.0, 0.0, 0.0];

    #[test]
    fn gauss_legendre_integrates_monomials() {
        // n-point rule must integrate t^k on [0,1] to 1/(k+1) for k <= 2n-1.
        for n in 1..=16 {
            let gl = gauss_legendre_01(n);
            for k in 0..=(2 * n - 1) {
                let val: f64 = gl
                    .0
                    .iter()
                    .zip(gl.1.iter())
                    .map(|(&x, &w)| w * x.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (val - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "n={n} k={k}: {val} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn segment_x_squared() {
        let rule = segment_rule(ORIGIN, [1.0, 0.0, 0.0], 3).unwrap();
        let val = rule.integrate(|x| x[0] * x[0]);
        assert!((val - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn unit_triangle_moments() {
        let b = [1.0, 0.0, 0.0];
        let c = [0.0, 1.0, 0.0];
        let rule = triangle_rule(ORIGIN, b, c, 2).unwrap();
        assert!((rule.total_weight() - 0.5).abs() < 1e-14);
        // integral of x + y over the unit triangle = 1/3.
        let val = rule.integrate(|x| x[0] + x[1]);
        assert!((val - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_exactness_sweep() {
        // Integrate x^a y^b on the unit triangle against the closed form
        // a! b! / (a + b + 2)!.
        fn factorial(n: usize) -> f64 {
            (1..=n).map(|v| v as f64).product()
        }
        let b = [1.0, 0.0, 0.0];
        let c = [0.0, 1.0, 0.0];
        for order in 1..=10 {
            let rule = triangle_rule(ORIGIN, b, c, order).unwrap();
            for a in 0..=order {
                for bb in 0..=(order - a) {
                    let val = rule.integrate(|x| x[0].powi(a as i32) * x[1].powi(bb as i32));
                    let exact = factorial(a) * factorial(bb) / factorial(a + bb + 2);
                    assert!(
                        (val - exact).abs() <= 1e-12 * exact.max(1.0),
                        "order={order} a={a} b={bb}"
                    );
                }
            }
        }
    }

    #[test]
    fn tetrahedron_exactness_sweep() {
        fn factorial(n: usize) -> f64 {
            (1..=n).map(|v| v as f64).product()
        }
        let b = [1.0, 0.0, 0.0];
        let c = [0.0, 1.0, 0.0];
        let d = [0.0, 0.0, 1.0];
        for order in 1..=7 {
            let rule = tetrahedron_rule(ORIGIN, b, c, d, order).unwrap();
            for a in 0..=order {
                for bb in 0..=(order - a) {
                    for cc in 0..=(order - a - bb) {
                        let val = rule.integrate(|x| {
                            x[0].powi(a as i32) * x[1].powi(bb as i32) * x[2].powi(cc as i32)
                        });
                        let exact =
                            factorial(a) * factorial(bb) * factorial(cc) / factorial(a + bb + cc + 3);
                        assert!(
                            (val - exact).abs() <= 1e-12 * exact.max(1.0),
                            "order={order} ({a},{bb},{cc}): {val} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn regular_pentagon_area() {
        // radius-1 regular pentagon: area = (5/2) sin(72 deg).
        let n = 5;
        let poly: Vec<Vec3> = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect();
        let rule = polygon_fan_rule(&poly, ORIGIN, 2).unwrap();
        let exact = 2.5 * (72f64).to_radians().sin();
        assert!((rule.total_weight() - exact).abs() < 1e-13);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn order_beyond_max_rejected() {
        let err = segment_rule(ORIGIN, [1.0, 0.0, 0.0], MAX_ORDER + 1);
        assert!(matches!(err, Err(Error::QuadratureOrder { .. })));
    }
}
