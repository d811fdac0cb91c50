//! Small fixed-size vector and tensor helpers.
//!
//! Points and vectors are plain `[f64; 3]`; 2D meshes leave the third
//! component at zero. Tensors are row-major `[[f64; 3]; 3]`.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO_VEC: Vec3 = [0.0; 3];
pub const ZERO_MAT: Mat3 = [[0.0; 3]; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

pub fn identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                out[i][j] += a[i][k] * bk[j];
            }
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = ZERO_MAT;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
    let mut out = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i] * b[j];
        }
    }
    out
}

pub fn mat_add(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub fn mat_scale(m: &Mat3, s: f64) -> Mat3 {
    let mut out = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[i][j] * s;
        }
    }
    out
}

/// Frobenius double contraction `a : b`.
pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn trace(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

/// Determinant of the leading `dim`-by-`dim` block.
pub fn det(m: &Mat3, dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Inverse of the leading `dim`-by-`dim` block via cofactors. The trailing
/// diagonal is padded with ones so the result stays usable as a 3x3 map.
pub fn inverse(m: &Mat3, dim: usize) -> Option<Mat3> {
    let d = det(m, dim);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = identity();
    match dim {
        2 => {
            out[0][0] = m[1][1] / d;
            out[0][1] = -m[0][1] / d;
            out[1][0] = -m[1][0] / d;
            out[1][1] = m[0][0] / d;
        }
        3 => {
            out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
            out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
            out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
            out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
            out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
            out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
            out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
            out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
            out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        }
        _ => return None,
    }
    Some(out)
}

/// Symmetric part `(m + m^T) / 2`.
pub fn sym(m: &Mat3) -> Mat3 {
    let mut out = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
    out
}

/// Largest eigenvalue of the leading `dim` block of a symmetric matrix.
pub fn largest_eigenvalue_sym(m: &Mat3, dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => {
            let tr = m[0][0] + m[1][1];
            let dt = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr / 4.0 - dt).max(0.0).sqrt();
            tr / 2.0 + disc
        }
        3 => {
            let a = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
            let eig = nalgebra::SymmetricEigen::new(a);
            eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip_3d() {
        let m = [[2.0, 1.0, 0.0], [0.5, 3.0, 0.2], [0.0, 0.1, 1.5]];
        let inv = inverse(&m, 3).unwrap();
        let prod = mat_mul(&m, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i][j] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn largest_eigenvalue_diag() {
        let m = [[88.0, 0.0, 0.0], [0.0, 8.0, 0.0], [0.0, 0.0, 8.0]];
        assert!((largest_eigenvalue_sym(&m, 3) - 88.0).abs() < 1e-10);
        let m2 = [[3.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.0, 0.0]];
        assert!((largest_eigenvalue_sym(&m2, 2) - 4.0).abs() < 1e-12);
    }
}
