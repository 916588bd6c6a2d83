//! Fixed-size helpers for the small (dimension <= 3) matrices that appear at
//! every grid node. Matrices are stored as `[[f64; 3]; 3]` with only the
//! leading `dim x dim` block meaningful.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

pub const MAX_DIM: usize = 3;

pub type Mat = [[f64; MAX_DIM]; MAX_DIM];
pub type Vec3 = [f64; MAX_DIM];

pub fn identity(dim: usize) -> Mat {
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in m.iter_mut().enumerate().take(dim) {
        row[i] = 1.0;
    }
    m
}

pub fn det(dim: usize, m: &Mat) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("dimension {dim} unsupported"),
    }
}

/// Inverse by adjugate; `None` when the determinant is not positive-finite
/// relative to the matrix scale.
pub fn inverse(dim: usize, m: &Mat) -> Option<(Mat, f64)> {
    let d = det(dim, m);
    if !d.is_finite() || d == 0.0 {
        return None;
    }
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    match dim {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
            inv[1][1] = m[0][0] / d;
        }
        3 => {
            inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
            inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
            inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
            inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        }
        _ => unreachable!("dimension {dim} unsupported"),
    }
    Some((inv, d))
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
pub fn cholesky(dim: usize, m: &Mat) -> Option<Mat> {
    let mut l = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn forward_solve(dim: usize, l: &Mat, b: &Vec3) -> Vec3 {
    let mut x = [0.0; MAX_DIM];
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn backward_solve_t(dim: usize, l: &Mat, b: &Vec3) -> Vec3 {
    let mut x = [0.0; MAX_DIM];
    for i in (0..dim).rev() {
        let mut s = b[i];
        for k in i + 1..dim {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues and the
/// matching eigenvectors (as rows of the second component), unsorted.
pub fn sym_eigen(dim: usize, m: &Mat) -> (Vec3, Mat) {
    let mut values = [0.0; MAX_DIM];
    let mut vectors = [[0.0; MAX_DIM]; MAX_DIM];
    match dim {
        1 => {
            values[0] = m[0][0];
            vectors[0][0] = 1.0;
        }
        2 => {
            let a = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
            let e = SymmetricEigen::new(a);
            for k in 0..2 {
                values[k] = e.eigenvalues[k];
                for i in 0..2 {
                    vectors[k][i] = e.eigenvectors[(i, k)];
                }
            }
        }
        3 => {
            let a = Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            );
            let e = SymmetricEigen::new(a);
            for k in 0..3 {
                values[k] = e.eigenvalues[k];
                for i in 0..3 {
                    vectors[k][i] = e.eigenvectors[(i, k)];
                }
            }
        }
        _ => unreachable!("dimension {dim} unsupported"),
    }
    (values, vectors)
}

pub fn max_sym_eigenvalue(dim: usize, m: &Mat) -> f64 {
    match dim {
        1 => m[0][0],
        2 => {
            let tr = 0.5 * (m[0][0] + m[1][1]);
            let d = 0.5 * (m[0][0] - m[1][1]);
            tr + (d * d + m[0][1] * m[1][0]).max(0.0).sqrt()
        }
        _ => {
            let (v, _) = sym_eigen(dim, m);
            v[..dim].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

pub fn dot(dim: usize, a: &Vec3, b: &Vec3) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

pub fn quad(dim: usize, m: &Mat, a: &Vec3, b: &Vec3) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += a[i] * m[i][j] * b[j];
        }
    }
    s
}

pub fn mat_vec(dim: usize, m: &Mat, v: &Vec3) -> Vec3 {
    let mut out = [0.0; MAX_DIM];
    for i in 0..dim {
        out[i] = (0..dim).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: &Vec3) -> f64 {
    dot(3, a, a).sqrt()
}
