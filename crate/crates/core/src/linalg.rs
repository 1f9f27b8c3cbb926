//! Small fixed-size linear algebra (points, 2x2 matrices, noise covariance)
//! and thin helpers over `faer` dense matrices.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest state-space dimension supported.
pub const MAX_DIM: usize = 2;

/// A point of the state space. In one dimension the second coordinate is
/// unused and kept at zero.
pub type Point = [f64; MAX_DIM];

/// A 2x2 matrix in row-major order; the 1D case uses the top-left entry.
pub type Mat2 = [[f64; MAX_DIM]; MAX_DIM];

pub(crate) fn norm_sq(v: &Point, dim: usize) -> f64 {
    v[..dim].iter().map(|c| c * c).sum()
}

pub(crate) fn dist_sq(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Eigenvalues of the leading `dim x dim` block, as (re, im) pairs.
pub fn eigenvalues_2x2(m: &Mat2, dim: usize) -> [(f64, f64); 2] {
    if dim == 1 {
        return [(m[0][0], 0.0), (0.0, 0.0)];
    }
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(half + s, 0.0), (half - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(half, s), (half, -s)]
    }
}

/// Spectral radius of the leading `dim x dim` block.
pub fn spectral_radius_2x2(m: &Mat2, dim: usize) -> f64 {
    eigenvalues_2x2(m, dim)[..dim]
        .iter()
        .map(|(re, im)| re.hypot(*im))
        .fold(0.0, f64::max)
}

/// Noise covariance Σ with its inverse and Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Covariance {
    dim: usize,
    matrix: Mat2,
    inverse: Mat2,
    cholesky: Mat2,
    det: f64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

impl Covariance {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DIM || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter(format!(
                "covariance must be a square matrix of size 1 or 2, got {rows:?}"
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "covariance has non-finite entries".into(),
            ));
        }
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                m[i][j] = *v;
            }
        }
        if dim == 2 && (m[0][1] - m[1][0]).abs() > 1e-14 * (m[0][1].abs() + m[1][0].abs() + 1.0) {
            return Err(Error::SingularCovariance);
        }
        let eig = eigenvalues_2x2(&m, dim);
        let (lo, hi) = if dim == 1 {
            (eig[0].0, eig[0].0)
        } else {
            (eig[1].0, eig[0].0)
        };
        if lo <= 0.0 || !lo.is_finite() {
            return Err(Error::SingularCovariance);
        }
        let (inverse, cholesky, det) = if dim == 1 {
            (
                [[1.0 / m[0][0], 0.0], [0.0, 0.0]],
                [[m[0][0].sqrt(), 0.0], [0.0, 0.0]],
                m[0][0],
            )
        } else {
            let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
            let inv = [
                [m[1][1] / det, -m[0][1] / det],
                [-m[0][1] / det, m[0][0] / det],
            ];
            let l00 = m[0][0].sqrt();
            let l10 = m[0][1] / l00;
            let l11 = (m[1][1] - l10 * l10).sqrt();
            (inv, [[l00, 0.0], [l10, l11]], det)
        };
        Ok(Self {
            dim,
            matrix: m,
            inverse,
            cholesky,
            det,
            min_eigenvalue: lo,
            max_eigenvalue: hi,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(&rows).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|k| self.matrix[k][k]).sum()
    }

    /// Eigenvalue bounds (c₋, c₊).
    pub fn eigenvalue_bounds(&self) -> (f64, f64) {
        (self.min_eigenvalue, self.max_eigenvalue)
    }

    /// Operator norm of Σ⁻¹.
    pub fn inverse_norm(&self) -> f64 {
        1.0 / self.min_eigenvalue
    }

    /// ⟨v, Σ⁻¹ v⟩
    pub fn inverse_quadratic_form(&self, v: &Point) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += v[i] * self.inverse[i][j] * v[j];
            }
        }
        acc
    }

    /// Maps a standard normal vector to one with covariance Σ.
    pub fn correlate(&self, z: &Point) -> Point {
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.dim {
            for j in 0..=i {
                out[i] += self.cholesky[i][j] * z[j];
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.matrix[i][..self.dim].to_vec())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Covariance {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Covariance::new(&rows)
    }
}

impl From<Covariance> for Vec<Vec<f64>> {
    fn from(c: Covariance) -> Self {
        c.rows()
    }
}

/// Dense matrix from nested rows.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn mat_to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Maximum absolute row sum, the natural norm for kernels acting on bounded
/// functions.
pub fn kernel_norm(m: &Mat<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Row vector times matrix.
pub fn vec_mat(v: &[f64], m: &Mat<f64>) -> Vec<f64> {
    assert_eq!(v.len(), m.nrows());
    (0..m.ncols())
        .map(|j| v.iter().enumerate().map(|(i, vi)| vi * m[(i, j)]).sum())
        .collect()
}

/// Matrix times column vector.
pub fn mat_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), m.ncols());
    (0..m.nrows())
        .map(|i| v.iter().enumerate().map(|(j, vj)| m[(i, j)] * vj).sum())
        .collect()
}

pub fn row_sums(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).sum())
        .collect()
}

/// `m^power` by repeated squaring. With `renormalize` every intermediate
/// product has its rows rescaled to their pre-multiplication sums, which keeps
/// long powers of stochastic matrices from drifting.
pub fn matrix_power(m: &Mat<f64>, mut power: u64, renormalize: bool) -> Mat<f64> {
    assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    let mut result = Mat::<f64>::identity(n, n);
    let mut base = m.clone();
    let fix = |x: &mut Mat<f64>| {
        if renormalize {
            for i in 0..n {
                let s: f64 = (0..n).map(|j| x[(i, j)]).sum();
                if s > 0.0 {
                    for j in 0..n {
                        x[(i, j)] /= s;
                    }
                }
            }
        }
    };
    while power > 0 {
        if power & 1 == 1 {
            result = &result * &base;
            fix(&mut result);
        }
        power >>= 1;
        if power > 0 {
            base = &base * &base;
            fix(&mut base);
        }
    }
    result
}
