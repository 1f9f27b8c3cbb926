//! Discretized transition kernels on a grid over the box and the killed and
//! trace kernels derived from them.

mod cache;
mod grid;
mod trace;

pub(crate) use cache::content_hash;
pub use cache::{CacheMeta, KernelCache};
pub use grid::{Grid, GridPartition, IndexSet};
pub use trace::{invariant_measure, killed_kernel, trace_kernel};

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::DeterministicMapModel;
use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows, row_sums, Point};

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const DEGENERATE_MASS: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Stochastic,
    Substochastic,
}

impl KernelKind {
    fn name(self) -> &'static str {
        match self {
            KernelKind::Stochastic => "stochastic",
            KernelKind::Substochastic => "substochastic",
        }
    }
}

/// Dense nonnegative matrix over a set of grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    matrix: Mat<f64>,
    weight: f64,
    kind: KernelKind,
    domain: IndexSet,
}

impl KernelMatrix {
    /// Checks shape, nonnegativity and the row-sum condition of `kind`.
    pub fn new(matrix: Mat<f64>, weight: f64, kind: KernelKind, domain: IndexSet) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidKernel {
            kind: kind.name(),
            reason,
        };
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != domain.len() {
            return Err(invalid(format!(
                "{}x{} matrix over a domain of {} nodes",
                matrix.nrows(),
                matrix.ncols(),
                domain.len()
            )));
        }
        for j in 0..matrix.ncols() {
            for i in 0..matrix.nrows() {
                let v = matrix[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(format!("entry ({i},{j}) = {v}")));
                }
            }
        }
        for (i, s) in row_sums(&matrix).into_iter().enumerate() {
            let ok = match kind {
                KernelKind::Stochastic => (s - 1.0).abs() <= ROW_SUM_TOLERANCE,
                KernelKind::Substochastic => s <= 1.0 + ROW_SUM_TOLERANCE,
            };
            if !ok {
                return Err(invalid(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            matrix,
            weight,
            kind,
            domain,
        })
    }

    /// Stochastic kernel over states `0..n` with unit weight.
    pub fn stochastic(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            mat_from_rows(rows),
            1.0,
            KernelKind::Stochastic,
            IndexSet::range(rows.len()),
        )
    }

    /// Substochastic kernel over states `0..n` with unit weight.
    pub fn substochastic(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            mat_from_rows(rows),
            1.0,
            KernelKind::Substochastic,
            IndexSet::range(rows.len()),
        )
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.matrix
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn domain(&self) -> &IndexSet {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.matrix)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        row_sums(&self.matrix)
    }

    /// Submatrix on the given local row and column positions.
    pub(crate) fn block(&self, rows: &[usize], cols: &[usize]) -> Mat<f64> {
        Mat::from_fn(rows.len(), cols.len(), |i, j| {
            self.matrix[(rows[i], cols[j])]
        })
    }
}

/// I(x, y) = ½⟨y − Π(x), Σ⁻¹(y − Π(x))⟩.
pub fn gaussian_rate(model: &DeterministicMapModel, x: &Point, y: &Point) -> f64 {
    let px = model.image(x);
    0.5 * model
        .covariance()
        .inverse_quadratic_form(&[y[0] - px[0], y[1] - px[1]])
}

/// Midpoint quadrature of the Gaussian transition density on the grid, each
/// row normalized to a probability vector.
pub fn discretize_kernel(model: &DeterministicMapModel, grid: &Grid) -> Result<KernelMatrix> {
    let sigma = model.sigma();
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel discretization needs sigma > 0, got {sigma}"
        )));
    }
    if grid.dim() != model.dim() {
        return Err(Error::InvalidParameter(
            "grid and model dimensions differ".into(),
        ));
    }
    let d = model.dim() as i32;
    let s2 = sigma * sigma;
    let norm = (2.0 * std::f64::consts::PI * s2).powf(d as f64 / 2.0)
        * model.covariance().determinant().sqrt();
    let w = grid.weight();
    let points = grid.points();
    let n = points.len();
    let rows: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .enumerate()
        .map(|(row, x)| {
            let mut r: Vec<f64> = points
                .iter()
                .map(|y| (-gaussian_rate(model, x, y) / s2).exp() / norm * w)
                .collect();
            let mass: f64 = r.iter().sum();
            if !(mass >= DEGENERATE_MASS) {
                return Err(Error::DegenerateRow { row, mass });
            }
            r.iter_mut().for_each(|v| *v /= mass);
            Ok(r)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let matrix = Mat::from_fn(n, n, |i, j| rows[i][j]);
    KernelMatrix::new(matrix, w, KernelKind::Stochastic, IndexSet::range(n))
}
