//! Deterministic maps Π, their fixed points, and the metastable balls Bᵢ.
//!
//! A [`DeterministicMapModel`] bundles the map with the invariant box X, the
//! noise covariance Σ and the noise level σ. The random dynamics it describes
//! is `X_{n+1} = Π(X_n) + σ ξ_{n+1}` with centred Gaussian ξ of covariance Σ.

mod balls;
mod drift;
mod fixed_points;
mod maps;

pub use balls::{build_metastable_structure, Ball, MetastableStructure};
pub use drift::{check_lyapunov_drift, drift_at, DriftReport};
pub use fixed_points::{
    classify_stability, find_fixed_points, FixedPointRecord, FixedPointSet, Stability,
};
pub use maps::{MapSpec, Monomial};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Covariance, Mat2, Point, MAX_DIM};

/// Relative tolerance for the analytic Jacobian against central differences.
pub const JACOBIAN_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicMapModel {
    map: MapSpec,
    bounds: Vec<[f64; 2]>,
    covariance: Covariance,
    sigma: f64,
}

impl DeterministicMapModel {
    /// `bounds[k] = [lo, hi]` for each axis. `sigma` may be zero for purely
    /// deterministic runs; every kernel construction requires it positive.
    pub fn new(
        map: MapSpec,
        bounds: Vec<[f64; 2]>,
        covariance: Covariance,
        sigma: f64,
    ) -> Result<Self> {
        let dim = map.dim()?;
        if bounds.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "map has dimension {dim} but {} box intervals were given",
                bounds.len()
            )));
        }
        if covariance.dim() != dim {
            return Err(Error::InvalidParameter(format!(
                "covariance has dimension {} but the map has dimension {dim}",
                covariance.dim()
            )));
        }
        for [lo, hi] in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "invalid box interval [{lo}, {hi}]"
                )));
            }
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            map,
            bounds,
            covariance,
            sigma,
        })
    }

    /// The scalar double well Π(x) = tanh(βx) with unit covariance.
    pub fn tanh(beta: f64, bounds: [f64; 2], sigma: f64) -> Result<Self> {
        Self::new(
            MapSpec::Tanh { beta },
            vec![bounds],
            Covariance::identity(1),
            sigma,
        )
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(
            self.map.clone(),
            self.bounds.clone(),
            self.covariance.clone(),
            sigma,
        )
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn image(&self, x: &Point) -> Point {
        self.map.eval(x, self.dim())
    }

    pub fn jacobian(&self, x: &Point) -> Mat2 {
        self.map.jacobian(x, self.dim())
    }

    /// Euclidean diameter of the box X.
    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|[lo, hi]| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn in_box(&self, x: &Point) -> bool {
        self.in_box_with_slack(x, 0.0)
    }

    pub(crate) fn in_box_with_slack(&self, x: &Point, slack: f64) -> bool {
        self.bounds
            .iter()
            .enumerate()
            .all(|(k, [lo, hi])| x[k] >= lo - slack && x[k] <= hi + slack)
    }

    /// Sampled checks of positive invariance of X on a lattice with
    /// `nodes_per_axis` points per axis, and of the analytic Jacobian
    /// against central finite differences at `n_random` random points.
    pub fn validate(&self, nodes_per_axis: usize, n_random: usize, seed: u64) -> Result<()> {
        let dim = self.dim();
        let slack = 1e-12 * self.diameter();
        for x in lattice(&self.bounds, nodes_per_axis) {
            let y = self.image(&x);
            if !self.in_box_with_slack(&y, slack) {
                return Err(Error::NotInvariant {
                    point: x[..dim].to_vec(),
                    image: y[..dim].to_vec(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_random {
            let mut x = [0.0; MAX_DIM];
            for (k, [lo, hi]) in self.bounds.iter().enumerate() {
                x[k] = rng.random_range(*lo..*hi);
            }
            let error = self.jacobian_error(&x);
            if error > JACOBIAN_TOLERANCE {
                return Err(Error::JacobianMismatch {
                    point: x[..dim].to_vec(),
                    error,
                });
            }
        }
        Ok(())
    }

    /// Largest entrywise deviation of the analytic Jacobian from central
    /// differences, relative to max(1, max |J|).
    pub fn jacobian_error(&self, x: &Point) -> f64 {
        let dim = self.dim();
        let j = self.jacobian(x);
        let fd = self.finite_difference_jacobian(x);
        let scale = (0..dim)
            .flat_map(|a| (0..dim).map(move |b| (a, b)))
            .map(|(a, b)| j[a][b].abs())
            .fold(1.0, f64::max);
        (0..dim)
            .flat_map(|a| (0..dim).map(move |b| (a, b)))
            .map(|(a, b)| (j[a][b] - fd[a][b]).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn finite_difference_jacobian(&self, x: &Point) -> Mat2 {
        let dim = self.dim();
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        for b in 0..dim {
            let h = 1e-6 * x[b].abs().max(1.0);
            let mut xp = *x;
            let mut xm = *x;
            xp[b] += h;
            xm[b] -= h;
            let fp = self.image(&xp);
            let fm = self.image(&xm);
            for a in 0..dim {
                out[a][b] = (fp[a] - fm[a]) / (2.0 * h);
            }
        }
        out
    }
}

/// Uniform lattice over a box, first axis fastest.
pub(crate) fn lattice(bounds: &[[f64; 2]], per_axis: usize) -> Vec<Point> {
    let dim = bounds.len();
    let per_axis = per_axis.max(2);
    let coord = |k: usize, i: usize| {
        let [lo, hi] = bounds[k];
        lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
    };
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = [0.0; MAX_DIM];
            for (k, c) in p.iter_mut().enumerate().take(dim) {
                *c = coord(k, idx % per_axis);
                idx /= per_axis;
            }
            p
        })
        .collect()
}
