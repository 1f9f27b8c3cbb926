use serde::Serialize;

use super::{DeterministicMapModel, FixedPointSet};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, Point};

/// Closed Euclidean ball around a stable fixed point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub index: usize,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn center_point(&self) -> Point {
        let mut p = [0.0; 2];
        p[..self.center.len()].copy_from_slice(&self.center);
        p
    }

    /// Closed-ball membership; boundary points count as inside.
    pub fn contains(&self, x: &Point) -> bool {
        dist_sq(x, &self.center_point(), self.center.len()) <= self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetastableStructure {
    pub balls: Vec<Ball>,
    pub requested_delta: f64,
}

impl MetastableStructure {
    pub fn n_balls(&self) -> usize {
        self.balls.len()
    }

    /// Index of the ball containing `x`, if any.
    pub fn ball_containing(&self, x: &Point) -> Option<usize> {
        self.balls.iter().position(|b| b.contains(x))
    }

    pub fn in_metastable_set(&self, x: &Point) -> bool {
        self.ball_containing(x).is_some()
    }
}

/// Balls of radius `delta` around every stable fixed point, halved per ball
/// until they are pairwise disjoint and pass a sampled Π(Bᵢ) ⊂ Bᵢ check.
pub fn build_metastable_structure(
    model: &DeterministicMapModel,
    fixed_points: &FixedPointSet,
    delta: f64,
) -> Result<MetastableStructure> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let dim = model.dim();
    let floor = 1e-3 * model.diameter();
    let centers: Vec<Point> = fixed_points.stable().map(|r| r.point()).collect();
    if centers.is_empty() {
        return Err(Error::NoStableFixedPoint);
    }
    let mut balls = Vec::with_capacity(centers.len());
    for (index, c) in centers.iter().enumerate() {
        let gap = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != index)
            .map(|(_, o)| dist_sq(c, o, dim).sqrt())
            .fold(f64::INFINITY, f64::min);
        let mut radius = delta;
        while 2.0 * radius >= gap || !maps_into_itself(model, c, radius) {
            radius *= 0.5;
            if radius < floor {
                return Err(Error::BallConstructionFailed { index, radius });
            }
        }
        if radius < delta {
            log::info!("ball {index} shrunk from {delta} to {radius}");
        }
        balls.push(Ball {
            index,
            center: c[..dim].to_vec(),
            radius,
        });
    }
    Ok(MetastableStructure {
        balls,
        requested_delta: delta,
    })
}

/// Sampled check on concentric shells (including the boundary) and the
/// center.
fn maps_into_itself(model: &DeterministicMapModel, c: &Point, r: f64) -> bool {
    let dim = model.dim();
    let r2 = r * r * (1.0 + 1e-12);
    let inside = |x: &Point| dist_sq(&model.image(x), c, dim) <= r2;
    let shells = 10;
    for s in 0..=shells {
        let rs = r * s as f64 / shells as f64;
        if dim == 1 {
            if !inside(&[c[0] + rs, 0.0]) || !inside(&[c[0] - rs, 0.0]) {
                return false;
            }
        } else {
            let n_angles = 64;
            for a in 0..n_angles {
                let t = std::f64::consts::TAU * a as f64 / n_angles as f64;
                if !inside(&[c[0] + rs * t.cos(), c[1] + rs * t.sin()]) {
                    return false;
                }
            }
        }
    }
    true
}
