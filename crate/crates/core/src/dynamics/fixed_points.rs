use rayon::prelude::*;
use serde::Serialize;

use super::{lattice, DeterministicMapModel};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq, spectral_radius_2x2, Mat2, Point};

const MARGINAL_BAND: f64 = 1e-6;
const RESIDUAL_TOLERANCE: f64 = 1e-10;
const DEDUP_RADIUS: f64 = 1e-6;
const NEWTON_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointRecord {
    pub location: Vec<f64>,
    pub spectral_radius: f64,
    pub stability: Stability,
    /// Position among the stable points, in lexicographic order of
    /// coordinates. `None` for unstable points.
    pub index: Option<usize>,
    pub residual: f64,
}

impl FixedPointRecord {
    pub fn point(&self) -> Point {
        let mut p = [0.0; 2];
        p[..self.location.len()].copy_from_slice(&self.location);
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointSet {
    /// All fixed points in lexicographic order.
    pub records: Vec<FixedPointRecord>,
    /// Set when only one stable point exists; there is no metastability to
    /// reduce in that case.
    pub single_well: bool,
}

impl FixedPointSet {
    pub fn n_stable(&self) -> usize {
        self.records.iter().filter(|r| r.index.is_some()).count()
    }

    /// Stable points ordered by index.
    pub fn stable(&self) -> impl Iterator<Item = &FixedPointRecord> {
        self.records.iter().filter(|r| r.index.is_some())
    }

    pub fn unstable(&self) -> impl Iterator<Item = &FixedPointRecord> {
        self.records
            .iter()
            .filter(|r| r.stability == Stability::Unstable)
    }
}

/// Spectral radius of the leading `dim x dim` block and its stability tag.
pub fn classify_stability(jacobian: &Mat2, dim: usize) -> (f64, Stability) {
    let rho = spectral_radius_2x2(jacobian, dim);
    let tag = if rho < 1.0 - MARGINAL_BAND {
        Stability::Stable
    } else if rho > 1.0 + MARGINAL_BAND {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    (rho, tag)
}

/// Newton search for zeros of Π(x) − x started from a lattice of
/// `seeds_per_axis` points per axis over the box.
pub fn find_fixed_points(
    model: &DeterministicMapModel,
    seeds_per_axis: usize,
) -> Result<FixedPointSet> {
    if seeds_per_axis < 8 {
        return Err(Error::InvalidParameter(format!(
            "seeds_per_axis must be at least 8, got {seeds_per_axis}"
        )));
    }
    let dim = model.dim();
    let diam = model.diameter();
    let seeds = lattice(model.bounds(), seeds_per_axis);
    let mut found: Vec<Point> = seeds
        .par_iter()
        .filter_map(|s| newton(model, *s))
        .filter(|p| model.in_box_with_slack(p, 1e-9 * diam))
        .collect();
    found.sort_by(|a, b| lexicographic(a, b, dim));

    let radius_sq = (DEDUP_RADIUS * diam).powi(2);
    let mut unique: Vec<Point> = Vec::new();
    for p in found {
        if !unique.iter().any(|q| dist_sq(&p, q, dim) <= radius_sq) {
            unique.push(p);
        }
    }

    let mut records = Vec::with_capacity(unique.len());
    let mut next_index = 0;
    for p in unique {
        let p = polish(model, p);
        let residual = residual_norm(model, &p);
        if residual > RESIDUAL_TOLERANCE * diam {
            continue;
        }
        let (spectral_radius, stability) = classify_stability(&model.jacobian(&p), dim);
        if stability == Stability::Marginal {
            return Err(Error::MarginalFixedPoint {
                point: p[..dim].to_vec(),
                spectral_radius,
            });
        }
        let index = (stability == Stability::Stable).then(|| {
            next_index += 1;
            next_index - 1
        });
        records.push(FixedPointRecord {
            location: p[..dim].to_vec(),
            spectral_radius,
            stability,
            index,
            residual,
        });
    }
    if next_index == 0 {
        return Err(Error::NoStableFixedPoint);
    }
    if next_index == 1 {
        log::warn!("only one stable fixed point: the chain has a single well");
    }
    Ok(FixedPointSet {
        records,
        single_well: next_index == 1,
    })
}

fn lexicographic(a: &Point, b: &Point, dim: usize) -> std::cmp::Ordering {
    (0..dim)
        .map(|k| a[k].total_cmp(&b[k]))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn residual(model: &DeterministicMapModel, x: &Point) -> Point {
    let y = model.image(x);
    [y[0] - x[0], y[1] - x[1]]
}

fn residual_norm(model: &DeterministicMapModel, x: &Point) -> f64 {
    norm_sq(&residual(model, x), model.dim()).sqrt()
}

/// Solves (J − I) Δ = −F for the Newton step.
fn newton_step(model: &DeterministicMapModel, x: &Point) -> Option<Point> {
    let f = residual(model, x);
    let mut j = model.jacobian(x);
    j[0][0] -= 1.0;
    j[1][1] -= 1.0;
    if model.dim() == 1 {
        (j[0][0].abs() > 1e-14).then(|| [-f[0] / j[0][0], 0.0])
    } else {
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        (det.abs() > 1e-14).then(|| {
            [
                -(j[1][1] * f[0] - j[0][1] * f[1]) / det,
                -(-j[1][0] * f[0] + j[0][0] * f[1]) / det,
            ]
        })
    }
}

fn newton(model: &DeterministicMapModel, mut x: Point) -> Option<Point> {
    let diam = model.diameter();
    let target = 1e-13 * diam;
    let mut r = residual_norm(model, &x);
    for _ in 0..NEWTON_ITERATIONS {
        if r <= target {
            return Some(x);
        }
        let step = newton_step(model, &x)?;
        let mut t = 1.0;
        loop {
            let trial = [x[0] + t * step[0], x[1] + t * step[1]];
            let rt = residual_norm(model, &trial);
            if rt < r || t < 1e-6 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
        if !model.in_box_with_slack(&x, 0.5 * diam) {
            return None;
        }
    }
    (r <= RESIDUAL_TOLERANCE * diam).then_some(x)
}

fn polish(model: &DeterministicMapModel, mut x: Point) -> Point {
    for _ in 0..3 {
        let Some(step) = newton_step(model, &x) else {
            break;
        };
        let trial = [x[0] + step[0], x[1] + step[1]];
        if residual_norm(model, &trial) <= residual_norm(model, &x) {
            x = trial;
        } else {
            break;
        }
    }
    x
}
