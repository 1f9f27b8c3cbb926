use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Point, MAX_DIM};

/// Built-in deterministic maps, selected by `kind` in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    /// Π(x) = tanh(βx).
    Tanh { beta: f64 },
    /// Π(x) = a·x − b·x³.
    Cubic { a: f64, b: f64 },
    /// Π(x, y) = (f(x), g(y)) for two one-dimensional maps.
    Product { x: Box<MapSpec>, y: Box<MapSpec> },
    /// Π(x, y) = (tanh(βx + κy), tanh(βy + κx)).
    Coupled { beta: f64, coupling: f64 },
    /// One polynomial per output axis, each a sum of monomials in the
    /// state coordinates.
    Polynomial { axes: Vec<Vec<Monomial>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    /// One exponent per state coordinate.
    pub powers: Vec<u32>,
}

impl MapSpec {
    /// One-dimensional polynomial Σₖ cₖ xᵏ.
    pub fn univariate(coefficients: &[f64]) -> Self {
        MapSpec::Polynomial {
            axes: vec![coefficients
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(k, c)| Monomial {
                    coef: *c,
                    powers: vec![k as u32],
                })
                .collect()],
        }
    }

    pub fn dim(&self) -> Result<usize> {
        match self {
            MapSpec::Tanh { .. } | MapSpec::Cubic { .. } => Ok(1),
            MapSpec::Coupled { .. } => Ok(2),
            MapSpec::Product { x, y } => {
                if x.dim()? != 1 || y.dim()? != 1 {
                    return Err(Error::InvalidParameter(
                        "product maps need one-dimensional factors".into(),
                    ));
                }
                Ok(2)
            }
            MapSpec::Polynomial { axes } => {
                let d = axes.len();
                if d == 0 || d > MAX_DIM {
                    return Err(Error::InvalidParameter(format!(
                        "polynomial maps need 1 or 2 axes, got {d}"
                    )));
                }
                if axes.iter().flatten().any(|m| m.powers.len() != d) {
                    return Err(Error::InvalidParameter(
                        "every monomial needs one exponent per coordinate".into(),
                    ));
                }
                Ok(d)
            }
        }
    }

    /// Whether Π is odd, Π(−x) = −Π(x).
    pub fn is_odd(&self) -> bool {
        match self {
            MapSpec::Tanh { .. } | MapSpec::Cubic { .. } | MapSpec::Coupled { .. } => true,
            MapSpec::Product { x, y } => x.is_odd() && y.is_odd(),
            MapSpec::Polynomial { axes } => axes
                .iter()
                .flatten()
                .all(|m| m.powers.iter().sum::<u32>() % 2 == 1),
        }
    }

    pub(crate) fn eval(&self, p: &Point, dim: usize) -> Point {
        match self {
            MapSpec::Tanh { beta } => [(beta * p[0]).tanh(), 0.0],
            MapSpec::Cubic { a, b } => [a * p[0] - b * p[0].powi(3), 0.0],
            MapSpec::Product { x, y } => [x.eval(&[p[0], 0.0], 1)[0], y.eval(&[p[1], 0.0], 1)[0]],
            MapSpec::Coupled { beta, coupling } => [
                (beta * p[0] + coupling * p[1]).tanh(),
                (beta * p[1] + coupling * p[0]).tanh(),
            ],
            MapSpec::Polynomial { axes } => {
                let mut out = [0.0; MAX_DIM];
                for (k, terms) in axes.iter().enumerate().take(dim) {
                    out[k] = terms
                        .iter()
                        .map(|m| {
                            m.coef
                                * m.powers
                                    .iter()
                                    .enumerate()
                                    .map(|(c, e)| p[c].powi(*e as i32))
                                    .product::<f64>()
                        })
                        .sum();
                }
                out
            }
        }
    }

    pub(crate) fn jacobian(&self, p: &Point, dim: usize) -> Mat2 {
        match self {
            MapSpec::Tanh { beta } => {
                let t = (beta * p[0]).tanh();
                [[beta * (1.0 - t * t), 0.0], [0.0, 0.0]]
            }
            MapSpec::Cubic { a, b } => [[a - 3.0 * b * p[0] * p[0], 0.0], [0.0, 0.0]],
            MapSpec::Product { x, y } => [
                [x.jacobian(&[p[0], 0.0], 1)[0][0], 0.0],
                [0.0, y.jacobian(&[p[1], 0.0], 1)[0][0]],
            ],
            MapSpec::Coupled { beta, coupling } => {
                let t0 = (beta * p[0] + coupling * p[1]).tanh();
                let t1 = (beta * p[1] + coupling * p[0]).tanh();
                let s0 = 1.0 - t0 * t0;
                let s1 = 1.0 - t1 * t1;
                [[beta * s0, coupling * s0], [coupling * s1, beta * s1]]
            }
            MapSpec::Polynomial { axes } => {
                let mut out = [[0.0; MAX_DIM]; MAX_DIM];
                for (k, terms) in axes.iter().enumerate().take(dim) {
                    for (c, row) in out[k].iter_mut().enumerate().take(dim) {
                        *row = terms
                            .iter()
                            .filter(|m| m.powers[c] > 0)
                            .map(|m| {
                                m.coef
                                    * m.powers
                                        .iter()
                                        .enumerate()
                                        .map(|(cc, e)| {
                                            if cc == c {
                                                *e as f64 * p[cc].powi(*e as i32 - 1)
                                            } else {
                                                p[cc].powi(*e as i32)
                                            }
                                        })
                                        .product::<f64>()
                            })
                            .sum();
                    }
                }
                out
            }
        }
    }
}
