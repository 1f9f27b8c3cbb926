use serde::Serialize;

use super::DeterministicMapModel;
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Point};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    /// Radius of the smallest ball around the origin containing the box.
    pub r0: f64,
    pub n_samples: usize,
    /// Largest sampled value of (K U)(x) − U(x) with U(x) = ‖x‖².
    pub max_drift: f64,
    pub worst_point: Vec<f64>,
    /// Largest sampled ‖Π(x)‖ / ‖x‖ over ‖x‖ ≥ R₀.
    pub max_contraction: f64,
}

/// Exact Gaussian expectation E‖Π(x) + σξ‖² − ‖x‖² = ‖Π(x)‖² + σ² tr Σ − ‖x‖².
pub fn drift_at(model: &DeterministicMapModel, x: &Point) -> f64 {
    let dim = model.dim();
    let s = model.sigma();
    norm_sq(&model.image(x), dim) + s * s * model.covariance().trace() - norm_sq(x, dim)
}

/// Samples the shells R₀ ≤ ‖x‖ ≤ 4R₀ outside the box and checks that the
/// drift is negative and that Π strictly contracts the norm there.
pub fn check_lyapunov_drift(
    model: &DeterministicMapModel,
    n_samples: usize,
) -> Result<DriftReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let dim = model.dim();
    let r0 = model
        .bounds()
        .iter()
        .map(|[lo, hi]| lo.abs().max(hi.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let samples = shell_samples(dim, r0, n_samples);
    let mut report = DriftReport {
        r0,
        n_samples: samples.len(),
        max_drift: f64::NEG_INFINITY,
        worst_point: vec![],
        max_contraction: 0.0,
    };
    for x in &samples {
        let d = drift_at(model, x);
        let ratio = (norm_sq(&model.image(x), dim) / norm_sq(x, dim)).sqrt();
        report.max_contraction = report.max_contraction.max(ratio);
        if d > report.max_drift {
            report.max_drift = d;
            report.worst_point = x[..dim].to_vec();
        }
        if d >= 0.0 || ratio >= 1.0 {
            return Err(Error::DriftViolated {
                point: x[..dim].to_vec(),
                drift: d,
            });
        }
    }
    Ok(report)
}

fn shell_samples(dim: usize, r0: f64, n: usize) -> Vec<Point> {
    if dim == 1 {
        let n_radii = n.div_ceil(2).max(2);
        (0..n_radii)
            .flat_map(|k| {
                let r = r0 * (1.0 + 3.0 * k as f64 / (n_radii - 1) as f64);
                [[r, 0.0], [-r, 0.0]]
            })
            .collect()
    } else {
        let n_radii = ((n as f64).sqrt().ceil() as usize).max(2);
        let n_angles = n.div_ceil(n_radii).max(4);
        (0..n_radii)
            .flat_map(|k| {
                let r = r0 * (1.0 + 3.0 * k as f64 / (n_radii - 1) as f64);
                (0..n_angles).map(move |a| {
                    let t = std::f64::consts::TAU * a as f64 / n_angles as f64;
                    [r * t.cos(), r * t.sin()]
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MapSpec;
    use crate::linalg::Covariance;

    #[test]
    fn tanh_drift_closed_form() {
        let model = DeterministicMapModel::tanh(2.0, [-2.0, 2.0], 0.3).unwrap();
        let d = drift_at(&model, &[1.5, 0.0]);
        assert_eq!(d, (3.0f64).tanh().powi(2) + 0.09 - 2.25);
        assert!(d < 0.0);
        let report = check_lyapunov_drift(&model, 200).unwrap();
        assert!(report.max_drift < 0.0);
        assert!(report.max_contraction < 1.0);
    }

    #[test]
    fn noiseless_contraction_has_negative_drift() {
        let model = DeterministicMapModel::new(
            MapSpec::univariate(&[0.0, 0.5]),
            vec![[-1.0, 1.0]],
            Covariance::identity(1),
            0.0,
        )
        .unwrap();
        assert_eq!(drift_at(&model, &[2.0, 0.0]), 1.0 - 4.0);
        check_lyapunov_drift(&model, 50).unwrap();
    }

    #[test]
    fn expanding_map_violates_drift() {
        let model = DeterministicMapModel::new(
            MapSpec::univariate(&[0.0, 2.0]),
            vec![[-1.0, 1.0]],
            Covariance::identity(1),
            0.1,
        )
        .unwrap();
        assert!(matches!(
            check_lyapunov_drift(&model, 50),
            Err(Error::DriftViolated { .. })
        ));
    }

    #[test]
    fn coupled_map_drift_in_two_dimensions() {
        let model = DeterministicMapModel::new(
            MapSpec::Coupled {
                beta: 2.0,
                coupling: 0.2,
            },
            vec![[-2.0, 2.0], [-2.0, 2.0]],
            Covariance::identity(2),
            0.3,
        )
        .unwrap();
        let r = check_lyapunov_drift(&model, 400).unwrap();
        assert!(r.n_samples >= 400);
    }
}
