//! Small statistics helpers: least-squares lines, batch means and binomial
//! standard errors.

use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line y ≈ slope·x + intercept.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "a line needs at least two paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        n,
    })
}

/// Mean and batch-means standard error with `batches` contiguous batches.
/// With fewer samples than batches every sample is its own batch.
pub fn batch_means(samples: &[f64], batches: usize) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let b = batches.clamp(1, n);
    if b < 2 {
        return (mean, 0.0);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|k| {
            let chunk = &samples[k * size..(k + 1) * size];
            chunk.iter().sum::<f64>() / size as f64
        })
        .collect();
    let mb = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// sqrt(p(1 − p)/n).
pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert_relative_eq!(f.slope, 2.0);
        assert_relative_eq!(f.intercept, 1.0);
        assert_relative_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn noisy_line_has_lower_r2() {
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 1.0, 3.0]).unwrap();
        assert!(f.r_squared < 1.0 && f.r_squared > 0.5);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn batch_means_of_constant() {
        let (m, se) = batch_means(&[2.0; 100], 10);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
        let (m, se) = batch_means(&[0.0, 1.0, 0.0, 1.0], 2);
        assert_eq!(m, 0.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn binomial() {
        assert_relative_eq!(binomial_stderr(0.5, 100), 0.05);
    }
}
