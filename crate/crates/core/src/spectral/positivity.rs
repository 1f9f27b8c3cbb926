use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    /// Smallest n with ratio ≤ L, or the cap when it was not reached.
    pub n0: usize,
    /// max_y sup_x K̊ⁿ(x,y) / inf_x K̊ⁿ(x,y) at `n0`.
    pub achieved_l: f64,
    pub achieved: bool,
    pub l_target: f64,
    pub n_cap: usize,
    /// Ratio for n = 1, 2, ... up to the stopping point.
    pub ratios: Vec<f64>,
}

/// 10·⌈log(1/σ)/log 2⌉ + 50.
pub fn default_positivity_cap(sigma: f64) -> usize {
    let k = ((1.0 / sigma).ln() / std::f64::consts::LN_2)
        .ceil()
        .max(0.0) as usize;
    10 * k + 50
}

fn column_ratio(m: &Mat<f64>) -> (f64, Option<usize>) {
    let mut worst: f64 = 1.0;
    for j in 0..m.ncols() {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..m.nrows() {
            lo = lo.min(m[(i, j)]);
            hi = hi.max(m[(i, j)]);
        }
        if hi == 0.0 {
            return (f64::INFINITY, Some(j));
        }
        worst = worst.max(hi / lo);
    }
    (worst, None)
}

/// Finds the smallest n ≤ `n_cap` for which every column of K̊ⁿ has
/// sup/inf ratio at most `l_target`.
pub fn check_uniform_positivity(
    killed: &KernelMatrix,
    l_target: f64,
    n_cap: usize,
) -> Result<PositivityReport> {
    if !(l_target > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "L must exceed 1, got {l_target}"
        )));
    }
    if n_cap == 0 {
        return Err(Error::InvalidParameter("n_cap must be positive".into()));
    }
    let base = killed.matrix();
    let mut power = base.clone();
    let mut ratios = Vec::new();
    let mut best = (f64::INFINITY, n_cap);
    for n in 1..=n_cap {
        let (ratio, zero) = column_ratio(&power);
        ratios.push(ratio);
        if ratio < best.0 {
            best = (ratio, n);
        }
        if ratio <= l_target {
            return Ok(PositivityReport {
                n0: n,
                achieved_l: ratio,
                achieved: true,
                l_target,
                n_cap,
                ratios,
            });
        }
        if n == n_cap {
            if let Some(column) = zero {
                return Err(Error::ZeroColumn { column, power: n });
            }
            break;
        }
        power = &power * base;
        // Ratios are scale invariant; rescaling keeps long powers of a
        // substochastic kernel away from underflow.
        let max = (0..power.ncols())
            .flat_map(|j| (0..power.nrows()).map(move |i| (i, j)))
            .map(|(i, j)| power[(i, j)])
            .fold(0.0, f64::max);
        if max > 0.0 {
            power *= faer::Scale(1.0 / max);
        }
    }
    log::warn!("uniform positivity with L = {l_target} not reached by n = {n_cap}");
    Ok(PositivityReport {
        n0: best.1,
        achieved_l: best.0,
        achieved: false,
        l_target,
        n_cap,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_rows_need_one_step() {
        let k = KernelMatrix::substochastic(&[vec![0.3, 0.3], vec![0.3, 0.3]]).unwrap();
        let r = check_uniform_positivity(&k, 1.9, 10).unwrap();
        assert_eq!(r.n0, 1);
        assert_eq!(r.achieved_l, 1.0);
    }

    #[test]
    fn hand_example_needs_two_steps() {
        let k = KernelMatrix::substochastic(&[vec![0.5, 0.2], vec![0.3, 0.4]]).unwrap();
        let r = check_uniform_positivity(&k, 1.9, 10).unwrap();
        assert_relative_eq!(r.ratios[0], 2.0, epsilon = 1e-14);
        assert_eq!(r.n0, 2);
        assert_relative_eq!(r.achieved_l, 0.22 / 0.18, epsilon = 1e-14);
    }

    #[test]
    fn zero_column_is_an_error() {
        let k = KernelMatrix::substochastic(&[vec![0.5, 0.0], vec![0.3, 0.0]]).unwrap();
        assert!(matches!(
            check_uniform_positivity(&k, 1.5, 3),
            Err(Error::ZeroColumn {
                column: 1,
                power: 3
            })
        ));
    }

    #[test]
    fn cap_reached_is_flagged() {
        let k = KernelMatrix::substochastic(&[vec![0.9, 0.0], vec![0.05, 0.9]]).unwrap();
        let r = check_uniform_positivity(&k, 1.5, 5).unwrap();
        assert!(!r.achieved);
        assert_eq!(r.ratios.len(), 5);
    }

    #[test]
    fn default_cap() {
        assert_eq!(default_positivity_cap(0.35), 10 * 2 + 50);
        assert_eq!(default_positivity_cap(0.5), 60);
        assert_eq!(default_positivity_cap(0.25), 70);
    }
}
