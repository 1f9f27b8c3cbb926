use std::io::Write;

use serde::Serialize;

use super::{cmp_eigenvalues, csv_error, raw_evd};
use crate::error::{Error, Result};
use crate::kernel::{killed_kernel, Grid, IndexSet, KernelMatrix};
use crate::linalg::{mat_vec, row_sums, vec_mat};

const SIMPLE_GAP: f64 = 1e-10;
const EIGEN_RESIDUAL: f64 = 1e-8;

/// Principal left eigenpair of the trace kernel on M killed on leaving one
/// ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QsdSolution {
    pub ball: usize,
    /// Principal eigenvalue λ̊₀ of the killed kernel.
    pub eigenvalue: f64,
    /// Quasistationary distribution, a probability vector over `domain`.
    pub qsd: Vec<f64>,
    pub domain: IndexSet,
    /// |λ̊₁|.
    pub next_modulus: f64,
    /// ϱ = |λ̊₁| / λ̊₀.
    pub gap_ratio: f64,
    /// 1 / (1 − λ̊₀).
    pub mean_killing_time: f64,
}

/// Solves the killed eigenproblem for ball `ball` whose node set is
/// `ball_set`, a proper subset of the domain of `trace_on_m`.
pub fn solve_qsd(
    trace_on_m: &KernelMatrix,
    ball: usize,
    ball_set: &IndexSet,
) -> Result<QsdSolution> {
    if ball_set.len() >= trace_on_m.dim() {
        return Err(Error::InvalidParameter(
            "the ball must be a proper subset of the kernel domain".into(),
        ));
    }
    let killed = killed_kernel(trace_on_m, ball_set)?;
    solve_killed(&killed, ball)
}

/// As [`solve_qsd`] for an already killed kernel.
pub fn solve_killed(killed: &KernelMatrix, ball: usize) -> Result<QsdSolution> {
    let m = killed.matrix();
    let mut triplets = raw_evd(m)?;
    triplets.sort_by(|a, b| cmp_eigenvalues(&a.0, &b.0));
    let (lambda, _, left) = &triplets[0];
    let lambda0 = lambda.re;
    if lambda.im.abs() > 1e-12 || !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "principal eigenvalue {lambda} of the killed kernel is not in (0, 1)"
        )));
    }
    let next_modulus = triplets.get(1).map_or(0.0, |t| t.0.norm());
    let ratio = next_modulus / lambda0;
    if ratio > 1.0 - SIMPLE_GAP {
        return Err(Error::PrincipalNotSimple { ratio });
    }
    let total: f64 = left.iter().map(|z| z.re).sum();
    let mut qsd: Vec<f64> = left.iter().map(|z| z.re / total).collect();
    let scale = qsd.iter().copied().fold(0.0, f64::max);
    for v in &mut qsd {
        if *v < 0.0 {
            if *v < -1e-10 * scale {
                return Err(Error::NoConvergence {
                    what: "quasistationary distribution (sign change)",
                    residual: -*v,
                });
            }
            *v = 0.0;
        }
    }
    let s: f64 = qsd.iter().sum();
    qsd.iter_mut().for_each(|v| *v /= s);

    let moved = vec_mat(&qsd, m);
    let residual = moved
        .iter()
        .zip(&qsd)
        .map(|(a, b)| (a / lambda0 - b).abs())
        .sum::<f64>();
    if residual > EIGEN_RESIDUAL {
        return Err(Error::NoConvergence {
            what: "quasistationary distribution",
            residual,
        });
    }
    Ok(QsdSolution {
        ball,
        eigenvalue: lambda0,
        qsd,
        domain: killed.domain().clone(),
        next_modulus,
        gap_ratio: ratio,
        mean_killing_time: 1.0 / (1.0 - lambda0),
    })
}

/// P[τ = n] for n = 1..=n_max from initial law `nu`, where τ is the first
/// step at which the killed chain dies: ν K̊ⁿ⁻¹ (1 − K̊1).
pub fn killing_probabilities(killed: &KernelMatrix, nu: &[f64], n_max: usize) -> Vec<f64> {
    let m = killed.matrix();
    let deficit: Vec<f64> = row_sums(m).iter().map(|s| 1.0 - s).collect();
    let mut law = nu.to_vec();
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        out.push(law.iter().zip(&deficit).map(|(a, b)| a * b).sum());
        law = vec_mat(&law, m);
    }
    out
}

/// Survival function `P[τ > n]` via K̊ⁿ1, used as an independent cross-check.
pub fn survival_probabilities(killed: &KernelMatrix, nu: &[f64], n_max: usize) -> Vec<f64> {
    let m = killed.matrix();
    let mut h = vec![1.0; m.nrows()];
    let mut out = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        out.push(nu.iter().zip(&h).map(|(a, b)| a * b).sum());
        h = mat_vec(m, &h);
    }
    out
}

/// QSD as CSV with columns node, coordinates, weight.
pub fn write_qsd_csv<W: Write>(out: W, grid: &Grid, solution: &QsdSolution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    header.extend(["x", "y"].iter().take(grid.dim()).map(|s| s.to_string()));
    header.push("weight".into());
    w.write_record(&header).map_err(csv_error)?;
    for (node, mass) in solution.domain.iter().zip(&solution.qsd) {
        let mut rec = vec![node.to_string()];
        rec.extend(grid.coords(node).iter().map(f64::to_string));
        rec.push(mass.to_string());
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
