use rayon::prelude::*;
use serde::Serialize;

use super::{reduced_chain_marginals, Projectors};
use crate::error::{Error, Result};
use crate::kernel::{GridPartition, KernelMatrix};
use crate::linalg::{matrix_power, vec_mat};

/// P_ij / ⟨QSD_i, (K⁰)^m 1_{B_j}⟩ − 1 for every entry.
pub fn multiplicative_errors(
    trace_on_m: &KernelMatrix,
    proj: &Projectors,
    p: &[Vec<f64>],
    m: u64,
) -> Vec<Vec<f64>> {
    let km = matrix_power(trace_on_m.matrix(), m, true);
    proj.qsd
        .iter()
        .zip(p)
        .map(|(q, row)| {
            let moved = vec_mat(q, &km);
            proj.indicators
                .iter()
                .zip(row)
                .map(|(ind, pij)| {
                    let exact: f64 = moved.iter().zip(ind).map(|(a, b)| a * b).sum();
                    pij / exact - 1.0
                })
                .collect()
        })
        .collect()
}

/// Exact comparison of P^{x*_i}[X_{τ^{+,nm}_M} ∈ B_j] with (Pⁿ)_ij.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremReport {
    pub m: u64,
    pub n_max: usize,
    /// max over i, j of the residual, for n = 0..=n_max.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub sigma: f64,
    pub rho: f64,
    pub h_hat_min: f64,
    pub eta: f64,
    /// Smallest C with residual(n) ≤ C (e^{−(Ĥ_min − η)/σ²} + ϱ^{nm}) for all n.
    pub fitted_c: f64,
    /// C e^{−(Ĥ_min − η)/σ²}, the time-uniform part of the fitted bound.
    pub uniform_bound: f64,
}

/// Propagates δ_{x*_i} through (K⁰)^m, obtained by repeated squaring, and
/// compares ball masses with the reduced chain for n = 0..=n_max.
#[allow(clippy::too_many_arguments)]
pub fn theorem_residual(
    trace_on_m: &KernelMatrix,
    partition: &GridPartition,
    p: &[Vec<f64>],
    m: u64,
    n_max: usize,
    sigma: f64,
    rho: f64,
    h_hat_min: f64,
    eta: f64,
) -> Result<TheoremReport> {
    let balls = partition.balls_within_metastable();
    let starts: Vec<usize> = partition
        .center_nodes
        .iter()
        .map(|c| partition.metastable.position(*c).ok_or(Error::NotSubset))
        .collect::<Result<_>>()?;
    let km = matrix_power(trace_on_m.matrix(), m, true);
    let per_start: Vec<Vec<f64>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let marginals = reduced_chain_marginals(p, i, n_max);
            let mut law = vec![0.0; trace_on_m.dim()];
            law[s] = 1.0;
            let mut out = Vec::with_capacity(n_max + 1);
            for (n, y) in marginals.iter().enumerate() {
                if n > 0 {
                    law = vec_mat(&law, &km);
                }
                let r = balls
                    .iter()
                    .zip(y)
                    .map(|(b, yj)| (b.iter().map(|&q| law[q]).sum::<f64>() - yj).abs())
                    .fold(0.0, f64::max);
                out.push(r);
            }
            out
        })
        .collect();
    let residuals: Vec<f64> = (0..=n_max)
        .map(|n| per_start.iter().map(|r| r[n]).fold(0.0, f64::max))
        .collect();
    let floor = (-(h_hat_min - eta) / (sigma * sigma)).exp();
    let fitted_c = residuals
        .iter()
        .enumerate()
        .map(|(n, r)| r / (floor + rho.powf(n as f64 * m as f64)))
        .fold(0.0, f64::max);
    Ok(TheoremReport {
        m,
        n_max,
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
        sigma,
        rho,
        h_hat_min,
        eta,
        fitted_c,
        uniform_bound: fitted_c * floor,
    })
}
