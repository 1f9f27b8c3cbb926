//! Reduction of the trace process on M to an N-state Markov chain: the
//! QSD-based matrix P*, the projectors Π⁰ and Π*, the biorthogonal (μ, ψ)
//! basis and the reduced matrix P on the diluted time scale m(σ).

mod projectors;
mod validation;

pub use projectors::{build_projectors, k_star_identities, BasisChecks, KStarReport, Projectors};
pub use validation::{multiplicative_errors, theorem_residual, TheoremReport};

use faer::c64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{invariant_measure, GridPartition, KernelMatrix};
use crate::linalg::vec_mat;
use crate::spectral::{eigendecompose, solve_qsd, QsdSolution};

/// Entries of P between this and 0 are projection noise and are clamped.
pub const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// QSDs of the trace kernel on M killed on leaving each ball, embedded in
/// M, with P*_ij = ⟨QSD_i, K⁰ 1_{B_j}⟩.
pub fn build_p_star(
    trace_on_m: &KernelMatrix,
    partition: &GridPartition,
) -> Result<(Vec<Vec<f64>>, Vec<QsdSolution>)> {
    if trace_on_m.domain() != &partition.metastable {
        return Err(Error::InvalidParameter(
            "the trace kernel must live on the metastable set".into(),
        ));
    }
    let balls = partition.balls_within_metastable();
    let n = balls.len();
    let dim = trace_on_m.dim();
    let solutions: Vec<QsdSolution> = if n == 1 {
        // Nothing is killed: the QSD is the invariant law of the trace.
        let pi = invariant_measure(trace_on_m)?;
        vec![QsdSolution {
            ball: 0,
            eigenvalue: 1.0,
            qsd: pi,
            domain: partition.metastable.clone(),
            next_modulus: f64::NAN,
            gap_ratio: f64::NAN,
            mean_killing_time: f64::INFINITY,
        }]
    } else {
        partition
            .balls
            .iter()
            .enumerate()
            .map(|(i, b)| solve_qsd(trace_on_m, i, b))
            .collect::<Result<_>>()?
    };
    let embedded = embed_qsds(&solutions, &balls, dim);
    let p_star = embedded
        .iter()
        .map(|q| {
            let moved = vec_mat(q, trace_on_m.matrix());
            balls
                .iter()
                .map(|b| b.iter().map(|&p| moved[p]).sum())
                .collect()
        })
        .collect();
    Ok((p_star, solutions))
}

/// QSD vectors written over all of M (zero outside their ball).
pub fn embed_qsds(solutions: &[QsdSolution], balls: &[Vec<usize>], dim: usize) -> Vec<Vec<f64>> {
    solutions
        .iter()
        .zip(balls)
        .map(|(s, b)| {
            let mut v = vec![0.0; dim];
            if s.qsd.len() == dim {
                v.copy_from_slice(&s.qsd);
            } else {
                b.iter().zip(&s.qsd).for_each(|(&p, &w)| v[p] = w);
            }
            v
        })
        .collect()
}

/// min(H₀/4, σ² ln 10⁶).
pub fn default_theta(h0: f64, sigma: f64) -> f64 {
    (h0 / 4.0).min(sigma * sigma * 1e6f64.ln())
}

/// m = ⌈e^{θ/σ²}⌉ for 0 < θ < H₀.
pub fn choose_m(sigma: f64, theta: f64, h0: f64) -> Result<u64> {
    if !(theta > 0.0 && theta < h0) {
        return Err(Error::ThetaTooLarge { theta, h0 });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let exponent = theta / (sigma * sigma);
    let m = exponent.exp().ceil();
    if !(m < u64::MAX as f64) {
        return Err(Error::Overflow { exponent });
    }
    Ok(m as u64)
}

/// A clamped entry of P.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClampedEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedMatrix {
    pub p: Vec<Vec<f64>>,
    pub clamped: Vec<ClampedEntry>,
    /// Largest imaginary part dropped when forming P from complex modes.
    pub imaginary_residual: f64,
    /// max_i |Σ_j P_ij − 1| before clamping.
    pub row_sum_error: f64,
}

/// P_ij = ⟨μ_i, (trunc K⁰)^m ψ_j⟩ = Σ_k λ_k^m ⟨μ_i, φ_k⟩⟨π_k, ψ_j⟩.
pub fn build_p(proj: &Projectors, m: u64) -> Result<ReducedMatrix> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let n = proj.n();
    let powers: Vec<c64> = proj.eigenvalues.iter().map(|l| l.powf(m as f64)).collect();
    let mut p = vec![vec![0.0; n]; n];
    let mut imaginary_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z: c64 = (0..n)
                .map(|k| powers[k] * proj.mu_coords[i][k] * proj.psi_coords[k][j])
                .sum();
            imaginary_residual = imaginary_residual.max(z.im.abs());
            p[i][j] = z.re;
        }
    }
    let row_sum_error = p
        .iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let clamped = clamp_negative(&mut p)?;
    Ok(ReducedMatrix {
        p,
        clamped,
        imaginary_residual,
        row_sum_error,
    })
}

/// Zeroes entries in [−10⁻⁸, 0) and renormalizes their rows; entries below
/// −10⁻⁸ are an error.
pub(crate) fn clamp_negative(p: &mut [Vec<f64>]) -> Result<Vec<ClampedEntry>> {
    let mut clamped = Vec::new();
    for (i, row) in p.iter_mut().enumerate() {
        if let Some((j, v)) = row
            .iter()
            .enumerate()
            .find(|(_, v)| **v < -NEGATIVE_TOLERANCE)
        {
            return Err(Error::NegativeEntry {
                row: i,
                col: j,
                value: *v,
            });
        }
        let before = clamped.len();
        for (j, v) in row.iter_mut().enumerate() {
            if *v < 0.0 {
                clamped.push(ClampedEntry {
                    row: i,
                    col: j,
                    value: *v,
                });
                *v = 0.0;
            }
        }
        if clamped.len() > before {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    if !clamped.is_empty() {
        log::warn!("clamped {} slightly negative entries of P", clamped.len());
    }
    Ok(clamped)
}

/// δ_i Pⁿ for n = 0..=n_steps.
pub fn reduced_chain_marginals(p: &[Vec<f64>], i: usize, n_steps: usize) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut law = vec![0.0; n];
    law[i] = 1.0;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(law.clone());
    for _ in 0..n_steps {
        law = (0..n)
            .map(|j| (0..n).map(|k| law[k] * p[k][j]).sum())
            .collect();
        out.push(law.clone());
    }
    out
}

/// The coarse-graining map ρ ↦ (⟨ρ, ψ_1⟩, …, ⟨ρ, ψ_N⟩), which sends μ_j to δ_j.
pub fn coarse_grain(rho: &[f64], psi: &[Vec<f64>]) -> Vec<f64> {
    psi.iter()
        .map(|p| p.iter().zip(rho).map(|(a, b)| a * b).sum())
        .collect()
}

/// Complex number as [re, im].
pub type ComplexPair = [f64; 2];

/// The reduced chain and the diagnostics that certify it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedChainModel {
    pub n: usize,
    pub sigma: f64,
    pub theta: f64,
    pub m: u64,
    pub p: Vec<Vec<f64>>,
    pub p_star: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    /// Leading N + 1 eigenvalues of the trace kernel on M.
    pub eigenvalues: Vec<ComplexPair>,
    /// |λ_N|, the modulus of the first discarded eigenvalue.
    pub rho: f64,
    pub qsd_eigenvalues: Vec<f64>,
    pub qsd: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    /// P_ij / P^{QSD_i}[X_{τ^{+,m}} ∈ B_j] − 1.
    pub multiplicative_error: Vec<Vec<f64>>,
    pub clamped: Vec<ClampedEntry>,
    pub basis: BasisChecks,
    pub k_star: KStarReport,
}

/// Runs the whole reduction on the trace kernel on M.
pub fn reduce(
    trace_on_m: &KernelMatrix,
    partition: &GridPartition,
    sigma: f64,
    theta: f64,
    h0: f64,
) -> Result<(ReducedChainModel, Projectors)> {
    let n = partition.n_balls();
    let m = choose_m(sigma, theta, h0)?;
    let (p_star, solutions) = build_p_star(trace_on_m, partition)?;
    let balls = partition.balls_within_metastable();
    let qsd = embed_qsds(&solutions, &balls, trace_on_m.dim());
    let n_modes = (n + 1).min(trace_on_m.dim());
    let decomp = eigendecompose(trace_on_m, n_modes)?;
    let proj = build_projectors(&decomp, n, &balls, &qsd)?;
    let reduced = build_p(&proj, m)?;
    let multiplicative_error = multiplicative_errors(trace_on_m, &proj, &reduced.p, m);
    let k_star = k_star_identities(trace_on_m.matrix(), &proj);
    let eig = decomp.eigenvalues();
    let model = ReducedChainModel {
        n,
        sigma,
        theta,
        m,
        p: reduced.p,
        p_star,
        eps: proj.eps.clone(),
        eigenvalues: eig.iter().take(n + 1).map(|l| [l.re, l.im]).collect(),
        rho: eig.get(n).map_or(0.0, |l| l.norm()),
        qsd_eigenvalues: solutions.iter().map(|s| s.eigenvalue).collect(),
        qsd: proj.qsd.clone(),
        mu: proj.mu.clone(),
        psi: proj.psi.clone(),
        multiplicative_error,
        clamped: reduced.clamped,
        basis: proj.checks.clone(),
        k_star,
    };
    Ok((model, proj))
}
