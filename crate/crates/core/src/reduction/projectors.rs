use faer::prelude::*;
use faer::{c64, Mat};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{kernel_norm, mat_vec, vec_mat};
use crate::spectral::SpectralDecomposition;

const NEUMANN_TOLERANCE: f64 = 1e-14;
const NEUMANN_MAX_TERMS: usize = 100_000;
const NEUMANN_GROWTH_LIMIT: usize = 5;
/// Tolerance for the completeness relation Σ_i ψ_i ⊗ μ_i = Π⁰.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-6;

/// Residuals of the identities the (μ, ψ) basis must satisfy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisChecks {
    /// max |⟨μ_i, ψ_j⟩ − δ_ij|.
    pub mu_psi: f64,
    /// max |⟨μ_i, 1_{B_j}⟩ − δ_ij|.
    pub mu_indicator: f64,
    /// sup |Σ_j ψ_j − 1|.
    pub psi_sum: f64,
    /// ‖Σ_i ψ_i ⊗ μ_i − Π⁰‖ in the kernel norm.
    pub completeness: f64,
    /// ‖Π⁰Π⁰ − Π⁰‖.
    pub pi0_idempotence: f64,
    /// ‖Π*Π* − Π*‖.
    pub pi_star_idempotence: f64,
    /// max difference between ε from ψ and ε from eigencoordinates.
    pub eps_consistency: f64,
    /// max difference between μ from the direct solve and from the Neumann series.
    pub mu_neumann: f64,
    pub neumann_terms: usize,
}

/// Π⁰, Π* and the biorthogonal basis, all over the nodes of M in M's order.
#[derive(Clone, Debug)]
pub struct Projectors {
    pub pi0: Mat<f64>,
    pub pi_star: Mat<f64>,
    /// 1_{B_j} as functions on M.
    pub indicators: Vec<Vec<f64>>,
    /// QSD_i embedded in M.
    pub qsd: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    /// Leading N eigenvalues of the trace kernel.
    pub eigenvalues: Vec<c64>,
    /// ⟨μ_i, φ_k⟩.
    pub mu_coords: Vec<Vec<c64>>,
    /// ⟨π_k, ψ_j⟩.
    pub psi_coords: Vec<Vec<c64>>,
    pub checks: BasisChecks,
}

impl Projectors {
    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

fn cdot_re(a: &[c64], b: &[f64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Builds Π⁰ from the leading `n` modes of the trace kernel on M, Π* from
/// the QSDs, and the basis μ_i = QSD_i[Id − Π⁰⊥Π*]⁻¹Π⁰, ψ_j = Π⁰1_{B_j}.
///
/// `balls` lists the ranks within M of each ball's nodes and `qsd` the
/// QSDs embedded in M.
pub fn build_projectors(
    decomp: &SpectralDecomposition,
    n: usize,
    balls: &[Vec<usize>],
    qsd: &[Vec<f64>],
) -> Result<Projectors> {
    let dim = decomp.domain().len();
    if balls.len() != n || qsd.len() != n || decomp.n_modes() < n {
        return Err(Error::InvalidParameter(format!(
            "need {n} balls, QSDs and retained modes; got {}, {}, {}",
            balls.len(),
            qsd.len(),
            decomp.n_modes()
        )));
    }
    if decomp
        .defective_clusters()
        .iter()
        .any(|c| c.iter().any(|&k| k < n))
    {
        return Err(Error::DefectiveCluster { n });
    }
    let lambdas: Vec<c64> = decomp.eigenvalues()[..n].to_vec();
    if let Some(last) = lambdas.last() {
        if last.im > 1e-12 * last.norm().max(1.0) {
            return Err(Error::InvalidParameter(
                "the leading modes split a complex conjugate pair; change N".into(),
            ));
        }
    }

    let mut pi0 = Mat::<f64>::zeros(dim, dim);
    for k in 0..n {
        let (r, l) = (decomp.right(k), decomp.left(k));
        for x in 0..dim {
            for y in 0..dim {
                pi0[(x, y)] += (r[x] * l[y]).re;
            }
        }
    }
    let indicators: Vec<Vec<f64>> = balls
        .iter()
        .map(|b| {
            let mut v = vec![0.0; dim];
            b.iter().for_each(|&p| v[p] = 1.0);
            v
        })
        .collect();
    let pi_star = Mat::<f64>::from_fn(dim, dim, |x, y| {
        (0..n).map(|i| indicators[i][x] * qsd[i][y]).sum()
    });

    let psi: Vec<Vec<f64>> = indicators.iter().map(|ind| mat_vec(&pi0, ind)).collect();
    let eps: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| delta(i, j) - dot(&qsd[i], &psi[j]))
                .collect()
        })
        .collect();
    // Second route to ε: δ_ij − Σ_k ⟨QSD_i, φ_k⟩⟨π_k, 1_{B_j}⟩.
    let mut eps_consistency: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s: c64 = (0..n)
                .map(|k| {
                    cdot_re(decomp.right(k), &qsd[i]) * cdot_re(decomp.left(k), &indicators[j])
                })
                .sum();
            eps_consistency = eps_consistency.max((delta(i, j) - s.re - eps[i][j]).abs());
        }
    }

    // ⟨QSD_i|Π⁰Π* = Σ_j (δ_ij − ε_ij) QSD_j must not vanish.
    let id_minus_eps = Mat::<f64>::from_fn(n, n, |i, j| delta(i, j) - eps[i][j]);
    for i in 0..n {
        let row: Vec<f64> = (0..dim)
            .map(|y| (0..n).map(|j| id_minus_eps[(i, j)] * qsd[j][y]).sum())
            .collect();
        if sup(row) <= 1e-12 * sup(qsd[i].iter().copied()) {
            return Err(Error::BasisDegenerate { ball: i });
        }
    }
    // Q[Id − Π⁰⊥Π*]⁻¹ = (Id − ε)⁻¹Q, so μ = (Id − ε)⁻¹QΠ⁰.
    let q_pi0 = Mat::<f64>::from_fn(n, dim, |i, y| {
        (0..dim).map(|x| qsd[i][x] * pi0[(x, y)]).sum()
    });
    let mu_mat = id_minus_eps.partial_piv_lu().solve(&q_pi0);
    let mu: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..dim).map(|y| mu_mat[(i, y)]).collect())
        .collect();
    if mu.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::BasisDegenerate {
            ball: (0..n)
                .find(|&i| mu[i].iter().any(|v| !v.is_finite()))
                .unwrap_or(0),
        });
    }

    let (mu_neumann, neumann_terms) = neumann_mu(&pi0, &indicators, qsd)?;
    let mu_neumann_diff = mu
        .iter()
        .zip(&mu_neumann)
        .map(|(a, b)| sup(a.iter().zip(b).map(|(x, y)| x - y)))
        .fold(0.0, f64::max);

    let mut mu_psi: f64 = 0.0;
    let mut mu_indicator: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu_psi = mu_psi.max((dot(&mu[i], &psi[j]) - delta(i, j)).abs());
            mu_indicator = mu_indicator.max((dot(&mu[i], &indicators[j]) - delta(i, j)).abs());
        }
    }
    let psi_sum = sup((0..dim).map(|x| psi.iter().map(|p| p[x]).sum::<f64>() - 1.0));
    let outer = Mat::<f64>::from_fn(dim, dim, |x, y| (0..n).map(|i| psi[i][x] * mu[i][y]).sum());
    let completeness = kernel_norm(&(&outer - &pi0));
    let pi0_idempotence = kernel_norm(&(&(&pi0 * &pi0) - &pi0));
    let pi_star_idempotence = kernel_norm(&(&(&pi_star * &pi_star) - &pi_star));

    let mu_coords = (0..n)
        .map(|i| (0..n).map(|k| cdot_re(decomp.right(k), &mu[i])).collect())
        .collect();
    let psi_coords = (0..n)
        .map(|k| (0..n).map(|j| cdot_re(decomp.left(k), &psi[j])).collect())
        .collect();

    let checks = BasisChecks {
        mu_psi,
        mu_indicator,
        psi_sum,
        completeness,
        pi0_idempotence,
        pi_star_idempotence,
        eps_consistency,
        mu_neumann: mu_neumann_diff,
        neumann_terms,
    };
    if completeness > COMPLETENESS_TOLERANCE || !completeness.is_finite() {
        return Err(Error::NoConvergence {
            what: "completeness of the (mu, psi) basis",
            residual: completeness,
        });
    }
    Ok(Projectors {
        pi0,
        pi_star,
        indicators,
        qsd: qsd.to_vec(),
        mu,
        psi,
        eps,
        eigenvalues: lambdas,
        mu_coords,
        psi_coords,
        checks,
    })
}

/// μ_i as Σ_{n≥0} QSD_i(Π⁰⊥Π*)ⁿ Π⁰, summed until the increment drops below
/// the tolerance.
fn neumann_mu(
    pi0: &Mat<f64>,
    indicators: &[Vec<f64>],
    qsd: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut out = Vec::with_capacity(qsd.len());
    let mut max_terms = 0;
    for q in qsd {
        let mut term = q.clone();
        let mut acc = q.clone();
        let mut last = sup(term.iter().copied());
        let mut growth = 0;
        let mut terms = 1;
        while sup(term.iter().copied()) >= NEUMANN_TOLERANCE {
            if terms >= NEUMANN_MAX_TERMS {
                return Err(Error::NoConvergence {
                    what: "Neumann series for mu",
                    residual: sup(term.iter().copied()),
                });
            }
            // v ↦ vΠ⁰⊥Π* = Σ_j ⟨v − vΠ⁰, 1_{B_j}⟩ QSD_j.
            let projected = vec_mat(&term, pi0);
            let perp: Vec<f64> = term.iter().zip(&projected).map(|(a, b)| a - b).collect();
            let mut next = vec![0.0; q.len()];
            for (ind, qj) in indicators.iter().zip(qsd) {
                let c = dot(&perp, ind);
                next.iter_mut().zip(qj).for_each(|(v, w)| *v += c * w);
            }
            let size = sup(next.iter().copied());
            growth = if size > last { growth + 1 } else { 0 };
            if growth >= NEUMANN_GROWTH_LIMIT || !size.is_finite() {
                return Err(Error::NeumannDiverged);
            }
            last = size;
            acc.iter_mut().zip(&next).for_each(|(a, b)| *a += b);
            term = next;
            terms += 1;
        }
        max_terms = max_terms.max(terms);
        out.push(vec_mat(&acc, pi0));
    }
    Ok((out, max_terms))
}

/// Residuals of the identities relating K* = Π*K⁰, K̂* = K*Π* and K⁰.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KStarReport {
    /// ‖Π*K* − K*‖.
    pub pi_star_fixes_k_star: f64,
    /// max over n = 1..=3 of ‖(K̂*)ⁿ − (K*)ⁿΠ*‖.
    pub hat_powers: f64,
    /// max |⟨QSD_i, K̂* 1_{B_j}⟩ − ⟨QSD_i, K⁰ 1_{B_j}⟩|.
    pub matrix_elements: f64,
}

pub fn k_star_identities(trace_on_m: &Mat<f64>, proj: &Projectors) -> KStarReport {
    let k_star = &proj.pi_star * trace_on_m;
    let k_hat = &k_star * &proj.pi_star;
    let pi_star_fixes_k_star = kernel_norm(&(&(&proj.pi_star * &k_star) - &k_star));
    let mut hat_powers: f64 = 0.0;
    let mut hat_n = k_hat.clone();
    let mut star_n = k_star.clone();
    for n in 1..=3 {
        if n > 1 {
            hat_n = &hat_n * &k_hat;
            star_n = &star_n * &k_star;
        }
        hat_powers = hat_powers.max(kernel_norm(&(&hat_n - &(&star_n * &proj.pi_star))));
    }
    let mut matrix_elements: f64 = 0.0;
    for q in &proj.qsd {
        let a = vec_mat(q, &k_hat);
        let b = vec_mat(q, trace_on_m);
        for ind in &proj.indicators {
            matrix_elements = matrix_elements.max((dot(&a, ind) - dot(&b, ind)).abs());
        }
    }
    KStarReport {
        pi_star_fixes_k_star,
        hat_powers,
        matrix_elements,
    }
}
