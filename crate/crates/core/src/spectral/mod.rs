//! Dense nonsymmetric eigendecomposition of kernels, spectral-gap reports,
//! quasistationary distributions and the uniform positivity check.

mod positivity;
mod qsd;

pub use positivity::{check_uniform_positivity, default_positivity_cap, PositivityReport};
pub use qsd::{
    killing_probabilities, solve_killed, solve_qsd, survival_probabilities, write_qsd_csv,
    QsdSolution,
};

use std::io::Write;

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{evd_real, evd_scratch, ComputeEigenvectors};
use faer::prelude::*;
use faer::{c64, Mat, Par, Spec};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{IndexSet, KernelMatrix};

/// Eigenvalues closer than this (relative to max(1, |λ|)) are binormalized
/// together as one cluster.
const CLUSTER_TOLERANCE: f64 = 1e-6;
/// Gram-matrix condition number above which a cluster is reported defective.
const DEFECTIVE_CONDITION: f64 = 1e8;

/// Eigenvalues sorted by decreasing modulus (ties: larger real part, then
/// larger imaginary part first) with biorthogonal left and right vectors for
/// the leading `n_modes` of them.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<c64>,
    right: Vec<Vec<c64>>,
    left: Vec<Vec<c64>>,
    defective_clusters: Vec<Vec<usize>>,
    domain: IndexSet,
}

impl SpectralDecomposition {
    /// Full sorted spectrum.
    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.norm()).collect()
    }

    pub fn n_modes(&self) -> usize {
        self.right.len()
    }

    /// Right eigenvector φ_k, scaled so its largest entry equals 1.
    pub fn right(&self, k: usize) -> &[c64] {
        &self.right[k]
    }

    /// Left eigenvector π_k, scaled so that ⟨π_k, φ_k⟩ = 1.
    pub fn left(&self, k: usize) -> &[c64] {
        &self.left[k]
    }

    /// Retained-mode clusters whose Gram matrix was too ill-conditioned to
    /// binormalize. Empty when every retained mode is binormalized.
    pub fn defective_clusters(&self) -> &[Vec<usize>] {
        &self.defective_clusters
    }

    pub fn is_binormalized(&self) -> bool {
        self.defective_clusters.is_empty()
    }

    pub fn domain(&self) -> &IndexSet {
        &self.domain
    }

    /// Spectrum as CSV with columns mode, re, im, abs, abs_minus_one.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "re", "im", "abs", "abs_minus_one"])
            .map_err(csv_error)?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            w.write_record(&[
                k.to_string(),
                l.re.to_string(),
                l.im.to_string(),
                l.norm().to_string(),
                (l - c64::new(1.0, 0.0)).norm().to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn cmp_eigenvalues(a: &c64, b: &c64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// (eigenvalue, right vector, left vector).
pub(crate) type EigenTriplet = (c64, Vec<c64>, Vec<c64>);

/// Raw eigen-triplets of a real matrix, in solver order.
pub(crate) fn raw_evd(m: &Mat<f64>) -> Result<Vec<EigenTriplet>> {
    let n = m.nrows();
    let mut s_re = Diag::<f64>::zeros(n);
    let mut s_im = Diag::<f64>::zeros(n);
    let mut ul = Mat::<f64>::zeros(n, n);
    let mut ur = Mat::<f64>::zeros(n, n);
    let par = if n >= 256 { Par::rayon(0) } else { Par::Seq };
    let mut mem = MemBuffer::new(evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        ComputeEigenvectors::Yes,
        par,
        Spec::default(),
    ));
    evd_real(
        m.as_ref(),
        s_re.as_mut(),
        s_im.as_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        par,
        MemStack::new(&mut mem),
        Spec::default(),
    )
    .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;

    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        let re = s_re[j];
        let im = s_im[j];
        if im == 0.0 {
            let r = (0..n).map(|i| c64::new(ur[(i, j)], 0.0)).collect();
            let l = (0..n).map(|i| c64::new(ul[(i, j)], 0.0)).collect();
            out.push((c64::new(re, 0.0), r, l));
            j += 1;
        } else {
            if j + 1 >= n {
                return Err(Error::Eigensolver("unpaired complex eigenvalue".into()));
            }
            let (re0, im0) = if im > 0.0 { (re, im) } else { (re, -im) };
            let r: Vec<c64> = (0..n)
                .map(|i| c64::new(ur[(i, j)], ur[(i, j + 1)]))
                .collect();
            let l: Vec<c64> = (0..n)
                .map(|i| c64::new(ul[(i, j)], -ul[(i, j + 1)]))
                .collect();
            let (r, l) = if im > 0.0 {
                (r, l)
            } else {
                (
                    r.iter().map(|z| z.conj()).collect(),
                    l.iter().map(|z| z.conj()).collect(),
                )
            };
            let rc = r.iter().map(|z| z.conj()).collect();
            let lc = l.iter().map(|z| z.conj()).collect();
            out.push((c64::new(re0, im0), r, l));
            out.push((c64::new(re0, -im0), rc, lc));
            j += 2;
        }
    }
    if out
        .iter()
        .any(|(l, _, _)| !l.re.is_finite() || !l.im.is_finite())
    {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    Ok(out)
}

/// Scales `v` so that its first entry of (numerically) maximal modulus
/// equals 1.
fn fix_phase(v: &mut [c64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .expect("maximum is attained");
    let s = v[pivot];
    v.iter_mut().for_each(|z| *z /= s);
}

/// Full eigendecomposition of `k`, keeping vectors for the leading
/// `n_modes` eigenvalues.
pub fn eigendecompose(k: &KernelMatrix, n_modes: usize) -> Result<SpectralDecomposition> {
    decompose_matrix(k.matrix(), n_modes, k.domain().clone())
}

pub(crate) fn decompose_matrix(
    m: &Mat<f64>,
    n_modes: usize,
    domain: IndexSet,
) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if n_modes == 0 || n_modes > n {
        return Err(Error::InvalidParameter(format!(
            "n_modes must lie in 1..={n}, got {n_modes}"
        )));
    }
    let mut triplets = raw_evd(m)?;
    triplets.sort_by(|a, b| cmp_eigenvalues(&a.0, &b.0));
    let eigenvalues: Vec<c64> = triplets.iter().map(|t| t.0).collect();
    let mut right: Vec<Vec<c64>> = Vec::with_capacity(n_modes);
    let mut left: Vec<Vec<c64>> = Vec::with_capacity(n_modes);
    for (_, r, l) in triplets.into_iter().take(n_modes) {
        right.push(r);
        left.push(l);
    }
    for r in &mut right {
        fix_phase(r);
    }

    let mut defective_clusters = Vec::new();
    let mut start = 0;
    while start < n_modes {
        let mut end = start + 1;
        while end < n_modes && {
            let l = eigenvalues[end];
            (start..end)
                .any(|a| (eigenvalues[a] - l).norm() <= CLUSTER_TOLERANCE * l.norm().max(1.0))
        } {
            end += 1;
        }
        if !binormalize(&right[start..end], &mut left[start..end]) {
            log::warn!("defective eigenvalue cluster at modes {start}..{end}");
            defective_clusters.push((start..end).collect());
        }
        start = end;
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        right,
        left,
        defective_clusters,
        domain,
    })
}

/// Replaces the left vectors of a cluster by G⁻¹π with G_ab = ⟨π_a, φ_b⟩.
/// Returns false when G is too ill-conditioned.
fn binormalize(right: &[Vec<c64>], left: &mut [Vec<c64>]) -> bool {
    let k = right.len();
    let rn: Vec<f64> = right.iter().map(|v| norm2(v)).collect();
    let ln: Vec<f64> = left.iter().map(|v| norm2(v)).collect();
    if rn.iter().chain(&ln).any(|x| *x == 0.0 || !x.is_finite()) {
        return false;
    }
    let gram = Mat::<c64>::from_fn(k, k, |a, b| dot(&left[a], &right[b]) / (ln[a] * rn[b]));
    let Ok(sv) = gram.singular_values() else {
        return false;
    };
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > DEFECTIVE_CONDITION {
        return false;
    }
    let n = left[0].len();
    // Rows of the scaled left vectors, as a k x n matrix.
    let rows = Mat::<c64>::from_fn(k, n, |a, i| left[a][i] / ln[a]);
    let solved = gram.partial_piv_lu().solve(&rows);
    // The Gram matrix used unit right vectors; rescale so ⟨π_a, φ_a⟩ = 1.
    for (a, l) in left.iter_mut().enumerate() {
        for (i, v) in l.iter_mut().enumerate() {
            *v = solved[(a, i)] / rn[a];
        }
    }
    true
}

/// Result of the spectral-gap check: exactly `n` eigenvalues outside the
/// disc of radius `rho_threshold`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub rho_threshold: f64,
    pub leading_moduli: Vec<f64>,
    pub distances_to_one: Vec<f64>,
    /// Modulus of the (n+1)-th eigenvalue; 0 when the spectrum has only n.
    pub next_modulus: f64,
    /// Largest |λ_i − 1| over the leading n eigenvalues.
    pub gap_radius: f64,
    pub count_above_threshold: usize,
    pub passed: bool,
}

pub fn verify_spectral_gap(
    decomp: &SpectralDecomposition,
    n: usize,
    rho_threshold: f64,
) -> GapReport {
    let eig = decomp.eigenvalues();
    let n = n.min(eig.len());
    let one = c64::new(1.0, 0.0);
    let leading_moduli: Vec<f64> = eig[..n].iter().map(|l| l.norm()).collect();
    let distances_to_one: Vec<f64> = eig[..n].iter().map(|l| (l - one).norm()).collect();
    let count_above_threshold = eig.iter().filter(|l| l.norm() > rho_threshold).count();
    GapReport {
        n,
        rho_threshold,
        gap_radius: distances_to_one.iter().copied().fold(0.0, f64::max),
        leading_moduli,
        distances_to_one,
        next_modulus: eig.get(n).map_or(0.0, |l| l.norm()),
        count_above_threshold,
        passed: count_above_threshold == n,
    }
}
