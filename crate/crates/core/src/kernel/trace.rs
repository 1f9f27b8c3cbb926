use faer::prelude::*;
use faer::Mat;

use super::{IndexSet, KernelKind, KernelMatrix};
use crate::error::{Error, Result};
use crate::linalg::vec_mat;

const TRACE_ROW_TOLERANCE: f64 = 1e-10;
const INVARIANT_RESIDUAL: f64 = 1e-10;

fn local_positions(k: &KernelMatrix, a: &IndexSet) -> Result<Vec<usize>> {
    if a.is_empty() {
        return Err(Error::InvalidParameter("index set is empty".into()));
    }
    a.positions_in(k.domain()).ok_or(Error::NotSubset)
}

/// The kernel killed on leaving `a`: the submatrix on `a`.
pub fn killed_kernel(k: &KernelMatrix, a: &IndexSet) -> Result<KernelMatrix> {
    let pos = local_positions(k, a)?;
    if a.len() == k.dim() {
        log::warn!("killed kernel on the full domain: nothing is killed");
        return Ok(k.clone());
    }
    KernelMatrix::new(
        k.block(&pos, &pos),
        k.weight(),
        KernelKind::Substochastic,
        a.clone(),
    )
}

/// Kernel of the chain observed only on `a`:
/// K_AA + K_{AAᶜ}(Id − K_{AᶜAᶜ})⁻¹K_{AᶜA}.
pub fn trace_kernel(k: &KernelMatrix, a: &IndexSet) -> Result<KernelMatrix> {
    if k.kind() != KernelKind::Stochastic {
        return Err(Error::InvalidKernel {
            kind: "stochastic",
            reason: "the trace is taken of stochastic kernels only".into(),
        });
    }
    let pos_a = local_positions(k, a)?;
    if a.len() == k.dim() {
        return Ok(k.clone());
    }
    let pos_c: Vec<usize> = (0..k.dim())
        .filter(|p| pos_a.binary_search(p).is_err())
        .collect();
    let nc = pos_c.len();
    let k_cc = k.block(&pos_c, &pos_c);
    let k_ca = k.block(&pos_c, &pos_a);
    let k_ac = k.block(&pos_a, &pos_c);
    let mut out = k.block(&pos_a, &pos_a);

    let lhs = Mat::<f64>::identity(nc, nc) - &k_cc;
    let x = lhs.partial_piv_lu().solve(&k_ca);
    let scale = (0..x.ncols())
        .flat_map(|j| (0..x.nrows()).map(move |i| (i, j)))
        .map(|(i, j)| x[(i, j)])
        .fold(0.0f64, |m, v| {
            if v.is_finite() {
                m.max(v.abs())
            } else {
                f64::INFINITY
            }
        });
    if !scale.is_finite() {
        return Err(Error::NonRecurrentComplement);
    }
    out += &k_ac * &x;

    let n = out.nrows();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if out[(i, j)] < 0.0 {
                if out[(i, j)] < -TRACE_ROW_TOLERANCE {
                    return Err(Error::NonRecurrentComplement);
                }
                out[(i, j)] = 0.0;
            }
            s += out[(i, j)];
        }
        if (s - 1.0).abs() > TRACE_ROW_TOLERANCE {
            log::debug!("trace kernel row {i} sums to {s}");
            return Err(Error::NonRecurrentComplement);
        }
        for j in 0..n {
            out[(i, j)] /= s;
        }
    }
    KernelMatrix::new(out, k.weight(), KernelKind::Stochastic, a.clone())
}

/// Invariant probability vector of a stochastic kernel by the
/// Grassmann–Taksar–Heyman elimination, which involves no subtractions.
pub fn invariant_measure(k: &KernelMatrix) -> Result<Vec<f64>> {
    if k.kind() != KernelKind::Stochastic {
        return Err(Error::InvalidKernel {
            kind: "stochastic",
            reason: "invariant measures are computed for stochastic kernels only".into(),
        });
    }
    let n = k.dim();
    let m = k.matrix();
    let mut p: Vec<f64> = (0..n * n).map(|idx| m[(idx / n, idx % n)]).collect();
    for last in (1..n).rev() {
        let s: f64 = p[last * n..last * n + last].iter().sum();
        if !(s > 0.0) {
            return Err(Error::NoConvergence {
                what: "invariant measure (kernel is reducible)",
                residual: f64::INFINITY,
            });
        }
        let (head, tail) = p.split_at_mut(last * n);
        let pivot_row = &tail[..last];
        for i in 0..last {
            let row = &mut head[i * n..i * n + n];
            row[last] /= s;
            let f = row[last];
            if f != 0.0 {
                for (r, q) in row[..last].iter_mut().zip(pivot_row) {
                    *r += f * q;
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * p[i * n + j]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);

    let moved = vec_mat(&pi, m);
    let residual: f64 = moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
    if residual > INVARIANT_RESIDUAL {
        return Err(Error::NoConvergence {
            what: "invariant measure",
            residual,
        });
    }
    Ok(pi)
}
