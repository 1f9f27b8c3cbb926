use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::graph::{shortest_paths, ActionGraph};
use crate::dynamics::DeterministicMapModel;
use crate::error::{Error, Result};
use crate::kernel::{Grid, GridPartition, IndexSet};
use crate::linalg::dist_sq;
use crate::spectral::csv_error;

/// Absolute tolerance for calling an index path optimal.
pub const PATH_TOLERANCE: f64 = 1e-9;
/// Largest admissible hop on an optimal path, as a fraction of r_hop.
pub const HOP_SATURATION: f64 = 0.8;

/// Sequence of ball indices with its cost Σ H(γ_k, γ_{k+1}).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexPath {
    pub indices: Vec<usize>,
    pub cost: f64,
}

impl IndexPath {
    /// Number of transitions |γ|.
    pub fn len(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Quasipotential from every ball center, the inter-well costs H(i, j) and
/// the derived scalars. Infinite values serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasipotentialTable {
    /// `v[i][y]` = V(x*_i, y) for every grid node y.
    #[serde(skip)]
    pub v: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    /// min_{i≠j} H(i, j); infinite when N = 1.
    pub h0: f64,
    /// Smallest excess cost of a non-optimal index path; infinite when no
    /// such path exists (always the case for N = 2).
    pub h0_hat: f64,
    /// `optimal_paths[i][j]`: optimal index paths from i to j.
    pub optimal_paths: Vec<Vec<Vec<IndexPath>>>,
    pub r_hop: f64,
    /// Largest ‖y − Π(x)‖ over the node-level optimal paths between centers.
    pub max_optimal_hop: f64,
    pub center_nodes: Vec<usize>,
}

impl QuasipotentialTable {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// Length of the longest optimal path i ↠ j.
    pub fn longest_optimal(&self, i: usize, j: usize) -> usize {
        self.optimal_paths[i][j]
            .iter()
            .map(IndexPath::len)
            .max()
            .unwrap_or(0)
    }

    /// Largest longest-optimal-path length over all pairs.
    pub fn max_optimal_length(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.longest_optimal(i, j))
            .max()
            .unwrap_or(0)
    }

    /// V surface as CSV: node, coordinates, one column per source ball.
    pub fn write_v_csv<W: Write>(&self, out: W, grid: &Grid) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend(["x", "y"].iter().take(grid.dim()).map(|s| s.to_string()));
        header.extend((0..self.n()).map(|i| format!("v_{i}")));
        w.write_record(&header).map_err(csv_error)?;
        for node in 0..grid.len() {
            let mut rec = vec![node.to_string()];
            rec.extend(grid.coords(node).iter().map(f64::to_string));
            rec.extend(self.v.iter().map(|v| v[node].to_string()));
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simple index paths from i to j, at most `n − 1` transitions.
pub(crate) fn enumerate_paths(h: &[Vec<f64>], i: usize, j: usize) -> Vec<IndexPath> {
    fn walk(h: &[Vec<f64>], path: &mut Vec<usize>, cost: f64, j: usize, out: &mut Vec<IndexPath>) {
        let last = *path.last().expect("nonempty");
        for next in 0..h.len() {
            if path.contains(&next) {
                continue;
            }
            let c = cost + h[last][next];
            path.push(next);
            if next == j {
                out.push(IndexPath {
                    indices: path.clone(),
                    cost: c,
                });
            } else {
                walk(h, path, c, j, out);
            }
            path.pop();
        }
    }
    let mut out = Vec::new();
    if i != j {
        walk(h, &mut vec![i], 0.0, j, &mut out);
    }
    out
}

/// Fills H₀, Ĥ₀ and the optimal index paths from an H matrix.
pub fn table_from_h(h: Vec<Vec<f64>>) -> Result<QuasipotentialTable> {
    let n = h.len();
    if n == 0 || h.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter(
            "H must be a nonempty square matrix".into(),
        ));
    }
    for (i, row) in h.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i == j && *v != 0.0 || !(*v >= 0.0) {
                return Err(Error::InvalidParameter(format!("invalid H({i},{j}) = {v}")));
            }
            if v.is_infinite() {
                return Err(Error::InfiniteH { from: i, to: j });
            }
        }
    }
    let mut h0 = f64::INFINITY;
    let mut h0_hat = f64::INFINITY;
    let mut optimal_paths = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            h0 = h0.min(h[i][j]);
            for p in enumerate_paths(&h, i, j) {
                let excess = p.cost - h[i][j];
                if excess <= PATH_TOLERANCE {
                    optimal_paths[i][j].push(p);
                } else {
                    h0_hat = h0_hat.min(excess);
                }
            }
        }
    }
    Ok(QuasipotentialTable {
        v: vec![],
        h,
        h0,
        h0_hat,
        optimal_paths,
        r_hop: f64::INFINITY,
        max_optimal_hop: 0.0,
        center_nodes: vec![],
    })
}

/// Dijkstra from every ball center; H(i, j) is the cost from the center
/// node of Bᵢ to the center node of Bⱼ.
pub fn compute_h_matrix(
    model: &DeterministicMapModel,
    grid: &Grid,
    partition: &GridPartition,
    graph: &ActionGraph,
) -> Result<QuasipotentialTable> {
    let n = partition.n_balls();
    let centers = &partition.center_nodes;
    let runs: Vec<(Vec<f64>, Vec<Option<usize>>)> = centers
        .par_iter()
        .map(|c| shortest_paths(graph, &IndexSet::new(vec![*c])))
        .collect();
    let h: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { runs[i].0[centers[j]] })
                .collect()
        })
        .collect();

    let limit = HOP_SATURATION * graph.r_hop();
    let dim = model.dim();
    let mut max_hop: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || h[i][j].is_infinite() {
                continue;
            }
            let pred = &runs[i].1;
            let mut node = centers[j];
            while let Some(prev) = pred[node] {
                let image = model.image(&grid.point(prev));
                let hop = dist_sq(&grid.point(node), &image, dim).sqrt();
                max_hop = max_hop.max(hop);
                node = prev;
            }
        }
    }
    if max_hop > limit {
        return Err(Error::RHopSaturated {
            hop: max_hop,
            limit,
        });
    }

    let mut table = table_from_h(h)?;
    table.v = runs.into_iter().map(|r| r.0).collect();
    table.r_hop = graph.r_hop();
    table.max_optimal_hop = max_hop;
    table.center_nodes = centers.clone();
    Ok(table)
}

/// H_θ(i, j) = H(i, j) − p θ with p the longest optimal path length.
pub fn h_theta(table: &QuasipotentialTable, theta: f64) -> Result<Vec<Vec<f64>>> {
    if !(theta > 0.0 && theta < table.h0) {
        return Err(Error::ThetaTooLarge {
            theta,
            h0: table.h0,
        });
    }
    let n = table.n();
    let ht: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        table.h[i][j] - table.longest_optimal(i, j) as f64 * theta
                    }
                })
                .collect()
        })
        .collect();
    if (n as f64 - 2.0) * theta <= table.h0_hat {
        for i in 0..n {
            for l in 0..n {
                for j in 0..n {
                    let excess = ht[i][j] - ht[i][l] - ht[l][j];
                    if excess > PATH_TOLERANCE {
                        return Err(Error::TriangleViolation { i, l, j, excess });
                    }
                }
            }
        }
    }
    Ok(ht)
}

/// Ĥ_j = min_i H_θ(i, j) over i ≠ j, the exponent of the error terms in the
/// reduction theorem.
pub fn h_hat(ht: &[Vec<f64>]) -> Vec<f64> {
    let n = ht.len();
    (0..n)
        .map(|j| {
            (0..n)
                .filter(|i| *i != j)
                .map(|i| ht[i][j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|t| ((n - t) as f64).ln() - ((t + 1) as f64).ln())
        .sum()
}

/// Envelope for P^{x}[X_{τ^{+,n}_M} ∈ B_j] from optimal index paths:
/// lower = Σ_γ C(n,|γ|) e^{−[H+|γ|η]/σ²},
/// upper = Σ_γ C(n,|γ|) e^{−[H−|γ|η]/σ²} + Nᴺ e^{−[H+Ĥ₀−Nη]/σ²}.
pub fn ldp_transition_bounds(
    table: &QuasipotentialTable,
    i: usize,
    j: usize,
    n: u64,
    sigma: f64,
    eta: f64,
) -> Result<(f64, f64)> {
    if i == j || i >= table.n() || j >= table.n() {
        return Err(Error::InvalidParameter(format!(
            "need distinct indices, got ({i}, {j})"
        )));
    }
    let s2 = sigma * sigma;
    let h = table.h[i][j];
    let mut lower = 0.0;
    let mut upper = 0.0;
    for p in &table.optimal_paths[i][j] {
        let len = p.len() as f64;
        let lb = ln_binomial(n, p.len() as u64);
        lower += (lb - (h + len * eta) / s2).exp();
        upper += (lb - (h - len * eta) / s2).exp();
    }
    if table.h0_hat.is_finite() {
        let big_n = table.n() as f64;
        upper += (big_n * big_n.ln() - (h + table.h0_hat - big_n * eta) / s2).exp();
    }
    Ok((lower, upper))
}

/// Comparison of H between a grid and its refinement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementReport {
    pub coarse: Vec<Vec<f64>>,
    pub fine: Vec<Vec<f64>>,
    pub max_relative_difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn refinement_report(
    coarse: &QuasipotentialTable,
    fine: &QuasipotentialTable,
    tolerance: f64,
) -> RefinementReport {
    let n = coarse.n().min(fine.n());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let scale = fine.h[i][j].abs().max(f64::MIN_POSITIVE);
                worst = worst.max((coarse.h[i][j] - fine.h[i][j]).abs() / scale);
            }
        }
    }
    let passed = coarse.n() == fine.n() && worst <= tolerance;
    if !passed {
        log::warn!("quasipotential refinement check failed: relative change {worst:.3e}");
    }
    RefinementReport {
        coarse: coarse.h.clone(),
        fine: fine.h.clone(),
        max_relative_difference: worst,
        tolerance,
        passed,
    }
}
