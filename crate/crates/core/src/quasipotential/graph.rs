use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::DeterministicMapModel;
use crate::error::{Error, Result};
use crate::kernel::{gaussian_rate, Grid, IndexSet};

/// Directed graph in compressed sparse row form with nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    r_hop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub mean_out_degree: f64,
    pub max_out_degree: usize,
    pub r_hop: f64,
}

impl ActionGraph {
    /// Graph on `n` nodes from an edge list. Parallel edges are kept; the
    /// lighter one wins in shortest-path queries.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) outside 0..{n}"
                )));
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) has weight {w}"
                )));
            }
            adj[a].push((b, w));
        }
        Ok(Self::from_adjacency(adj, f64::INFINITY))
    }

    fn from_adjacency(adj: Vec<Vec<(usize, f64)>>, r_hop: f64) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for row in adj {
            for (t, w) in row {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            weights,
            r_hop,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn r_hop(&self) -> f64 {
        self.r_hop
    }

    pub fn edges(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[node]..self.offsets[node + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.n_nodes();
        GraphStats {
            nodes: n,
            edges: self.n_edges(),
            mean_out_degree: self.n_edges() as f64 / n.max(1) as f64,
            max_out_degree: (0..n)
                .map(|i| self.offsets[i + 1] - self.offsets[i])
                .max()
                .unwrap_or(0),
            r_hop: self.r_hop,
        }
    }

    /// The same graph with every adjacency list reversed; shortest-path
    /// distances must not change.
    pub fn with_reversed_adjacency(&self) -> Self {
        let adj = (0..self.n_nodes())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.edges(i).collect();
                row.reverse();
                row
            })
            .collect();
        Self::from_adjacency(adj, self.r_hop)
    }
}

/// Edges x → y for every node y with ‖y − Π(x)‖ ≤ r_hop, plus an edge to
/// the node nearest Π(x), weighted by the one-step rate I(x, y).
pub fn build_action_graph(
    model: &DeterministicMapModel,
    grid: &Grid,
    r_hop: f64,
) -> Result<ActionGraph> {
    let min_hop = 3.0 * grid.max_spacing();
    if !(r_hop >= min_hop) {
        return Err(Error::HopRadiusTooSmall {
            r_hop,
            reason: format!("it must be at least 3 grid spacings ({min_hop})"),
        });
    }
    let points = grid.points();
    let adj: Vec<Result<Vec<(usize, f64)>>> = points
        .par_iter()
        .enumerate()
        .map(|(node, x)| {
            let y = model.image(x);
            let mut targets = grid.nodes_within(&y, r_hop);
            if targets.is_empty() {
                return Err(Error::HopRadiusTooSmall {
                    r_hop,
                    reason: format!("no node lies within it of the image of node {node}"),
                });
            }
            let nearest = grid.nearest(&y);
            if !targets.contains(&nearest) {
                targets.push(nearest);
            }
            Ok(targets
                .into_iter()
                .map(|t| (t, gaussian_rate(model, x, &points[t])))
                .collect())
        })
        .collect();
    let adj = adj.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ActionGraph::from_adjacency(adj, r_hop))
}

#[derive(Copy, Clone, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra: distances from the nearest source and the
/// predecessor of every reached node on one shortest path.
pub fn shortest_paths(graph: &ActionGraph, sources: &IndexSet) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = graph.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    for s in sources.iter() {
        dist[s] = 0.0;
        heap.push(State { cost: 0.0, node: s });
    }
    while let Some(State { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for (next, w) in graph.edges(node) {
            let c = cost + w;
            if c < dist[next] {
                dist[next] = c;
                pred[next] = Some(node);
                heap.push(State {
                    cost: c,
                    node: next,
                });
            }
        }
    }
    (dist, pred)
}

/// V(·) = min over sources of the quasipotential from the source set.
pub fn quasipotential_from(graph: &ActionGraph, sources: &IndexSet) -> Vec<f64> {
    shortest_paths(graph, sources).0
}
