use serde::Serialize;

use crate::dynamics::MetastableStructure;
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, Point, MAX_DIM};

/// Uniform tensor grid over the box, endpoints included. Node indices are
/// row-major in the axes: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(bounds: &[[f64; 2]], nodes_per_axis: &[usize]) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > MAX_DIM || bounds.len() != nodes_per_axis.len() {
            return Err(Error::InvalidParameter(format!(
                "grid needs one node count per axis, got {} bounds and {} counts",
                bounds.len(),
                nodes_per_axis.len()
            )));
        }
        let mut axes = Vec::with_capacity(bounds.len());
        let mut spacing = Vec::with_capacity(bounds.len());
        for (&[lo, hi], &n) in bounds.iter().zip(nodes_per_axis) {
            if n < 2 || !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "cannot place {n} nodes on [{lo}, {hi}]"
                )));
            }
            let h = (hi - lo) / (n - 1) as f64;
            let mut axis: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
            axis[n - 1] = hi;
            axes.push(axis);
            spacing.push(h);
        }
        Ok(Self { axes, spacing })
    }

    /// Same node count on every axis.
    pub fn uniform(bounds: &[[f64; 2]], nodes_per_axis: usize) -> Result<Self> {
        Self::new(bounds, &vec![nodes_per_axis; bounds.len()])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn bounds(&self) -> Vec<[f64; 2]> {
        self.axes.iter().map(|a| [a[0], a[a.len() - 1]]).collect()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Cell volume w = Π h_k.
    pub fn weight(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn point(&self, index: usize) -> Point {
        let mut p = [0.0; MAX_DIM];
        let mut rest = index;
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].len();
            p[k] = self.axes[k][rest % n];
            rest /= n;
        }
        p
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn coords(&self, index: usize) -> Vec<f64> {
        self.point(index)[..self.dim()].to_vec()
    }

    /// Nearest node, clamping coordinates outside the box onto its faces.
    pub fn nearest(&self, x: &Point) -> usize {
        let mut index = 0;
        for k in 0..self.dim() {
            let n = self.axes[k].len();
            let t = ((x[k] - self.axes[k][0]) / self.spacing[k]).round();
            let i = t.clamp(0.0, (n - 1) as f64) as usize;
            index = index * n + i;
        }
        index
    }

    /// Nodes within Euclidean distance `r` of `x`.
    pub fn nodes_within(&self, x: &Point, r: f64) -> Vec<usize> {
        let dim = self.dim();
        let ranges: Vec<(usize, usize)> = (0..dim)
            .map(|k| {
                let n = self.axes[k].len();
                let lo = ((x[k] - r - self.axes[k][0]) / self.spacing[k])
                    .ceil()
                    .max(0.0);
                let hi = ((x[k] + r - self.axes[k][0]) / self.spacing[k])
                    .floor()
                    .min((n - 1) as f64);
                if hi < lo {
                    (1, 0)
                } else {
                    (lo as usize, hi as usize)
                }
            })
            .collect();
        let r2 = r * r;
        let mut out = Vec::new();
        if dim == 1 {
            if ranges[0].0 <= ranges[0].1 {
                for i in ranges[0].0..=ranges[0].1 {
                    if dist_sq(&self.point(i), x, 1) <= r2 {
                        out.push(i);
                    }
                }
            }
        } else if ranges.iter().all(|(lo, hi)| lo <= hi) {
            let n1 = self.axes[1].len();
            for i in ranges[0].0..=ranges[0].1 {
                for j in ranges[1].0..=ranges[1].1 {
                    let idx = i * n1 + j;
                    if dist_sq(&self.point(idx), x, 2) <= r2 {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }
}

/// Sorted set of node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn range(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Rank of `i` within the set.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.binary_search(&i).ok()
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Elements of `universe` not in `self`.
    pub fn complement_in(&self, universe: &IndexSet) -> IndexSet {
        IndexSet(universe.iter().filter(|i| !self.contains(*i)).collect())
    }

    /// Ranks of the elements of `self` within `universe`; `None` if `self` is
    /// not a subset.
    pub fn positions_in(&self, universe: &IndexSet) -> Option<Vec<usize>> {
        self.iter().map(|i| universe.position(i)).collect()
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Grid nodes split into the balls Bᵢ, the metastable set M and its
/// complement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPartition {
    pub balls: Vec<IndexSet>,
    pub metastable: IndexSet,
    pub complement: IndexSet,
    /// Node nearest to each ball center.
    pub center_nodes: Vec<usize>,
}

impl GridPartition {
    pub fn new(grid: &Grid, structure: &MetastableStructure) -> Result<Self> {
        let mut balls = vec![Vec::new(); structure.n_balls()];
        let mut complement = Vec::new();
        for (i, p) in grid.points().iter().enumerate() {
            match structure.ball_containing(p) {
                Some(b) => balls[b].push(i),
                None => complement.push(i),
            }
        }
        if let Some(ball) = balls.iter().position(Vec::is_empty) {
            return Err(Error::EmptyBall { ball });
        }
        let balls: Vec<IndexSet> = balls.into_iter().map(IndexSet::new).collect();
        let metastable = balls.iter().flat_map(IndexSet::iter).collect();
        let center_nodes = structure
            .balls
            .iter()
            .zip(&balls)
            .map(|(b, set)| {
                let c = b.center_point();
                set.iter()
                    .min_by(|x, y| {
                        dist_sq(&grid.point(*x), &c, grid.dim()).total_cmp(&dist_sq(
                            &grid.point(*y),
                            &c,
                            grid.dim(),
                        ))
                    })
                    .expect("ball is nonempty")
            })
            .collect();
        Ok(Self {
            balls,
            metastable,
            complement: IndexSet::new(complement),
            center_nodes,
        })
    }

    pub fn n_balls(&self) -> usize {
        self.balls.len()
    }

    /// Ball membership expressed as ranks within M.
    pub fn balls_within_metastable(&self) -> Vec<Vec<usize>> {
        self.balls
            .iter()
            .map(|b| b.positions_in(&self.metastable).expect("balls lie in M"))
            .collect()
    }

    /// Ball index of each node of M, in M's order.
    pub fn ball_of_metastable_node(&self) -> Vec<usize> {
        let mut out = vec![0; self.metastable.len()];
        for (b, positions) in self.balls_within_metastable().iter().enumerate() {
            for &p in positions {
                out[p] = b;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_box_exactly() {
        let g = Grid::uniform(&[[-2.0, 2.0]], 401).unwrap();
        assert_eq!(g.len(), 401);
        assert_eq!(g.point(0)[0], -2.0);
        assert_eq!(g.point(400)[0], 2.0);
        assert!((g.weight() - 0.01).abs() < 1e-15);
        assert_eq!(g.nearest(&[0.004, 0.0]), 200);
        assert_eq!(g.nearest(&[9.0, 0.0]), 400);
    }

    #[test]
    fn two_dimensional_indexing_is_row_major() {
        let g = Grid::new(&[[0.0, 1.0], [0.0, 2.0]], &[3, 5]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.point(1), [0.0, 0.5]);
        assert_eq!(g.point(5), [0.5, 0.0]);
        assert_eq!(g.nearest(&[0.5, 0.5]), 6);
        assert_eq!(g.weight(), 0.25);
        let near = g.nodes_within(&[0.5, 1.0], 0.5);
        assert_eq!(near, vec![2, 6, 7, 8, 12]);
    }

    #[test]
    fn index_set_algebra() {
        let u = IndexSet::range(6);
        let a = IndexSet::new(vec![4, 1, 1, 3]);
        assert_eq!(a.as_slice(), &[1, 3, 4]);
        assert_eq!(a.complement_in(&u).as_slice(), &[0, 2, 5]);
        assert_eq!(a.positions_in(&u), Some(vec![1, 3, 4]));
        assert_eq!(u.positions_in(&a), None);
        assert!(a.is_subset_of(&u));
    }
}
