//! Freidlin–Wentzell quasipotential as shortest paths on a hop-bounded
//! action graph, and the inter-well cost table built from it.

mod graph;
mod table;

pub use graph::{build_action_graph, quasipotential_from, shortest_paths, ActionGraph, GraphStats};
pub use table::{
    compute_h_matrix, h_hat, h_theta, ldp_transition_bounds, refinement_report, table_from_h,
    IndexPath, QuasipotentialTable, RefinementReport, HOP_SATURATION, PATH_TOLERANCE,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_metastable_structure, find_fixed_points, DeterministicMapModel};
    use crate::kernel::{Grid, GridPartition};

    fn double_well_table(nodes: usize) -> QuasipotentialTable {
        let model = DeterministicMapModel::tanh(2.0, [-2.0, 2.0], 0.35).unwrap();
        let fp = find_fixed_points(&model, 16).unwrap();
        let s = build_metastable_structure(&model, &fp, 0.2).unwrap();
        let grid = Grid::uniform(model.bounds(), nodes).unwrap();
        let part = GridPartition::new(&grid, &s).unwrap();
        let graph = build_action_graph(&model, &grid, 1.0).unwrap();
        compute_h_matrix(&model, &grid, &part, &graph).unwrap()
    }

    #[test]
    fn double_well_is_symmetric() {
        let t = double_well_table(401);
        assert!((t.h[0][1] - t.h[1][0]).abs() < 1e-12);
        assert_eq!(t.h0, t.h[0][1].min(t.h[1][0]));
        assert!(t.h0 > 0.25 && t.h0 < 0.35, "{}", t.h0);
        assert!(t.h0_hat.is_infinite());
        assert!(t.max_optimal_hop < 0.8);
        assert_eq!(t.v[0][t.center_nodes[0]], 0.0);
        assert!(t.v[0][t.center_nodes[1]] > 0.0);
    }

    #[test]
    fn refinement_changes_h_little() {
        let coarse = double_well_table(201);
        let fine = double_well_table(401);
        let r = refinement_report(&coarse, &fine, 0.05);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn distances_ignore_adjacency_order() {
        let model = DeterministicMapModel::tanh(2.0, [-2.0, 2.0], 0.35).unwrap();
        let grid = Grid::uniform(model.bounds(), 201).unwrap();
        let graph = build_action_graph(&model, &grid, 1.0).unwrap();
        let src = crate::kernel::IndexSet::new(vec![20]);
        let a = quasipotential_from(&graph, &src);
        let b = quasipotential_from(&graph.with_reversed_adjacency(), &src);
        for (x, y) in a.iter().zip(&b) {
            // Edge nodes beyond r_hop of every image stay unreachable.
            assert!(x == y || (x - y).abs() <= 1e-12, "{x} {y}");
        }
    }
}
