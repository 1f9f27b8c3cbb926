use metareduce::config::RunConfig;
use metareduce::dynamics::{build_metastable_structure, find_fixed_points, DeterministicMapModel};
use metareduce::kernel::{
    discretize_kernel, invariant_measure, killed_kernel, trace_kernel, Grid, IndexSet, KernelMatrix,
};
use metareduce::montecarlo::run_parallel;
use metareduce::quasipotential::{shortest_paths, ActionGraph};
use metareduce::reduction::{coarse_grain, reduced_chain_marginals};
use metareduce::spectral::{check_uniform_positivity, eigendecompose, solve_killed};
use metareduce::stats::linear_fit;
use proptest::prelude::*;
use rand::Rng;

fn positive_matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0.05f64..1.0, n), n))
}

fn normalize(rows: &[Vec<f64>], mass: f64) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| mass * v / s).collect()
        })
        .collect()
}

fn subset(n: usize) -> impl Strategy<Value = IndexSet> {
    prop::collection::vec(any::<bool>(), n).prop_map(|keep| {
        let mut idx: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter(|(_, k)| **k)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            idx.push(0);
        }
        IndexSet::new(idx)
    })
}

fn stochastic_with_subset(max_n: usize) -> impl Strategy<Value = (KernelMatrix, IndexSet)> {
    positive_matrix(max_n).prop_flat_map(|rows| {
        let n = rows.len();
        let k = KernelMatrix::stochastic(&normalize(&rows, 1.0)).unwrap();
        (Just(k), subset(n))
    })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_kernel_is_stochastic((k, a) in stochastic_with_subset(12)) {
        let t = trace_kernel(&k, &a).unwrap();
        for s in t.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn trace_restricts_the_invariant_measure((k, a) in stochastic_with_subset(12)) {
        let pi = invariant_measure(&k).unwrap();
        let restricted: Vec<f64> = a.iter().map(|i| pi[i]).collect();
        let total: f64 = restricted.iter().sum();
        let restricted: Vec<f64> = restricted.iter().map(|v| v / total).collect();
        let pi_a = invariant_measure(&trace_kernel(&k, &a).unwrap()).unwrap();
        prop_assert!(l1(&pi_a, &restricted) <= 1e-8);
    }

    #[test]
    fn trace_is_transitive((k, a) in stochastic_with_subset(10), drop in any::<prop::sample::Index>()) {
        prop_assume!(a.len() >= 2);
        let gone = a.as_slice()[drop.index(a.len())];
        let b = IndexSet::new(a.iter().filter(|i| *i != gone).collect());
        let direct = trace_kernel(&k, &b).unwrap().rows();
        let nested = trace_kernel(&trace_kernel(&k, &a).unwrap(), &b).unwrap().rows();
        for (r, s) in direct.iter().zip(&nested) {
            for (x, y) in r.iter().zip(s) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn stochastic_spectrum_has_one_unit_eigenvalue_and_reconstructs(rows in positive_matrix(10)) {
        let k = KernelMatrix::stochastic(&normalize(&rows, 1.0)).unwrap();
        let n = k.dim();
        let d = eigendecompose(&k, n).unwrap();
        let ones = d.eigenvalues().iter().filter(|l| (**l - 1.0).norm() <= 1e-10).count();
        prop_assert_eq!(ones, 1);
        prop_assume!(d.defective_clusters().is_empty());
        let m = k.rows();
        let norm = 1.0;
        let mut worst: f64 = 0.0;
        for (i, row) in m.iter().enumerate() {
            let mut row_err = 0.0;
            for (j, mij) in row.iter().enumerate() {
                let mut s = faer::c64::new(0.0, 0.0);
                for (q, l) in d.eigenvalues().iter().enumerate() {
                    s += l * d.right(q)[i] * d.left(q)[j];
                }
                row_err += (s.re - mij).abs() + s.im.abs();
            }
            worst = worst.max(row_err);
        }
        prop_assert!(worst <= 1e-6 * norm, "{worst}");
    }

    #[test]
    fn qsd_is_a_fixed_point(rows in positive_matrix(10), mass in 0.5f64..0.99) {
        let k = KernelMatrix::substochastic(&normalize(&rows, mass)).unwrap();
        let sol = solve_killed(&k, 0).unwrap();
        let m = k.rows();
        let next: Vec<f64> = (0..m.len())
            .map(|j| sol.qsd.iter().zip(&m).map(|(q, r)| q * r[j]).sum::<f64>() / sol.eigenvalue)
            .collect();
        prop_assert!(l1(&next, &sol.qsd) <= 1e-8);
    }

    #[test]
    fn positivity_ratio_never_increases(rows in positive_matrix(8), mass in 0.5f64..0.99) {
        let k = KernelMatrix::substochastic(&normalize(&rows, mass)).unwrap();
        let r = check_uniform_positivity(&k, 1.000_001, 30).unwrap();
        for w in r.ratios.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn killed_kernel_is_the_submatrix((k, a) in stochastic_with_subset(10)) {
        prop_assume!(a.len() < k.dim());
        let sub = killed_kernel(&k, &a).unwrap().rows();
        let full = k.rows();
        for (r, i) in a.iter().enumerate() {
            for (c, j) in a.iter().enumerate() {
                prop_assert_eq!(sub[r][c], full[i][j]);
            }
        }
    }

    #[test]
    fn index_set_complement_partitions(n in 1usize..40, seed in any::<u64>()) {
        let mut rng = metareduce::montecarlo::rng_stream(seed, 0);
        let universe = IndexSet::range(n);
        let a = IndexSet::new((0..n).filter(|_| rng.random::<bool>()).collect());
        let c = a.complement_in(&universe);
        prop_assert_eq!(a.len() + c.len(), n);
        prop_assert!(a.is_subset_of(&universe) && c.is_subset_of(&universe));
        prop_assert!(a.iter().all(|i| !c.contains(i)));
    }

    #[test]
    fn dijkstra_ignores_edge_order(
        n in 2usize..30,
        edges in prop::collection::vec((0usize..30, 0usize..30, 0.0f64..5.0), 1..120),
        seed in any::<u64>(),
    ) {
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().map(|(a, b, w)| (a % n, b % n, w)).collect();
        let mut shuffled = edges.clone();
        let mut rng = metareduce::montecarlo::rng_stream(seed, 0);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let g = ActionGraph::from_edges(n, &edges).unwrap();
        let h = ActionGraph::from_edges(n, &shuffled).unwrap();
        let src = IndexSet::new(vec![0]);
        let (a, _) = shortest_paths(&g, &src);
        let (b, _) = shortest_paths(&h, &src);
        let (c, _) = shortest_paths(&g.with_reversed_adjacency(), &src);
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            prop_assert!(x == y || (x - y).abs() <= 1e-12);
            prop_assert!(x == z || (x - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn reduced_marginals_stay_probabilities(rows in positive_matrix(6), steps in 0usize..30) {
        let p = normalize(&rows, 1.0);
        for law in reduced_chain_marginals(&p, 0, steps) {
            prop_assert!(law.iter().all(|v| *v >= 0.0));
            prop_assert!((law.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn coarse_graining_a_partition_conserves_mass(
        rho in prop::collection::vec(0.0f64..1.0, 1..30),
        labels in prop::collection::vec(0usize..3, 30),
    ) {
        let psi: Vec<Vec<f64>> = (0..3)
            .map(|b| (0..rho.len()).map(|x| if labels[x] == b { 1.0 } else { 0.0 }).collect())
            .collect();
        let total: f64 = rho.iter().sum();
        let coarse: f64 = coarse_grain(&rho, &psi).iter().sum();
        prop_assert!((coarse - total).abs() <= 1e-12);
    }

    #[test]
    fn linear_fit_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0, xs in prop::collection::btree_set(-100i32..100, 3..20)) {
        let x: Vec<f64> = xs.iter().map(|v| *v as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let fit = linear_fit(&x, &y).unwrap();
        prop_assert!((fit.slope - a).abs() <= 1e-9 && (fit.intercept - b).abs() <= 1e-9);
    }

    #[test]
    fn parallel_runs_depend_only_on_seed_and_workers(seed in any::<u64>(), workers in 1usize..6, n in 0usize..200) {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, run: usize| Ok((run, rng.random::<u64>()));
        let a = run_parallel(n, workers, seed, draw).unwrap();
        let b = run_parallel(n, workers, seed, draw).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().enumerate().all(|(i, (run, _))| i == *run));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn odd_map_kernel_commutes_with_reflection(beta in 1.2f64..3.0, sigma in 0.2f64..0.8) {
        let model = DeterministicMapModel::tanh(beta, [-2.0, 2.0], sigma).unwrap();
        let grid = Grid::uniform(model.bounds(), 61).unwrap();
        let k = discretize_kernel(&model, &grid).unwrap().rows();
        let n = k.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((k[i][j] - k[n - 1 - i][n - 1 - j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fixed_point_indices_ignore_the_seed_lattice(beta in 1.2f64..4.0, seeds in 4usize..40) {
        let model = DeterministicMapModel::tanh(beta, [-2.0, 2.0], 0.3).unwrap();
        let a = find_fixed_points(&model, seeds).unwrap();
        let b = find_fixed_points(&model, 16).unwrap();
        prop_assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert_eq!(x.index, y.index);
            prop_assert!((x.location[0] - y.location[0]).abs() <= 1e-10);
        }
        let s1 = build_metastable_structure(&model, &a, 0.2).unwrap();
        let s2 = build_metastable_structure(&model, &a, 0.2).unwrap();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn config_roundtrips(sigma in 0.01f64..2.0, nodes in 51usize..1000, seed in any::<u64>(), workers in 1usize..64) {
        let text = format!(
            r#"{{"schema_version": 1, "map": {{"kind": "tanh", "beta": 2.0}}, "dim": 1,
                "covariance": [[1.0]], "sigma": {sigma}, "bounds": [[-2.0, 2.0]],
                "nodes_per_axis": {nodes}, "delta": 0.2, "r_hop": 1.0, "seed": {seed}, "workers": {workers}}}"#
        );
        let cfg = RunConfig::from_json(&text).unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(cfg.hash(), back.hash());
        prop_assert_eq!(cfg, back);
    }
}
