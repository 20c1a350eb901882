mod common;

use common::*;
use hybridopt::data::{
    corrupt_entries, gen_random_graph, gen_sparse_instance, gen_uniform_ls, load_edge_list, subgraph_problem, Graph,
    MatrixKind, NoiseKind,
};
use hybridopt::driver::{certify_block_k, init_point, run, TieRule};
use hybridopt::{SelectionStrategy, SolverConfig};
use nalgebra::DVector;
use proptest::prelude::*;
use std::io::Write;

#[test]
fn uniform_mean_is_one_half() {
    let (a, _) = gen_uniform_ls(100, 200, 5);
    let mean = a.mean();
    assert!((mean - 0.5).abs() <= 0.02, "{mean}");
}

#[test]
fn planted_support_has_exact_size() {
    for seed in 0..10u64 {
        let inst = gen_sparse_instance(30, 50, 7, MatrixKind::AI, NoiseKind::BI, seed).unwrap();
        assert_eq!(inst.x_true.iter().filter(|v| **v != 0.0).count(), 7);
        assert_eq!(inst.b, &inst.a * &inst.x_true + &inst.noise);
    }
    assert!(gen_sparse_instance(5, 4, 5, MatrixKind::AI, NoiseKind::BI, 0).is_err());
}

#[test]
fn corrupted_matrix_differs_in_two_percent() {
    let (m, n) = (40, 75);
    for seed in 0..5u64 {
        let clean = gen_sparse_instance(m, n, 3, MatrixKind::AI, NoiseKind::BI, seed).unwrap();
        let dirty = gen_sparse_instance(m, n, 3, MatrixKind::AII, NoiseKind::BI, seed).unwrap();
        let want = (0.02 * (m * n) as f64).round() as usize;
        let mut diff = 0;
        for (c, d) in clean.a.iter().zip(dirty.a.iter()) {
            if c != d {
                diff += 1;
                assert_eq!(*d, c * 100.0);
            }
        }
        assert_eq!(diff, want);
        assert_eq!(clean.x_true, dirty.x_true);
    }
}

#[test]
fn corrupted_noise_is_scaled_in_place() {
    let clean = gen_sparse_instance(200, 10, 2, MatrixKind::AI, NoiseKind::BI, 9).unwrap();
    let dirty = gen_sparse_instance(200, 10, 2, MatrixKind::AI, NoiseKind::BII, 9).unwrap();
    let changed: Vec<usize> = (0..200).filter(|&i| clean.noise[i] != dirty.noise[i]).collect();
    assert_eq!(changed.len(), 4);
    for i in changed {
        assert_eq!(dirty.noise[i], clean.noise[i] * 100.0);
    }
    let quiet = gen_sparse_instance(20, 10, 2, MatrixKind::AI, NoiseKind::Noiseless, 9).unwrap();
    assert_eq!(quiet.b, &quiet.a * &quiet.x_true);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupt_touches_exactly_round_frac(seed in any::<u64>(), m in 1usize..20, n in 1usize..20, frac in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let x = gauss_mat(&mut r, m, n);
        let y = corrupt_entries(&x, frac, 100.0, &mut r).unwrap();
        let changed = x.iter().zip(y.iter()).filter(|(a, b)| a != b).count();
        // a zero entry would hide a change; Gaussian draws are never exactly zero
        prop_assert_eq!(changed, (frac * (m * n) as f64).round() as usize);
        for (a, b) in x.iter().zip(y.iter()) {
            prop_assert!(a == b || *b == a * 100.0);
        }
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(gen_uniform_ls(4, 6, seed), gen_uniform_ls(4, 6, seed));
        let a = gen_sparse_instance(8, 10, 3, MatrixKind::AII, NoiseKind::BII, seed).unwrap();
        let b = gen_sparse_instance(8, 10, 3, MatrixKind::AII, NoiseKind::BII, seed).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(gen_random_graph(9, 0.4, seed).unwrap(), gen_random_graph(9, 0.4, seed).unwrap());
    }

    #[test]
    fn random_graphs_are_simple(seed in any::<u64>(), n in 1usize..20, p in 0.0f64..=1.0) {
        let g = gen_random_graph(n, p, seed).unwrap();
        prop_assert!(g.check());
        let upper = (0..n).map(|j| (0..j).filter(|&i| g.w[(i, j)] == 1.0).count()).sum::<usize>();
        prop_assert_eq!(g.edge_count, upper);
    }
}

fn write_edges(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn edge_list_files_load() {
    let f = write_edges("# header\n0 1\n1 2\n2 1\n2 2\n");
    let g = load_edge_list(f.path()).unwrap();
    assert_eq!((g.n, g.edge_count), (3, 2));
    assert!(g.check());
    let bad = write_edges("0 1\n1 q\n");
    assert!(load_edge_list(bad.path()).unwrap_err().to_string().contains('2'));
}

/// Minimum of `−xᵀWx` over all `s`-subsets.
fn brute_subgraph(g: &Graph, s: usize) -> f64 {
    let mut best = f64::INFINITY;
    for mask in 0..1u64 << g.n {
        if mask.count_ones() as usize != s {
            continue;
        }
        let idx: Vec<usize> = (0..g.n).filter(|&j| mask >> j & 1 == 1).collect();
        let mut val = 0.0;
        for &i in &idx {
            for &j in &idx {
                val -= g.w[(i, j)];
            }
        }
        best = best.min(val);
    }
    best
}

#[test]
fn small_graph_optima() {
    let k4 = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
    let p3 = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    for (g, s, want) in [(&k4, 3, -6.0), (&p3, 2, -2.0)] {
        assert_eq!(brute_subgraph(g, s), want);
        let prob = subgraph_problem(g, s, 0.0).unwrap();
        let x0 = init_point(&prob.penalty, g.n, 1.0, &mut rng(0));
        let trace = run(&prob, &x0, &SolverConfig::new(SelectionStrategy::Cyclic { k: g.n })).unwrap();
        assert_eq!(trace.final_objective(), want);
        assert_eq!(g.induced_edges(&trace.x), -want / 2.0);
    }
}

#[test]
fn subgraph_search_matches_brute_force() {
    let mut optimal = 0;
    for seed in 0..5u64 {
        let g = gen_random_graph(12, 0.3, seed).unwrap();
        let prob = subgraph_problem(&g, 4, 0.0).unwrap();
        let x0 = init_point(&prob.penalty, 12, 1.0, &mut rng(seed));
        let mut cfg = SolverConfig::new(SelectionStrategy::Cyclic { k: 2 });
        cfg.max_iter = 100_000;
        let trace = run(&prob, &x0, &cfg).unwrap();
        assert!(certify_block_k(&prob, &trace.x, 2, TieRule::default()).unwrap().certified);
        let x: DVector<f64> = trace.x.clone();
        assert_eq!(x.iter().filter(|v| **v == 1.0).count(), 4);
        if trace.final_objective() == brute_subgraph(&g, 4) {
            optimal += 1;
        }
    }
    assert!(optimal >= 3, "{optimal}/5");
}
