mod common;

use approx::assert_relative_eq;
use clmmse::markov::{marginal_mode_distribution, PathKey};
use clmmse::model::ModeMatrices;
use clmmse::riccati::reference::{kalman_reference, kalman_step, raw_tree};
use clmmse::riccati::{
    compute_gain, init_root_node, propagate_x, propagate_x_with, riccati_step, write_tree, read_tree, ZeroGains,
};
use clmmse::{
    build_tree, build_tree_with, cost_report, enumerate_partitions, fixtures, BuildOptions, Clustering, Error,
    Execution, MjlsModel,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn scalar_riccati_sequence() {
    let m = fixtures::scalar_single_mode();
    let tree = build_tree(&m, &Clustering::single(1), 3).unwrap();
    let z: Vec<f64> = (0..=3).map(|k| tree.node_at(k, 0).cov_view(0)[(0, 0)]).collect();
    assert_relative_eq!(z[0], 1.0);
    assert_relative_eq!(z[1], 1.5, max_relative = 1e-15);
    assert_relative_eq!(z[2], 1.6, max_relative = 1e-15);
    // Z₃ = 1.6 + 1 − 1.6²/2.6
    assert_relative_eq!(z[3], 2.6 - 1.6 * 1.6 / 2.6, max_relative = 1e-15);
    assert_relative_eq!(tree.node_at(0, 0).gain_view(0)[(0, 0)], 0.5, max_relative = 1e-15);
}

#[test]
fn noiseless_dynamics_halve_the_covariance() {
    let n = 2;
    let mode = ModeMatrices::new(
        DMatrix::identity(n, n),
        DMatrix::zeros(n, n),
        DMatrix::identity(n, n),
        DMatrix::identity(n, n),
    );
    let m = MjlsModel::new(
        vec![mode],
        DMatrix::identity(1, 1),
        DVector::from_element(1, 1.0),
        DVector::zeros(n),
        DMatrix::identity(n, n),
    )
    .unwrap();
    let tree = build_tree(&m, &Clustering::single(1), 1).unwrap();
    assert_relative_eq!(
        tree.node_at(1, 0).cov_view(0).into_owned(),
        DMatrix::identity(n, n) * 0.5,
        max_relative = 1e-15
    );
}

#[test]
fn chain_zero_gain_moments() {
    let m = fixtures::three_mode_chain();
    let c = Clustering::parse("{1,2}|{3}", 3).unwrap();
    let x = propagate_x(&m, &c, &ZeroGains::for_model(&m), 1).unwrap();
    let expected = [[1.1, 0.4, 0.1], [0.2, 0.0, 0.2]];
    for (ell, row) in expected.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            assert!((x.x(&[ell], i)[(0, 0)] - v).abs() <= 1e-12);
        }
    }
    assert!((x.expected_sq_error(1) - 2.0).abs() <= 1e-12);
}

#[test]
fn node_api_matches_tree() {
    let m = fixtures::toto();
    let c = Clustering::parse("{1,4}|{2,3}", 4).unwrap();
    let tree = build_tree(&m, &c, 3).unwrap();
    let root = init_root_node(&m).unwrap();
    let child = riccati_step(&root, 1, &m, &c).unwrap();
    let grand = riccati_step(&child, 0, &m, &c).unwrap();
    let node = tree.node(&[1, 0]).unwrap();
    assert_eq!(grand.path, PathKey::new(vec![1, 0]));
    for i in 0..4 {
        assert_eq!(grand.prob[i], node.prob(i));
        assert_eq!(grand.cond_cov[i], node.cov_view(i).into_owned());
        assert_eq!(grand.gains[i], node.gain_view(i).into_owned());
        let raw = compute_gain(&grand.y(i), grand.prob[i], m.mode(i)).unwrap();
        assert_relative_eq!(raw, grand.gains[i], max_relative = 1e-10);
    }
    assert!(matches!(riccati_step(&root, 2, &m, &c), Err(Error::Clustering(_))));
}

#[test]
fn normalized_and_raw_recursions_agree() {
    for seed in 0..6 {
        let m = fixtures::random_model(seed, 3, 2, 1);
        for c in enumerate_partitions(3).unwrap() {
            let tree = build_tree(&m, &c, 4).unwrap();
            let raw = raw_tree(&m, &c, 4);
            for depth in 0..=4 {
                for node in tree.nodes(depth) {
                    let r = &raw[depth][node.index()];
                    for i in 0..3 {
                        assert_relative_eq!(node.prob(i), r.prob[i], max_relative = 1e-12);
                        let y = node.y(i);
                        assert!(rel_err(&y, &r.y[i], 1e-300) <= 1e-9 || r.y[i].norm() < 1e-250);
                    }
                }
            }
        }
    }
}

#[test]
fn kalman_endpoint_with_singletons() {
    for seed in 0..5 {
        let m = fixtures::random_model(100 + seed, 3, 2, 1);
        let tree = build_tree(&m, &Clustering::singletons(3), 4).unwrap();
        for depth in 0..=4 {
            for node in tree.nodes(depth) {
                let path = modes_of(&node.path());
                let trace = kalman_reference(&m, &path);
                for i in 0..3 {
                    if !node.is_reachable(i) {
                        continue;
                    }
                    let mut theta = path.clone();
                    theta.push(i);
                    let z = trace.covs.last().unwrap();
                    let (_, gain) = kalman_step(m.mode(i), z);
                    assert!(rel_err(&node.gain_view(i).into_owned(), &gain, 1e-12) <= 1e-9);
                    let p = path_probability(&m, &theta);
                    assert_relative_eq!(node.prob(i), p, max_relative = 1e-12);
                    assert!(rel_err(&node.y(i), &(z * p), 1e-300) <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn lmmse_endpoint_with_one_cluster() {
    let m = fixtures::random_model(7, 4, 2, 2);
    let tree = build_tree(&m, &Clustering::single(4), 10).unwrap();
    for k in 0..=10 {
        let dist = marginal_mode_distribution(&m, k);
        for i in 0..4 {
            assert!((tree.node_at(k, 0).prob(i) - dist[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn fixed_point_of_the_moment_recursion() {
    let m = fixtures::data1();
    for c in enumerate_partitions(4).unwrap() {
        let tree = build_tree(&m, &c, 5).unwrap();
        let x = propagate_x(&m, &c, &tree, 5).unwrap();
        for depth in 0..=5 {
            for node in tree.nodes(depth) {
                for i in 0..4 {
                    let xi = x.x_at(depth, node.index(), i).into_owned();
                    assert!(rel_err(&xi, &node.y(i), 1e-300) <= 1e-10, "{c} depth {depth}");
                }
            }
        }
    }
}

#[test]
fn perturbed_gains_never_beat_the_tree() {
    let m = fixtures::toto();
    let c = Clustering::parse("{1,2}|{3,4}", 4).unwrap();
    let tree = build_tree(&m, &c, 4).unwrap();
    for seed in 0..10 {
        let policy = random_policy(&tree, seed, 0.3, 0.5, seed % 5 == 0);
        let x = propagate_x(&m, &c, &policy, 4).unwrap();
        for depth in 0..=4 {
            for node in tree.nodes(depth) {
                for i in 0..4 {
                    let diff = x.x_at(depth, node.index(), i).into_owned() - node.y(i);
                    let scale = node.y(i).trace().max(1e-300);
                    assert!(min_eig(&diff) >= -1e-9 * scale, "seed {seed}");
                }
            }
        }
    }
}

#[test]
fn one_step_perturbation_completes_the_square() {
    let m = fixtures::random_model(42, 3, 2, 2);
    let c = Clustering::parse("{1,3}|{2}", 3).unwrap();
    let tree = build_tree(&m, &c, 3).unwrap();
    let mut rng = clmmse::rng::stream(1, 0, clmmse::rng::Purpose::Policy);
    let depth = 1;
    for index in 0..tree.nodes_at(depth) {
        let deltas: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 2, 2, 0.5)).collect();
        let policy = one_node_perturbation(&tree, depth, index, &deltas);
        let x = propagate_x(&m, &c, &policy, depth + 1).unwrap();
        let parent = tree.node_at(depth, index);
        for ell in 0..c.n_clusters() {
            let child = index * c.n_clusters() + ell;
            for i in 0..3 {
                let mut expected = DMatrix::zeros(2, 2);
                for &j in c.members(ell) {
                    if parent.is_reachable(j) {
                        let phi = inner_matrix(&m, j, &parent.y(j), parent.prob(j));
                        expected += (&deltas[j] * phi * deltas[j].transpose()) * m.transition_prob(j, i);
                    }
                }
                let got = x.x_at(depth + 1, child, i).into_owned() - tree.node_at(depth + 1, child).y(i);
                assert!(rel_err(&got, &expected, 1e-300) <= 1e-9 || expected.norm() == 0.0);
            }
        }
    }
}

#[test]
fn refinement_never_increases_the_error() {
    let m = fixtures::data1();
    let parts = enumerate_partitions(4).unwrap();
    let mse: Vec<f64> = parts
        .iter()
        .map(|c| build_tree(&m, c, 6).unwrap().expected_sq_error(6).unwrap())
        .collect();
    let pairs = refinement_pairs(&parts);
    assert_eq!(pairs.len(), 45);
    for (fine, coarse) in pairs {
        assert!(mse[fine] <= mse[coarse] + 1e-9, "{} vs {}", parts[fine], parts[coarse]);
    }
}

#[test]
fn shorter_horizons_are_prefixes() {
    let m = fixtures::data1();
    let c = Clustering::parse("{1,2,3}|{4}", 4).unwrap();
    let full = build_tree(&m, &c, 6).unwrap();
    for s in 1..6 {
        let short = build_tree(&m, &c, s).unwrap();
        assert_eq!(full.truncated(s).unwrap(), short);
        for d in 0..=s {
            assert!(short.level_bits_equal(&full, d));
        }
    }
}

#[test]
fn execution_strategy_does_not_change_bits() {
    let m = fixtures::toto();
    let c = Clustering::singletons(4);
    let seq = BuildOptions {
        execution: Execution::Sequential,
        ..BuildOptions::default()
    };
    let a = build_tree_with(&m, &c, 6, &seq).unwrap();
    let b = build_tree(&m, &c, 6).unwrap();
    assert_eq!(a, b);
    let xa = propagate_x_with(&m, &c, &a, 6, Execution::Sequential).unwrap();
    let xb = propagate_x_with(&m, &c, &a, 6, Execution::Parallel).unwrap();
    assert_eq!(xa.expected_sq_error(6).to_bits(), xb.expected_sq_error(6).to_bits());
}

#[test]
fn counts_match_closed_forms() {
    let m = fixtures::data1();
    for c in enumerate_partitions(4).unwrap() {
        let tree = build_tree(&m, &c, 5).unwrap();
        let cost = cost_report(4, c.n_clusters(), 5).unwrap();
        assert_eq!(tree.gain_count() as u128, cost.gains);
        assert_eq!(tree.riccati_factorizations() as u128, cost.factorizations);
    }
}

#[test]
fn budget_is_enforced() {
    let m = fixtures::data1();
    let opts = BuildOptions {
        budget_scalars: 1000,
        ..BuildOptions::default()
    };
    let err = build_tree_with(&m, &Clustering::singletons(4), 5, &opts).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { .. }));
    assert!(err.to_string().contains("memory budget exceeded"));
}

#[test]
fn unreachable_nodes_have_zero_moments() {
    let m = fixtures::three_mode_chain();
    let tree = build_tree(&m, &Clustering::singletons(3), 2).unwrap();
    // mode 2 is never followed by modes 2 or 3
    let node = tree.node(&[1]).unwrap();
    assert!(!node.is_reachable(1));
    assert!(node.y(1).iter().all(|&v| v == 0.0));
    assert!(matches!(node.gain(1), Err(Error::Unreachable { .. })));
    assert!(matches!(node.conditional_covariance(2), Err(Error::ZeroProbability { .. })));
}

#[test]
fn tree_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    let tree = build_tree(&fixtures::data1(), &Clustering::parse("{1,2}|{3,4}", 4).unwrap(), 5).unwrap();
    write_tree(&tree, &path).unwrap();
    assert_eq!(read_tree(&path).unwrap(), tree);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_stay_psd(seed in 0u64..10_000, n_modes in 1usize..4, n in 1usize..4, p in 1usize..3) {
        let m = fixtures::random_model(seed, n_modes, n, p);
        let parts = enumerate_partitions(n_modes).unwrap();
        let c = &parts[(seed as usize) % parts.len()];
        let tree = build_tree(&m, c, 4).unwrap();
        for depth in 0..=4 {
            for node in tree.nodes(depth) {
                for i in 0..n_modes {
                    let y = node.y(i);
                    prop_assert!(min_eig(&y) >= -1e-10 * y.trace().abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_one(seed in 0u64..10_000, n_modes in 1usize..5) {
        let m = fixtures::random_model(seed, n_modes, 1, 1);
        let parts = enumerate_partitions(n_modes).unwrap();
        let c = &parts[(seed as usize) % parts.len()];
        let tree = build_tree(&m, c, 4).unwrap();
        for depth in 0..=4 {
            let total: f64 = tree.nodes(depth).map(|node| (0..n_modes).map(|i| node.prob(i)).sum::<f64>()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
