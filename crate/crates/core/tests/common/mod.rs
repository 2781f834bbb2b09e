#![allow(dead_code)]

use clmmse::markov::PathKey;
use clmmse::riccati::GainTable;
use clmmse::rng::{stream, Purpose};
use clmmse::{Clustering, GainTree, MjlsModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// `‖a − b‖_F / max(‖b‖_F, floor)`
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

pub fn random_matrix<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Gains for every reachable `(path, mode)` at depths `< s`.
///
/// Each gain is the tree's `M*` plus `scale·N(0,1)` noise with probability
/// `perturb_prob`, or fully random when `fully_random` is set.
pub fn random_policy(tree: &GainTree, seed: u64, scale: f64, perturb_prob: f64, fully_random: bool) -> GainTable {
    let mut rng = stream(seed, 0, Purpose::Policy);
    let model = tree.model();
    let mut table = GainTable::new();
    for depth in 0..tree.horizon() {
        for node in tree.nodes(depth) {
            for mode in 0..model.n_modes() {
                if !node.is_reachable(mode) {
                    continue;
                }
                let base = node.gain_view(mode).into_owned();
                let gain = if fully_random {
                    random_matrix(&mut rng, model.n(), model.p_dim(), 1.0)
                } else if rng.random::<f64>() < perturb_prob {
                    &base + random_matrix(&mut rng, model.n(), model.p_dim(), scale)
                } else {
                    base
                };
                table.insert(node.path().as_slice().to_vec(), mode, gain);
            }
        }
    }
    table
}

/// Optimal gains everywhere except node `(depth, index)`, where mode `j` gets `M* + deltas[j]`.
pub fn one_node_perturbation(tree: &GainTree, depth: usize, index: usize, deltas: &[DMatrix<f64>]) -> GainTable {
    let mut table = GainTable::new();
    for d in 0..tree.horizon() {
        for node in tree.nodes(d) {
            for mode in 0..tree.n_modes() {
                if !node.is_reachable(mode) {
                    continue;
                }
                let mut gain = node.gain_view(mode).into_owned();
                if d == depth && node.index() == index {
                    gain += &deltas[mode];
                }
                table.insert(node.path().as_slice().to_vec(), mode, gain);
            }
        }
    }
    table
}

/// `L Y L' + p H H'` for mode `j` at a node.
pub fn inner_matrix(model: &MjlsModel, j: usize, y: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let m = model.mode(j);
    &m.l * y * m.l.transpose() + (&m.h * m.h.transpose()) * p
}

/// Every pair `(fine, coarse)` of distinct clusterings where `fine` refines `coarse`.
pub fn refinement_pairs(parts: &[Clustering]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (a, fine) in parts.iter().enumerate() {
        for (b, coarse) in parts.iter().enumerate() {
            if a != b && fine.refines(coarse) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Mode path of a singleton-cluster tree node: the cluster path itself.
pub fn modes_of(path: &PathKey) -> Vec<usize> {
    path.as_slice().to_vec()
}

/// `π0 · ∏ P` along `theta`.
pub fn path_probability(model: &MjlsModel, theta: &[usize]) -> f64 {
    let mut p = model.initial_dist()[theta[0]];
    for w in theta.windows(2) {
        p *= model.transition_prob(w[0], w[1]);
    }
    p
}
