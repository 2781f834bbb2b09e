//! Reference recursions used to cross-check the gain tree.
//!
//! These work on raw quantities with explicit LU inverses and do not share
//! code with the normalized tree build.

use nalgebra::DMatrix;

use crate::markov::is_zero_prob;
use crate::model::{Clustering, MjlsModel, ModeMatrices};

/// Covariances `Z_0..Z_m` and gains `K_0..K_{m-1}` of the Kalman predictor along a mode path.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrace {
    pub covs: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
}

fn inverse(m: DMatrix<f64>) -> DMatrix<f64> {
    m.try_inverse().expect("inner matrix is invertible when H H' > 0")
}

/// One Riccati step `Z ↦ A Z A' + G G' − A Z L'(L Z L' + H H')^{-1} L Z A'`, with its gain.
pub fn kalman_step(mode: &ModeMatrices, z: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let hh = &mode.h * mode.h.transpose();
    let gg = &mode.g * mode.g.transpose();
    let inv = inverse(&mode.l * z * mode.l.transpose() + hh);
    let gain = &mode.a * z * mode.l.transpose() * &inv;
    let next = &mode.a * z * mode.a.transpose() + gg - &mode.a * z * mode.l.transpose() * &inv * &mode.l * z * mode.a.transpose();
    (next, gain)
}

/// Kalman predictor along `theta` (0-based modes), starting from `Z_0 = Ψ`.
pub fn kalman_reference(model: &MjlsModel, theta: &[usize]) -> KalmanTrace {
    let mut covs = vec![model.init_cov().clone()];
    let mut gains = Vec::with_capacity(theta.len());
    for &j in theta {
        let (next, gain) = kalman_step(model.mode(j), covs.last().expect("Z_0"));
        covs.push(next);
        gains.push(gain);
    }
    KalmanTrace { covs, gains }
}

/// Node of the raw recursion: per mode the joint weight and `Y` (not normalized).
#[derive(Debug, Clone)]
pub struct RawNode {
    pub prob: Vec<f64>,
    pub y: Vec<DMatrix<f64>>,
}

/// The coupled Riccati step on raw `Y` for one observed cluster `ell`:
/// `Σ_{j∈S_ℓ, p_j>0} P[j][i] (A Y A' + p G G' − A Y L'(L Y L' + p H H')^{-1} L Y A')`.
pub fn raw_riccati_step(model: &MjlsModel, clustering: &Clustering, parent: &RawNode, ell: usize) -> RawNode {
    let n = model.n();
    let n_modes = model.n_modes();
    let mut prob = vec![0.0; n_modes];
    let mut y = vec![DMatrix::zeros(n, n); n_modes];
    for &j in clustering.members(ell) {
        let pj = parent.prob[j];
        if is_zero_prob(pj) {
            continue;
        }
        let m = model.mode(j);
        let yj = &parent.y[j];
        let inv = inverse(&m.l * yj * m.l.transpose() + (&m.h * m.h.transpose()) * pj);
        let term = &m.a * yj * m.a.transpose() + (&m.g * m.g.transpose()) * pj
            - &m.a * yj * m.l.transpose() * inv * &m.l * yj * m.a.transpose();
        for i in 0..n_modes {
            let w = model.transition_prob(j, i);
            prob[i] += pj * w;
            y[i] += &term * w;
        }
    }
    for i in 0..n_modes {
        if is_zero_prob(prob[i]) {
            y[i].fill(0.0);
        }
    }
    RawNode { prob, y }
}

/// Raw recursion for every depth `0..=s`, nodes in path-index order.
pub fn raw_tree(model: &MjlsModel, clustering: &Clustering, s: usize) -> Vec<Vec<RawNode>> {
    let root = RawNode {
        prob: model.initial_dist().iter().copied().collect(),
        y: model.initial_dist().iter().map(|&p| model.init_cov() * p).collect(),
    };
    let mut levels = vec![vec![root]];
    for _ in 0..s {
        let next = levels
            .last()
            .expect("root")
            .iter()
            .flat_map(|node| {
                (0..clustering.n_clusters())
                    .map(|ell| raw_riccati_step(model, clustering, node, ell))
                    .collect::<Vec<_>>()
            })
            .collect();
        levels.push(next);
    }
    levels
}

/// Open-loop moment step (no measurement correction).
pub fn open_loop_step(model: &MjlsModel, clustering: &Clustering, parent: &RawNode, ell: usize) -> RawNode {
    let n = model.n();
    let n_modes = model.n_modes();
    let mut prob = vec![0.0; n_modes];
    let mut y = vec![DMatrix::zeros(n, n); n_modes];
    for &j in clustering.members(ell) {
        let pj = parent.prob[j];
        if is_zero_prob(pj) {
            continue;
        }
        let m = model.mode(j);
        let term = &m.a * &parent.y[j] * m.a.transpose() + (&m.g * m.g.transpose()) * pj;
        for i in 0..n_modes {
            let w = model.transition_prob(j, i);
            prob[i] += pj * w;
            y[i] += &term * w;
        }
    }
    RawNode { prob, y }
}
