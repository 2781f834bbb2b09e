//! Coupled Riccati recursion over cluster paths.
//!
//! For a parent path `ℓ_0 … ℓ_{k-2}` and observed cluster `ℓ = ℓ_{k-1}`:
//!
//! ```text
//! Y_child[i] = Σ_{j ∈ S_ℓ, p_j > 0} P[j][i] · ( A_j Y_j A_j' + p_j G_j G_j'
//!              − A_j Y_j L_j' (L_j Y_j L_j' + p_j H_j H_j')^{-1} L_j Y_j A_j' )
//! M*[j]      = A_j Y_j L_j' (L_j Y_j L_j' + p_j H_j H_j')^{-1}
//! ```
//!
//! The correction term is subtracted: completion of squares produces this
//! sign, and with singleton clusters it collapses to the Kalman Riccati equation.

mod container;
mod kernel;
mod propagate;
pub mod reference;
mod tree;

pub use container::{read_tree, write_tree, TREE_FORMAT_VERSION};
pub use propagate::{propagate_x, propagate_x_with, x_step, FnGains, GainPolicy, GainTable, MomentTree, ZeroGains};
pub use tree::{
    build_tree, build_tree_with, BuildOptions, GainTree, NodeRef, BUDGET_ENV, DEFAULT_BUDGET_SCALARS,
};

use nalgebra::{DMatrix, DMatrixView};

use crate::markov::{is_zero_prob, PathKey};
use crate::model::{Clustering, MjlsModel, ModeMatrices};
use crate::{Error, Result};
use kernel::Kernel;

/// Optimal gain from the joint moment `Y_i` and weight `p_i`:
/// `A Y L' (L Y L' + p H H')^{-1}`, zero when `p_i = 0`.
pub fn compute_gain(y: &DMatrix<f64>, p: f64, mode: &ModeMatrices) -> Result<DMatrix<f64>> {
    let (n, p_dim) = (mode.a.nrows(), mode.l.nrows());
    if is_zero_prob(p) {
        return Ok(DMatrix::zeros(n, p_dim));
    }
    let ayl = &mode.a * y * mode.l.transpose();
    let inner = &mode.l * y * mode.l.transpose() + mode.output_noise() * p;
    let chol = nalgebra::Cholesky::new(inner).ok_or(Error::SingularInnerMatrix {
        depth: 0,
        node: 0,
        mode: 0,
    })?;
    Ok(chol.solve(&ayl.transpose()).transpose())
}

/// Owned snapshot of one node: per mode the weight, conditional covariance and gain.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    pub path: PathKey,
    pub prob: Vec<f64>,
    /// `Ȳ_i = Y_i / p_i`; zero where unreachable.
    pub cond_cov: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
}

impl NodeData {
    pub fn is_reachable(&self, i: usize) -> bool {
        !is_zero_prob(self.prob[i])
    }

    /// `Y_i = p_i · Ȳ_i`
    pub fn y(&self, i: usize) -> DMatrix<f64> {
        if self.is_reachable(i) {
            &self.cond_cov[i] * self.prob[i]
        } else {
            DMatrix::zeros(self.cond_cov[i].nrows(), self.cond_cov[i].ncols())
        }
    }

    pub fn conditional_covariance(&self, i: usize) -> Result<DMatrix<f64>> {
        if self.is_reachable(i) {
            Ok(self.cond_cov[i].clone())
        } else {
            Err(Error::ZeroProbability { mode: i + 1 })
        }
    }

    fn flat(&self) -> (Vec<f64>, Vec<f64>) {
        let cov = self.cond_cov.iter().flat_map(|m| m.iter().copied()).collect();
        (self.prob.clone(), cov)
    }
}

impl From<NodeRef<'_>> for NodeData {
    fn from(node: NodeRef<'_>) -> Self {
        let n_modes = node.n_modes();
        Self {
            path: node.path(),
            prob: (0..n_modes).map(|i| node.prob(i)).collect(),
            cond_cov: (0..n_modes).map(|i| node.cov_view(i).into_owned()).collect(),
            gains: (0..n_modes).map(|i| node.gain_view(i).into_owned()).collect(),
        }
    }
}

fn gains_for(kernel: &Kernel, prob: &[f64], cov: &[f64], depth: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = kernel.n;
    let nn = n * n;
    (0..prob.len())
        .map(|j| {
            if is_zero_prob(prob[j]) {
                return Ok(DMatrix::zeros(n, kernel.p_dim));
            }
            let ybar = DMatrixView::from_slice(&cov[j * nn..(j + 1) * nn], n, n);
            kernel
                .update(j, ybar)
                .map(|u| u.gain)
                .ok_or(Error::SingularInnerMatrix { depth, node: 0, mode: j })
        })
        .collect()
}

fn unflatten(n: usize, cov: &[f64]) -> Vec<DMatrix<f64>> {
    cov.chunks(n * n).map(|c| DMatrix::from_column_slice(n, n, c)).collect()
}

/// Root node: `p = π0`, `Y_i = π_i(0)·Ψ`, with gains.
pub fn init_root_node(model: &MjlsModel) -> Result<NodeData> {
    let n = model.n();
    let prob: Vec<f64> = model.initial_dist().iter().copied().collect();
    let cond_cov: Vec<DMatrix<f64>> = prob
        .iter()
        .map(|&p| {
            if is_zero_prob(p) {
                DMatrix::zeros(n, n)
            } else {
                model.init_cov().clone()
            }
        })
        .collect();
    let flat: Vec<f64> = cond_cov.iter().flat_map(|m| m.iter().copied()).collect();
    let gains = gains_for(&Kernel::new(model), &prob, &flat, 0)?;
    Ok(NodeData {
        path: PathKey::root(),
        prob,
        cond_cov,
        gains,
    })
}

/// Child of `parent` after observing cluster `ell` (0-based), with its gains.
pub fn riccati_step(parent: &NodeData, ell: usize, model: &MjlsModel, clustering: &Clustering) -> Result<NodeData> {
    if ell >= clustering.n_clusters() {
        return Err(Error::Clustering(format!(
            "cluster {} out of range 1..={}",
            ell + 1,
            clustering.n_clusters()
        )));
    }
    let kernel = Kernel::new(model);
    let n = model.n();
    let n_modes = model.n_modes();
    let n_clusters = clustering.n_clusters();
    let (prob, cov) = parent.flat();
    let mut scratch_gain = vec![0.0; n_modes * n * model.p_dim()];
    let mut child_prob = vec![0.0; n_clusters * n_modes];
    let mut child_cov = vec![0.0; n_clusters * n_modes * n * n];
    tree::expand_node(
        &kernel,
        model,
        clustering,
        parent.path.len(),
        0,
        &prob,
        &cov,
        &mut scratch_gain,
        Some((&mut child_prob, &mut child_cov)),
    )?;
    let prob = child_prob[ell * n_modes..(ell + 1) * n_modes].to_vec();
    let cov = &child_cov[ell * n_modes * n * n..(ell + 1) * n_modes * n * n];
    let gains = gains_for(&kernel, &prob, cov, parent.path.len() + 1)?;
    Ok(NodeData {
        path: parent.path.child(ell),
        prob,
        cond_cov: unflatten(n, cov),
        gains,
    })
}
