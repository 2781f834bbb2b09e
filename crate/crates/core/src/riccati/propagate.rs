//! Error second moments for arbitrary feasible gains.
//!
//! `X_{ℓ_0..ℓ_{k-1}, i, k}(M) = E[x̃_k x̃_k' 1{ρ(0..k-1) = ℓ, θ(k) = i}]` evolves as
//!
//! ```text
//! X_child[i] = Σ_{j ∈ S_ℓ, p_j > 0} P[j][i] · ( (A_j − M_j L_j) X_j (A_j − M_j L_j)'
//!                                           + p_j (G_j − M_j H_j)(G_j − M_j H_j)' )
//! ```
//!
//! where `M_j` is the gain the policy applies at the parent path with mode `j`.
//! This works on raw (unnormalized) moments and shares no code with the tree build.

use std::collections::HashMap;

use nalgebra::{DMatrix, DMatrixView};

use super::GainTree;
use crate::markov::{is_zero_prob, PathKey};
use crate::model::{Clustering, MjlsModel};
use crate::par::{for_each_chunk3, Execution};
use crate::{Error, Result};

/// A feasible gain sequence: the gain at time `k = path.len()` may depend only
/// on the observed clusters `ρ(0..k-1)` and the current mode `θ(k)`.
pub trait GainPolicy: Sync {
    /// Gain for cluster path `path` (0-based clusters) and mode `mode` (0-based).
    fn gain(&self, path: &[usize], mode: usize) -> Result<DMatrix<f64>>;
}

impl GainPolicy for GainTree {
    fn gain(&self, path: &[usize], mode: usize) -> Result<DMatrix<f64>> {
        Ok(self.node(path)?.gain(mode)?.into_owned())
    }
}

impl<P: GainPolicy + ?Sized> GainPolicy for &P {
    fn gain(&self, path: &[usize], mode: usize) -> Result<DMatrix<f64>> {
        (**self).gain(path, mode)
    }
}

/// `M ≡ 0`: pure open-loop prediction.
#[derive(Debug, Clone, Copy)]
pub struct ZeroGains {
    pub n: usize,
    pub p_dim: usize,
}

impl ZeroGains {
    pub fn for_model(model: &MjlsModel) -> Self {
        Self {
            n: model.n(),
            p_dim: model.p_dim(),
        }
    }
}

impl GainPolicy for ZeroGains {
    fn gain(&self, _path: &[usize], _mode: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.n, self.p_dim))
    }
}

/// Explicit table keyed by `(path, mode)`; missing entries are errors.
#[derive(Debug, Clone, Default)]
pub struct GainTable {
    entries: HashMap<(Vec<usize>, usize), DMatrix<f64>>,
}

impl GainTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: Vec<usize>, mode: usize, gain: DMatrix<f64>) {
        self.entries.insert((path, mode), gain);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl GainPolicy for GainTable {
    fn gain(&self, path: &[usize], mode: usize) -> Result<DMatrix<f64>> {
        self.entries
            .get(&(path.to_vec(), mode))
            .cloned()
            .ok_or_else(|| Error::MissingGain {
                path: PathKey::new(path.to_vec()).to_string(),
                mode: mode + 1,
            })
    }
}

/// Policy backed by a closure.
pub struct FnGains<F>(pub F);

impl<F> GainPolicy for FnGains<F>
where
    F: Fn(&[usize], usize) -> Result<DMatrix<f64>> + Sync,
{
    fn gain(&self, path: &[usize], mode: usize) -> Result<DMatrix<f64>> {
        (self.0)(path, mode)
    }
}

#[derive(Debug, Clone)]
struct MomentLevel {
    prob: Vec<f64>,
    // column-major n×n blocks
    x: Vec<f64>,
}

/// The `X` moments of every node at depths `0..=s` for one gain policy.
#[derive(Debug, Clone)]
pub struct MomentTree {
    n: usize,
    n_modes: usize,
    n_clusters: usize,
    horizon: usize,
    levels: Vec<MomentLevel>,
}

impl MomentTree {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes_at(&self, depth: usize) -> usize {
        self.levels[depth].prob.len() / self.n_modes
    }

    pub fn prob_at(&self, depth: usize, node: usize, mode: usize) -> f64 {
        self.levels[depth].prob[node * self.n_modes + mode]
    }

    pub fn x_at(&self, depth: usize, node: usize, mode: usize) -> DMatrixView<'_, f64> {
        let nn = self.n * self.n;
        let slot = node * self.n_modes + mode;
        DMatrixView::from_slice(&self.levels[depth].x[slot * nn..(slot + 1) * nn], self.n, self.n)
    }

    /// `X` for a 0-based cluster path and mode.
    pub fn x(&self, path: &[usize], mode: usize) -> DMatrixView<'_, f64> {
        let idx = path.iter().fold(0, |acc, &c| acc * self.n_clusters + c);
        self.x_at(path.len(), idx, mode)
    }

    /// `Σ trace(X)` over depth `k`.
    pub fn expected_sq_error(&self, k: usize) -> f64 {
        let n = self.n;
        self.levels[k]
            .x
            .chunks(n * n)
            .map(|c| (0..n).map(|d| c[d * n + d]).sum::<f64>())
            .sum()
    }
}

/// One step of the `X` recursion for a single parent node.
///
/// `gains[j]` is the gain applied with mode `j`; it is only read where
/// `parent_prob[j]` is non-zero. Returns `(p_child, X_child)` for cluster `ell`.
pub fn x_step(
    model: &MjlsModel,
    clustering: &Clustering,
    parent_prob: &[f64],
    parent_x: &[DMatrix<f64>],
    gains: &[DMatrix<f64>],
    ell: usize,
) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = model.n();
    let members = clustering.members(ell);
    let contributions: Vec<Option<DMatrix<f64>>> = (0..model.n_modes())
        .map(|j| {
            if is_zero_prob(parent_prob[j]) || !members.contains(&j) {
                return None;
            }
            let mode = model.mode(j);
            let closed = &mode.a - &gains[j] * &mode.l;
            let noise = &mode.g - &gains[j] * &mode.h;
            Some(&closed * &parent_x[j] * closed.transpose() + (&noise * noise.transpose()) * parent_prob[j])
        })
        .collect();
    let mut prob = vec![0.0; model.n_modes()];
    let mut x = vec![DMatrix::zeros(n, n); model.n_modes()];
    for i in 0..model.n_modes() {
        for &j in members {
            if let Some(c) = &contributions[j] {
                let w = model.transition_prob(j, i);
                prob[i] += parent_prob[j] * w;
                x[i] += c * w;
            }
        }
        if is_zero_prob(prob[i]) {
            x[i].fill(0.0);
        } else {
            x[i] = (&x[i] + x[i].transpose()) * 0.5;
        }
    }
    (prob, x)
}

/// Moments of the estimation error under `policy` for depths `0..=s`.
pub fn propagate_x<P: GainPolicy + ?Sized>(
    model: &MjlsModel,
    clustering: &Clustering,
    policy: &P,
    s: usize,
) -> Result<MomentTree> {
    propagate_x_with(model, clustering, policy, s, Execution::default())
}

pub fn propagate_x_with<P: GainPolicy + ?Sized>(
    model: &MjlsModel,
    clustering: &Clustering,
    policy: &P,
    s: usize,
    exec: Execution,
) -> Result<MomentTree> {
    let n_modes = model.n_modes();
    let n_clusters = clustering.n_clusters();
    let root_prob: Vec<f64> = model.initial_dist().iter().copied().collect();
    let root_x = root_prob
        .iter()
        .flat_map(|&p| (model.init_cov() * p).as_slice().to_vec())
        .collect();
    let mut levels = vec![MomentLevel {
        prob: root_prob,
        x: root_x,
    }];

    let n = model.n();
    let nn = n * n;
    for depth in 0..s {
        let parent = levels.last().expect("root level");
        let nodes = parent.prob.len() / n_modes;
        let stride = n_clusters * n_modes;
        let mut level = MomentLevel {
            prob: vec![0.0; nodes * stride],
            x: vec![0.0; nodes * stride * nn],
        };
        let mut unused: [(); 0] = [];
        for_each_chunk3(
            exec,
            nodes,
            (level.prob.as_mut_slice(), stride),
            (level.x.as_mut_slice(), stride * nn),
            (&mut unused[..], 0),
            |idx, child_prob, child_x, _| -> Result<usize> {
                let prob = &parent.prob[idx * n_modes..(idx + 1) * n_modes];
                let x: Vec<DMatrix<f64>> = parent.x[idx * n_modes * nn..(idx + 1) * n_modes * nn]
                    .chunks(nn)
                    .map(|c| DMatrix::from_column_slice(n, n, c))
                    .collect();
                let path = PathKey::from_index(idx, depth, n_clusters);
                let gains = (0..n_modes)
                    .map(|j| {
                        if is_zero_prob(prob[j]) {
                            Ok(DMatrix::zeros(n, model.p_dim()))
                        } else {
                            policy.gain(path.as_slice(), j)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                for ell in 0..n_clusters {
                    let (p, xs) = x_step(model, clustering, prob, &x, &gains, ell);
                    child_prob[ell * n_modes..(ell + 1) * n_modes].copy_from_slice(&p);
                    for (i, xi) in xs.iter().enumerate() {
                        let slot = ell * n_modes + i;
                        child_x[slot * nn..(slot + 1) * nn].copy_from_slice(xi.as_slice());
                    }
                }
                Ok(0)
            },
        )?;
        levels.push(level);
    }

    Ok(MomentTree {
        n: model.n(),
        n_modes,
        n_clusters,
        horizon: s,
        levels,
    })
}
