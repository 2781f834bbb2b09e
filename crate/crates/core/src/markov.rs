//! Mode chain sampling and cluster-path probabilities.
//!
//! For an observed cluster path `ℓ_0 … ℓ_{k-1}` the joint weights
//! `α[i] = Pr(ρ(0)=ℓ_0, …, ρ(k-1)=ℓ_{k-1}, θ(k)=i)` obey
//! `α_child[i] = Σ_{j ∈ S_ℓ} α_parent[j] · P[j][i]`, starting from `π0`.
//! Weights are kept unnormalized.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;

use crate::model::{Clustering, MjlsModel};

/// Weights below this are treated as exact zeros.
pub const ZERO_PROB: f64 = 1e-300;

#[inline]
pub fn is_zero_prob(p: f64) -> bool {
    p < ZERO_PROB
}

/// Sequence of observed cluster indices `ρ(0..k-1)` (0-based). Empty at the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey(Vec<usize>);

impl PathKey {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn new(clusters: Vec<usize>) -> Self {
        Self(clusters)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn push(&mut self, cluster: usize) {
        self.0.push(cluster);
    }

    pub fn child(&self, cluster: usize) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(cluster);
        Self(v)
    }

    /// Position among the `n_clusters^k` paths of the same length, `ℓ_0` most significant.
    pub fn index(&self, n_clusters: usize) -> usize {
        self.0.iter().fold(0, |acc, &c| acc * n_clusters + c)
    }

    /// Inverse of [`PathKey::index`].
    pub fn from_index(mut index: usize, depth: usize, n_clusters: usize) -> Self {
        let mut v = vec![0; depth];
        for slot in v.iter_mut().rev() {
            *slot = index % n_clusters;
            index /= n_clusters;
        }
        Self(v)
    }
}

impl fmt::Display for PathKey {
    /// 1-based, e.g. `(1,2,2)`; the root prints as `()`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|c| (c + 1).to_string()).collect();
        write!(f, "({})", items.join(","))
    }
}

/// Joint weights `α[i]` for one cluster path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDistribution {
    pub path: PathKey,
    pub alpha: Vec<f64>,
}

impl PathDistribution {
    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Weights at `k = 0`: the initial mode law.
pub fn root_distribution(model: &MjlsModel) -> PathDistribution {
    PathDistribution {
        path: PathKey::root(),
        alpha: model.initial_dist().iter().copied().collect(),
    }
}

/// Extends `parent` by observing cluster `ell` (0-based).
pub fn step_distribution(
    parent: &PathDistribution,
    ell: usize,
    model: &MjlsModel,
    clustering: &Clustering,
) -> PathDistribution {
    let n_modes = model.n_modes();
    let mut alpha = vec![0.0; n_modes];
    step_weights(&parent.alpha, clustering.members(ell), model, &mut alpha);
    PathDistribution {
        path: parent.path.child(ell),
        alpha,
    }
}

/// `out[i] = Σ_{j ∈ members} parent[j]·P[j][i]`, skipping zero-weight `j`.
pub(crate) fn step_weights(parent: &[f64], members: &[usize], model: &MjlsModel, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for &j in members {
        let pj = parent[j];
        if is_zero_prob(pj) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += pj * model.transition_prob(j, i);
        }
    }
}

/// `π0 · P^k`
pub fn marginal_mode_distribution(model: &MjlsModel, k: usize) -> DVector<f64> {
    let mut dist = model.initial_dist().transpose();
    for _ in 0..k {
        dist = &dist * model.transition();
    }
    dist.transpose()
}

/// Draws an index from an unnormalized-safe probability row.
pub(crate) fn draw_categorical<R: Rng + ?Sized>(weights: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.into_iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass
    last_positive
}

/// Samples `θ(0..=s)`.
pub fn sample_chain<R: Rng + ?Sized>(model: &MjlsModel, s: usize, rng: &mut R) -> Vec<usize> {
    let mut theta = Vec::with_capacity(s + 1);
    let mut current = draw_categorical(model.initial_dist().iter().copied(), rng);
    theta.push(current);
    for _ in 0..s {
        current = draw_categorical(model.transition().row(current).iter().copied(), rng);
        theta.push(current);
    }
    theta
}
