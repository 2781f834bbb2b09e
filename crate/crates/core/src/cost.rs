//! Storage and factorization counts of a gain tree.

use serde::Serialize;

use crate::{Error, Result};

/// Closed-form counts for `N` modes, `N_C` clusters and horizon `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub n_modes: usize,
    pub n_clusters: usize,
    pub horizon: usize,
    /// `N·N_C^k` matrices (Riccati solutions, and as many gains) at depth `k`, for `k < s`.
    pub per_depth: Vec<u128>,
    /// Gains to store for estimating `x_s`: `N(N_C^s − 1)/(N_C − 1)`, or `sN` when `N_C = 1`.
    pub gains: u128,
    /// Inner-matrix factorizations behind those gains' Riccati recursion:
    /// `N(N_C^{s−1} − 1)/(N_C − 1)`, or `(s − 1)N` when `N_C = 1`.
    pub factorizations: u128,
}

/// `Σ_{k<depths} N_C^k`
fn geometric(n_clusters: usize, depths: usize) -> u128 {
    let mut total: u128 = 0;
    let mut term: u128 = 1;
    for _ in 0..depths {
        total = total.saturating_add(term);
        term = term.saturating_mul(n_clusters as u128);
    }
    total
}

pub fn cost_report(n_modes: usize, n_clusters: usize, horizon: usize) -> Result<CostReport> {
    if n_modes == 0 || n_clusters == 0 || n_clusters > n_modes {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= N_C <= N (got N={n_modes}, N_C={n_clusters})"
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let n = n_modes as u128;
    let mut per_depth = Vec::with_capacity(horizon);
    let mut nodes: u128 = 1;
    for _ in 0..horizon {
        per_depth.push(n.saturating_mul(nodes));
        nodes = nodes.saturating_mul(n_clusters as u128);
    }
    Ok(CostReport {
        n_modes,
        n_clusters,
        horizon,
        per_depth,
        gains: n.saturating_mul(geometric(n_clusters, horizon)),
        factorizations: n.saturating_mul(geometric(n_clusters, horizon - 1)),
    })
}

impl CostReport {
    /// Scalars a tree of horizon `s` allocates: every depth `0..=s` holds, per
    /// node and mode, one weight, an `n×n` covariance and an `n×p` gain.
    pub fn tree_scalars(n_modes: usize, n_clusters: usize, horizon: usize, n: usize, p_dim: usize) -> u128 {
        let slots = (n_modes as u128).saturating_mul(geometric(n_clusters, horizon + 1));
        let per_slot = (n * n + n * p_dim + 1) as u128;
        slots.saturating_mul(per_slot)
    }
}
