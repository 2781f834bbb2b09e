use nalgebra::{DMatrix, DMatrixView};

use super::kernel::{symmetrize, Kernel};
use crate::cost::CostReport;
use crate::markov::{is_zero_prob, PathKey};
use crate::model::{Clustering, MjlsModel};
use crate::par::{for_each_chunk3, Execution};
use crate::{Error, Result};

/// Default cap on the number of scalars a tree may allocate (2^26).
pub const DEFAULT_BUDGET_SCALARS: u128 = 1 << 26;

/// Environment variable overriding [`DEFAULT_BUDGET_SCALARS`].
pub const BUDGET_ENV: &str = "CLMMSE_BUDGET_SCALARS";

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub budget_scalars: u128,
    pub execution: Execution,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            budget_scalars: DEFAULT_BUDGET_SCALARS,
            execution: Execution::default(),
        }
    }
}

impl BuildOptions {
    /// Defaults, with the budget taken from `CLMMSE_BUDGET_SCALARS` when set.
    pub fn from_env() -> Result<Self> {
        let mut opts = Self::default();
        if let Ok(raw) = std::env::var(BUDGET_ENV) {
            opts.budget_scalars = raw.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("{BUDGET_ENV}={raw:?} is not a non-negative integer"))
            })?;
        }
        Ok(opts)
    }
}

/// One depth of the tree, stored flat. Node `idx` owns `N` consecutive entries
/// of `prob`, `N·n·n` of `cov` and `N·n·p` of `gain`, matrices column-major.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Level {
    pub prob: Vec<f64>,
    /// Conditional covariances `Ȳ = Y / p` (zero where unreachable).
    pub cov: Vec<f64>,
    pub gain: Vec<f64>,
    /// Inner-matrix factorizations performed at this depth.
    pub factorizations: usize,
}

/// Cluster-path gain tree: for every path `ℓ_0 … ℓ_{k-1}` with `k ≤ s` and
/// every mode `i`, the joint probability `p`, the second moment `Y = p·Ȳ` and
/// the optimal gain `M*`.
///
/// Internally the pair `(p, Ȳ)` is kept instead of `Y`, which keeps the inner
/// matrix `L Ȳ L' + H H'` bounded below by `H H'` however small `p` gets.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTree {
    pub(crate) model: MjlsModel,
    pub(crate) clustering: Clustering,
    pub(crate) horizon: usize,
    pub(crate) levels: Vec<Level>,
}

/// Builds the tree for horizon `s` with default options.
pub fn build_tree(model: &MjlsModel, clustering: &Clustering, s: usize) -> Result<GainTree> {
    build_tree_with(model, clustering, s, &BuildOptions::default())
}

pub fn build_tree_with(
    model: &MjlsModel,
    clustering: &Clustering,
    s: usize,
    opts: &BuildOptions,
) -> Result<GainTree> {
    if clustering.n_modes() != model.n_modes() {
        return Err(Error::Clustering(format!(
            "clustering covers {} modes but the model has {}",
            clustering.n_modes(),
            model.n_modes()
        )));
    }
    let required = CostReport::tree_scalars(model.n_modes(), clustering.n_clusters(), s, model.n(), model.p_dim());
    if required > opts.budget_scalars {
        return Err(Error::BudgetExceeded {
            required,
            budget: opts.budget_scalars,
        });
    }

    let kernel = Kernel::new(model);
    let n_modes = model.n_modes();
    let n_clusters = clustering.n_clusters();
    let nn = model.n() * model.n();
    let np = model.n() * model.p_dim();

    let prob: Vec<f64> = model.initial_dist().iter().copied().collect();
    let mut cov = vec![0.0; n_modes * nn];
    for (i, &p) in prob.iter().enumerate() {
        if !is_zero_prob(p) {
            cov[i * nn..(i + 1) * nn].copy_from_slice(model.init_cov().as_slice());
        }
    }
    let mut levels = vec![Level {
        prob,
        cov,
        gain: vec![0.0; n_modes * np],
        factorizations: 0,
    }];

    let mut nodes = 1usize;
    for depth in 0..=s {
        let has_children = depth < s;
        let child_nodes = if has_children { nodes * n_clusters } else { 0 };
        let mut child_prob = vec![0.0; child_nodes * n_modes];
        let mut child_cov = vec![0.0; child_nodes * n_modes * nn];

        let level = levels.last_mut().expect("at least the root level");
        let Level {
            prob,
            cov,
            gain,
            factorizations,
        } = level;
        let (prob, cov) = (&*prob, &*cov);
        let child_stride = if has_children { n_clusters * n_modes } else { 0 };
        *factorizations = for_each_chunk3(
            opts.execution,
            nodes,
            (gain.as_mut_slice(), n_modes * np),
            (child_prob.as_mut_slice(), child_stride),
            (child_cov.as_mut_slice(), child_stride * nn),
            |idx, gains, cprob, ccov| {
                expand_node(
                    &kernel,
                    model,
                    clustering,
                    depth,
                    idx,
                    &prob[idx * n_modes..(idx + 1) * n_modes],
                    &cov[idx * n_modes * nn..(idx + 1) * n_modes * nn],
                    gains,
                    has_children.then_some((cprob, ccov)),
                )
            },
        )?;

        if has_children {
            levels.push(Level {
                prob: child_prob,
                cov: child_cov,
                gain: vec![0.0; child_nodes * n_modes * np],
                factorizations: 0,
            });
            nodes = child_nodes;
        }
    }

    Ok(GainTree {
        model: model.clone(),
        clustering: clustering.clone(),
        horizon: s,
        levels,
    })
}

/// Fills the gains of one node and, when requested, the `(p, Ȳ)` of its
/// `N_C` children. Returns the number of factorizations performed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn expand_node(
    kernel: &Kernel,
    model: &MjlsModel,
    clustering: &Clustering,
    depth: usize,
    node: usize,
    prob: &[f64],
    cov: &[f64],
    gains: &mut [f64],
    children: Option<(&mut [f64], &mut [f64])>,
) -> Result<usize> {
    let n = kernel.n;
    let nn = n * n;
    let np = n * kernel.p_dim;
    let n_modes = prob.len();

    let mut predicted: Vec<Option<DMatrix<f64>>> = vec![None; n_modes];
    let mut factorizations = 0;
    for j in 0..n_modes {
        let out = &mut gains[j * np..(j + 1) * np];
        if is_zero_prob(prob[j]) {
            out.fill(0.0);
            continue;
        }
        let ybar = DMatrixView::from_slice(&cov[j * nn..(j + 1) * nn], n, n);
        let update = kernel
            .update(j, ybar)
            .ok_or(Error::SingularInnerMatrix { depth, node, mode: j })?;
        factorizations += 1;
        out.copy_from_slice(update.gain.as_slice());
        predicted[j] = Some(update.predicted);
    }

    let Some((child_prob, child_cov)) = children else {
        return Ok(factorizations);
    };
    for ell in 0..clustering.n_clusters() {
        let members = clustering.members(ell);
        for i in 0..n_modes {
            let slot = ell * n_modes + i;
            // same summation order as markov::step_weights
            let mut p_child = 0.0;
            for &j in members {
                if !is_zero_prob(prob[j]) {
                    p_child += prob[j] * model.transition_prob(j, i);
                }
            }
            child_prob[slot] = p_child;
            let out = &mut child_cov[slot * nn..(slot + 1) * nn];
            if is_zero_prob(p_child) {
                out.fill(0.0);
                continue;
            }
            let mut acc = DMatrix::<f64>::zeros(n, n);
            for &j in members {
                if let Some(pred) = &predicted[j] {
                    let w = prob[j] * model.transition_prob(j, i);
                    if w != 0.0 {
                        let c = w / p_child;
                        for (a, b) in acc.iter_mut().zip(pred.iter()) {
                            *a += c * b;
                        }
                    }
                }
            }
            symmetrize(&mut acc);
            out.copy_from_slice(acc.as_slice());
        }
    }
    Ok(factorizations)
}

/// Read-only handle on one node of a [`GainTree`].
#[derive(Debug, Clone, Copy)]
pub struct NodeRef<'a> {
    tree: &'a GainTree,
    depth: usize,
    index: usize,
}

impl<'a> NodeRef<'a> {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_modes(&self) -> usize {
        self.tree.n_modes()
    }

    pub fn path(&self) -> PathKey {
        PathKey::from_index(self.index, self.depth, self.tree.n_clusters())
    }

    fn level(&self) -> &'a Level {
        &self.tree.levels[self.depth]
    }

    /// Joint probability `p_{ℓ_0..ℓ_{k-1}, i, k}`.
    pub fn prob(&self, i: usize) -> f64 {
        self.level().prob[self.index * self.tree.n_modes() + i]
    }

    pub fn is_reachable(&self, i: usize) -> bool {
        !is_zero_prob(self.prob(i))
    }

    fn slot(&self, i: usize) -> usize {
        self.index * self.tree.n_modes() + i
    }

    /// Stored `Ȳ_i` (zero when unreachable).
    pub fn cov_view(&self, i: usize) -> DMatrixView<'a, f64> {
        let n = self.tree.model.n();
        let nn = n * n;
        let s = self.slot(i);
        DMatrixView::from_slice(&self.level().cov[s * nn..(s + 1) * nn], n, n)
    }

    /// `Y_i / p_i`, the conditional error covariance.
    pub fn conditional_covariance(&self, i: usize) -> Result<DMatrix<f64>> {
        if !self.is_reachable(i) {
            return Err(Error::ZeroProbability { mode: i + 1 });
        }
        Ok(self.cov_view(i).into_owned())
    }

    /// `Y_i = p_i · Ȳ_i`
    pub fn y(&self, i: usize) -> DMatrix<f64> {
        if self.is_reachable(i) {
            self.cov_view(i) * self.prob(i)
        } else {
            let n = self.tree.model.n();
            DMatrix::zeros(n, n)
        }
    }

    /// Stored `M*_i` (zero when unreachable).
    pub fn gain_view(&self, i: usize) -> DMatrixView<'a, f64> {
        let n = self.tree.model.n();
        let p = self.tree.model.p_dim();
        let s = self.slot(i);
        DMatrixView::from_slice(&self.level().gain[s * n * p..(s + 1) * n * p], n, p)
    }

    /// Gain for mode `i`; an error when `(path, i)` has zero probability.
    pub fn gain(&self, i: usize) -> Result<DMatrixView<'a, f64>> {
        if !self.is_reachable(i) {
            return Err(Error::Unreachable {
                path: self.path().to_string(),
                mode: i + 1,
            });
        }
        Ok(self.gain_view(i))
    }
}

impl GainTree {
    pub fn model(&self) -> &MjlsModel {
        &self.model
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    /// The horizon `s`; nodes exist for depths `0..=s`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn n_clusters(&self) -> usize {
        self.clustering.n_clusters()
    }

    pub fn nodes_at(&self, depth: usize) -> usize {
        self.levels[depth].prob.len() / self.n_modes()
    }

    pub fn node_at(&self, depth: usize, index: usize) -> NodeRef<'_> {
        assert!(depth <= self.horizon && index < self.nodes_at(depth));
        NodeRef {
            tree: self,
            depth,
            index,
        }
    }

    /// Node for a cluster path (0-based clusters).
    pub fn node(&self, path: &[usize]) -> Result<NodeRef<'_>> {
        if path.len() > self.horizon {
            return Err(Error::HorizonExceeded {
                k: path.len(),
                horizon: self.horizon,
            });
        }
        if let Some(&bad) = path.iter().find(|&&c| c >= self.n_clusters()) {
            return Err(Error::Clustering(format!(
                "cluster {} out of range 1..={}",
                bad + 1,
                self.n_clusters()
            )));
        }
        let index = path.iter().fold(0, |acc, &c| acc * self.n_clusters() + c);
        Ok(NodeRef {
            tree: self,
            depth: path.len(),
            index,
        })
    }

    pub fn nodes(&self, depth: usize) -> impl Iterator<Item = NodeRef<'_>> + '_ {
        (0..self.nodes_at(depth)).map(move |index| NodeRef {
            tree: self,
            depth,
            index,
        })
    }

    /// `E‖x̃_k‖² = Σ trace(Y)` over every depth-`k` node and mode.
    pub fn expected_sq_error(&self, k: usize) -> Result<f64> {
        if k > self.horizon {
            return Err(Error::HorizonExceeded {
                k,
                horizon: self.horizon,
            });
        }
        let n = self.model.n();
        let nn = n * n;
        let level = &self.levels[k];
        let mut total = 0.0;
        for (slot, &p) in level.prob.iter().enumerate() {
            if is_zero_prob(p) {
                continue;
            }
            let cov = &level.cov[slot * nn..(slot + 1) * nn];
            let trace: f64 = (0..n).map(|d| cov[d * n + d]).sum();
            total += p * trace;
        }
        Ok(total)
    }

    /// Gains needed to produce `x̂_s`: `N·(N_C^s − 1)/(N_C − 1)`, or `s·N` for
    /// one cluster (the root's `N` gains when `s = 0`).
    pub fn gain_count(&self) -> usize {
        let applied_depths = self.horizon.max(1);
        (0..applied_depths).map(|d| self.nodes_at(d) * self.n_modes()).sum()
    }

    /// Gain slots held in memory, terminal depth included.
    pub fn stored_gain_slots(&self) -> usize {
        (0..=self.horizon).map(|d| self.nodes_at(d) * self.n_modes()).sum()
    }

    pub fn factorizations_at(&self, depth: usize) -> usize {
        self.levels[depth].factorizations
    }

    /// Factorizations feeding the Riccati recursion up to depth `s − 1`
    /// (depths `0..s−1`, exclusive), i.e. those behind the applied gains' `Y`s.
    pub fn riccati_factorizations(&self) -> usize {
        (0..self.horizon.saturating_sub(1)).map(|d| self.levels[d].factorizations).sum()
    }

    /// All factorizations performed, terminal depth included.
    pub fn total_factorizations(&self) -> usize {
        self.levels.iter().map(|l| l.factorizations).sum()
    }

    /// Copy of the first `depth + 1` levels as a tree of horizon `depth`.
    ///
    /// Terminal gains are kept; they equal what a fresh build of that horizon computes.
    pub fn truncated(&self, depth: usize) -> Result<GainTree> {
        if depth > self.horizon {
            return Err(Error::HorizonExceeded {
                k: depth,
                horizon: self.horizon,
            });
        }
        Ok(GainTree {
            model: self.model.clone(),
            clustering: self.clustering.clone(),
            horizon: depth,
            levels: self.levels[..=depth].to_vec(),
        })
    }

    /// Bitwise comparison of one depth's `(p, Ȳ, M*)` data.
    pub fn level_bits_equal(&self, other: &GainTree, depth: usize) -> bool {
        let (a, b) = (&self.levels[depth], &other.levels[depth]);
        let eq = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(u, v)| u.to_bits() == v.to_bits());
        eq(&a.prob, &b.prob) && eq(&a.cov, &b.cov) && eq(&a.gain, &b.gain)
    }
}
