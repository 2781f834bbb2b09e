//! Clustered-information linear minimum mean square estimation for Markov
//! jump linear systems.
//!
//! The estimator observes the exact mode `θ(k)` at time `k` but only the
//! cluster index `ρ` of earlier modes. Its optimal gains depend on the observed
//! cluster path and are computed offline by a coupled Riccati recursion over
//! the tree of cluster paths ([`riccati::build_tree`]). With one mode per
//! cluster the recursion reduces to the Kalman filter, with a single cluster
//! to the standard LMMSE estimator.
//!
//! ```
//! use clmmse::{build_tree, fixtures, Clustering};
//!
//! let model = fixtures::data1();
//! let clustering = Clustering::parse("{1,2,3}|{4}", 4)?;
//! let tree = build_tree(&model, &clustering, 10)?;
//! let mse = tree.expected_sq_error(10)?;
//! assert!(mse > 0.0);
//! # Ok::<(), clmmse::Error>(())
//! ```

pub mod cost;
mod error;
pub mod filter;
pub mod fixtures;
pub mod markov;
pub mod model;
mod par;
pub mod partition;
pub mod riccati;
pub mod rng;
pub mod sim;
pub mod sweep;

pub use cost::{cost_report, CostReport};
pub use error::{Error, Result};
pub use filter::{run_filter, FilterState, Observer};
pub use markov::PathKey;
pub use model::{load_model, Clustering, MjlsModel, ModeMatrices};
pub use par::Execution;
pub use partition::enumerate_partitions;
pub use riccati::{build_tree, build_tree_with, propagate_x, BuildOptions, GainPolicy, GainTree};
pub use sim::{monte_carlo_mse, McEstimate};
pub use sweep::{sweep, SweepOptions, SweepRow};
