//! Analytic (and optionally Monte Carlo) error for every clustering of a model.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::cost::cost_report;
use crate::model::{Clustering, MjlsModel};
use crate::partition::enumerate_partitions;
use crate::riccati::{build_tree_with, BuildOptions};
use crate::sim::{monte_carlo_mse_with, McEstimate};
use crate::{Error, Result};

/// Exact header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 7] = [
    "clustering",
    "n_clusters",
    "analytic_mse",
    "mc_mse",
    "mc_stderr",
    "stored_gains",
    "build_ms",
];

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub horizon: usize,
    /// Monte Carlo trials per clustering; `None` skips the simulation columns.
    pub trials: Option<usize>,
    pub seed: u64,
    pub build: BuildOptions,
    /// Record tree build times. Timings differ between runs, so leave this off
    /// when the CSV must be byte-stable.
    pub timing: bool,
}

impl SweepOptions {
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self {
            horizon,
            trials: None,
            seed,
            build: BuildOptions::default(),
            timing: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub clustering: String,
    pub n_clusters: usize,
    /// `E‖x̃_s‖²` under the optimal gains; `None` when the row was skipped.
    pub analytic_mse: Option<f64>,
    pub mc: Option<McEstimate>,
    pub stored_gains: u128,
    pub build_ms: Option<f64>,
    /// Why the tree was not built.
    pub skipped: Option<String>,
}

/// One row per set partition of the modes, sorted by `(n_clusters, label)`.
///
/// Trees are built one at a time (each build is itself data-parallel), so peak
/// memory is that of the largest single tree. A budget overrun skips the row.
pub fn sweep(model: &MjlsModel, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    model.ensure_valid()?;
    let mut rows = Vec::new();
    for clustering in enumerate_partitions(model.n_modes())? {
        rows.push(sweep_one(model, &clustering, opts)?);
    }
    rows.sort_by(|a, b| (a.n_clusters, &a.clustering).cmp(&(b.n_clusters, &b.clustering)));
    Ok(rows)
}

/// The sweep row of a single clustering.
pub fn sweep_one(model: &MjlsModel, clustering: &Clustering, opts: &SweepOptions) -> Result<SweepRow> {
    let s = opts.horizon;
    let cost = cost_report(model.n_modes(), clustering.n_clusters(), s)?;
    let mut row = SweepRow {
        clustering: clustering.label(),
        n_clusters: clustering.n_clusters(),
        analytic_mse: None,
        mc: None,
        stored_gains: cost.gains,
        build_ms: None,
        skipped: None,
    };
    let start = Instant::now();
    let tree = match build_tree_with(model, clustering, s, &opts.build) {
        Ok(tree) => tree,
        Err(err @ Error::BudgetExceeded { .. }) => {
            log::warn!("skipping {}: {err}", row.clustering);
            row.skipped = Some(err.to_string());
            return Ok(row);
        }
        Err(err) => return Err(err),
    };
    if opts.timing {
        row.build_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    debug_assert_eq!(tree.gain_count() as u128, cost.gains);
    row.analytic_mse = Some(tree.expected_sq_error(s)?);
    if let Some(trials) = opts.trials {
        row.mc = Some(monte_carlo_mse_with(
            model,
            clustering,
            &tree,
            s,
            trials,
            opts.seed,
            opts.build.execution,
        )?);
    }
    log::info!("{}: analytic {:?}", row.clustering, row.analytic_mse);
    Ok(row)
}

/// Rounds to 6 significant digits and prints the shortest form of the result.
fn six_significant(v: f64) -> String {
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    rounded.to_string()
}

pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(SWEEP_HEADER)?;
    for row in rows {
        let analytic = match (&row.analytic_mse, &row.skipped) {
            (Some(v), _) => v.to_string(),
            (None, Some(reason)) => format!("skipped: {reason}"),
            (None, None) => String::new(),
        };
        csv.write_record([
            row.clustering.clone(),
            row.n_clusters.to_string(),
            analytic,
            row.mc.map(|m| six_significant(m.mean)).unwrap_or_default(),
            row.mc.map(|m| six_significant(m.std_error)).unwrap_or_default(),
            row.stored_gains.to_string(),
            row.build_ms.map(|ms| format!("{ms:.3}")).unwrap_or_default(),
        ])?;
    }
    csv.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
