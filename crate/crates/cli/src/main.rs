use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use clmmse::filter::{read_observations_file, write_estimates};
use clmmse::riccati::{read_tree, write_tree, BUDGET_ENV};
use clmmse::sim::trial_trajectory;
use clmmse::sweep::write_sweep_csv;
use clmmse::{
    build_tree_with, cost_report, load_model, monte_carlo_mse, run_filter, sweep, BuildOptions, Clustering,
    MjlsModel, SweepOptions,
};
use serde_json::json;

/// Clustered-information LMMSE design for Markov jump linear systems.
///
/// Mode and cluster indices on the command line and in files are 1-based.
/// Clusterings use the grammar `{1,2}|{3,4}` (or JSON `[[1,2],[3,4]]`);
/// `kalman` and `lmmse` name the singleton and single-cluster partitions.
#[derive(Parser)]
#[command(name = "clmmse", version, about)]
#[command(after_help = format!("Tree memory is capped by {BUDGET_ENV} (scalars, default 2^26)."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file against the modelling assumptions
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Build the gain tree for a clustering and horizon and save it
    Design {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        clusters: String,
        /// The horizon s: gains are computed for times 0..s
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the expected squared error of a saved tree
    Evaluate {
        #[arg(long)]
        tree: PathBuf,
        /// Time index; defaults to the tree horizon
        #[arg(long)]
        k: Option<usize>,
        /// Also estimate the error by simulation
        #[arg(long, requires = "seed")]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the observer of a saved tree over a trajectory CSV (k,theta,y_1..y_p)
    Filter {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Estimates CSV (k,xhat_1..xhat_n); `-` for stdout
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Sample one trajectory as CSV (k,theta,y_1..y_p,x_1..x_n)
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        seed: u64,
        /// Trial index within the seed's stream family
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Analytic (and optionally Monte Carlo) error for every clustering
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, requires = "seed")]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Leave build_ms empty so the CSV is byte-stable
        #[arg(long)]
        omit_timing: bool,
    },
    /// Storage and factorization counts for N modes, N_C clusters and horizon s
    Info {
        /// Number of modes N
        #[arg(long)]
        n: usize,
        /// Number of clusters N_C
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        horizon: usize,
    },
}

fn parse_clustering(text: &str, n_modes: usize) -> clmmse::Result<Clustering> {
    match text.trim() {
        "kalman" => Ok(Clustering::singletons(n_modes)),
        "lmmse" => Ok(Clustering::single(n_modes)),
        other => Clustering::parse(other, n_modes),
    }
}

fn output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

fn valid_model(path: &Path) -> Result<MjlsModel> {
    let model = load_model(path)?;
    model.ensure_valid()?;
    Ok(model)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { model } => {
            let model = load_model(&model)?;
            let report = model.validate();
            for v in &report.violations {
                println!("violation: {}: {}", v.rule, v.message);
            }
            model.ensure_valid()?;
            println!(
                "ok: N={} n={} p={} q={}",
                model.n_modes(),
                model.n(),
                model.p_dim(),
                model.q_dim()
            );
        }
        Command::Design {
            model,
            clusters,
            horizon,
            out,
        } => {
            let model = valid_model(&model)?;
            let clustering = parse_clustering(&clusters, model.n_modes())?;
            let opts = BuildOptions::from_env()?;
            let start = Instant::now();
            let tree = build_tree_with(&model, &clustering, horizon, &opts)?;
            let build_ms = start.elapsed().as_secs_f64() * 1e3;
            write_tree(&tree, &out)?;
            println!(
                "{}",
                json!({
                    "clustering": clustering.label(),
                    "horizon": horizon,
                    "stored_gains": tree.gain_count(),
                    "factorizations": tree.riccati_factorizations(),
                    "analytic_mse": tree.expected_sq_error(horizon)?,
                    "build_ms": build_ms,
                    "out": out,
                })
            );
        }
        Command::Evaluate { tree, k, trials, seed } => {
            let tree = read_tree(&tree)?;
            let k = k.unwrap_or(tree.horizon());
            let analytic = tree.expected_sq_error(k)?;
            let mut report = json!({
                "clustering": tree.clustering().label(),
                "k": k,
                "analytic_mse": analytic,
            });
            if let (Some(trials), Some(seed)) = (trials, seed) {
                let mc = monte_carlo_mse(tree.model(), tree.clustering(), &tree, k, trials, seed)?;
                report["mc_mse"] = json!(mc.mean);
                report["mc_stderr"] = json!(mc.std_error);
                report["trials"] = json!(trials);
                report["seed"] = json!(seed);
            }
            println!("{report}");
        }
        Command::Filter { tree, input, out } => {
            let tree = read_tree(&tree)?;
            let obs = read_observations_file(&input, tree.model().p_dim())?;
            let estimates = run_filter(&tree, &obs.theta, &obs.y)?;
            write_estimates(output(&out)?, &estimates)?;
        }
        Command::Simulate {
            model,
            horizon,
            seed,
            trial,
            out,
        } => {
            let model = valid_model(&model)?;
            trial_trajectory(&model, horizon, seed, trial).write_csv(output(&out)?)?;
        }
        Command::Sweep {
            model,
            horizon,
            trials,
            seed,
            out,
            omit_timing,
        } => {
            let model = valid_model(&model)?;
            let opts = SweepOptions {
                horizon,
                trials,
                seed: seed.unwrap_or(0),
                build: BuildOptions::from_env()?,
                timing: !omit_timing,
            };
            let rows = sweep(&model, &opts)?;
            write_sweep_csv(output(&out)?, &rows)?;
        }
        Command::Info { n, clusters, horizon } => {
            let report = cost_report(n, clusters, horizon)?;
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<clmmse::Error>() {
        e.kind()
    } else if err.downcast_ref::<io::Error>().is_some() {
        "io"
    } else {
        "internal"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {}: {message}", error_kind(&err));
            ExitCode::FAILURE
        }
    }
}
