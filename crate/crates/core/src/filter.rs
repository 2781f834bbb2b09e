//! Running the clustered-information observer
//!
//! `x̂(k+1) = A[θ(k)] x̂(k) + M_k (y(k) − L[θ(k)] x̂(k))`, `x̂(0) = x̄`,
//!
//! where `M_k` is looked up by the observed cluster path `ρ(0..k-1)` and the
//! current mode `θ(k)`. The cluster `ρ(k)` is derived from `θ(k)`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::markov::PathKey;
use crate::model::{Clustering, MjlsModel};
use crate::riccati::{GainPolicy, GainTree};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xhat: DVector<f64>,
    pub k: usize,
    /// Observed clusters `ρ(0..k-1)`.
    pub path: PathKey,
}

/// State of the general recursive estimator `z(k+1) = F_k z(k) + Ḡ_k y(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralEstimatorState {
    pub z: DVector<f64>,
    pub k: usize,
    pub path: PathKey,
}

/// A model, a clustering and a feasible gain policy, optionally bounded by a horizon.
#[derive(Clone, Copy)]
pub struct Observer<'a, P: GainPolicy + ?Sized> {
    model: &'a MjlsModel,
    clustering: &'a Clustering,
    gains: &'a P,
    horizon: Option<usize>,
}

impl<'a> Observer<'a, GainTree> {
    /// Observer driven by the optimal gains of `tree`.
    pub fn from_tree(tree: &'a GainTree) -> Self {
        Self {
            model: tree.model(),
            clustering: tree.clustering(),
            gains: tree,
            horizon: Some(tree.horizon()),
        }
    }
}

impl<'a, P: GainPolicy + ?Sized> Observer<'a, P> {
    pub fn new(model: &'a MjlsModel, clustering: &'a Clustering, gains: &'a P, horizon: Option<usize>) -> Self {
        Self {
            model,
            clustering,
            gains,
            horizon,
        }
    }

    pub fn model(&self) -> &'a MjlsModel {
        self.model
    }

    pub fn init(&self) -> FilterState {
        FilterState {
            xhat: self.model.init_mean().clone(),
            k: 0,
            path: PathKey::root(),
        }
    }

    pub fn init_general(&self) -> GeneralEstimatorState {
        GeneralEstimatorState {
            z: self.model.init_mean().clone(),
            k: 0,
            path: PathKey::root(),
        }
    }

    fn check_step(&self, k: usize, path: &PathKey, theta: usize, y: &DVector<f64>) -> Result<()> {
        if let Some(h) = self.horizon {
            // x̂(h) is the last estimate; producing it consumes the gain at h-1
            if k >= h {
                return Err(Error::HorizonExceeded { k: k + 1, horizon: h });
            }
        }
        debug_assert_eq!(path.len(), k);
        if theta >= self.model.n_modes() {
            return Err(Error::ModeOutOfRange {
                mode: theta + 1,
                n_modes: self.model.n_modes(),
            });
        }
        if y.len() != self.model.p_dim() {
            return Err(Error::Dimension(format!(
                "y({k}) has length {}, expected {}",
                y.len(),
                self.model.p_dim()
            )));
        }
        Ok(())
    }

    /// One predictor step with mode `theta` (0-based) and output `y`.
    pub fn step(&self, state: &FilterState, theta: usize, y: &DVector<f64>) -> Result<FilterState> {
        self.check_step(state.k, &state.path, theta, y)?;
        let gain = self.gains.gain(state.path.as_slice(), theta)?;
        let mode = self.model.mode(theta);
        let innovation = y - &mode.l * &state.xhat;
        let xhat = &mode.a * &state.xhat + gain * innovation;
        Ok(FilterState {
            xhat,
            k: state.k + 1,
            path: state.path.child(self.clustering.cluster_of(theta)),
        })
    }

    /// One step of `z ↦ (A − M L) z + M y`, with `M` the policy gain.
    pub fn general_step(&self, state: &GeneralEstimatorState, theta: usize, y: &DVector<f64>) -> Result<GeneralEstimatorState> {
        self.check_step(state.k, &state.path, theta, y)?;
        let gain = self.gains.gain(state.path.as_slice(), theta)?;
        let mode = self.model.mode(theta);
        let f = &mode.a - &gain * &mode.l;
        let z = f * &state.z + gain * y;
        Ok(GeneralEstimatorState {
            z,
            k: state.k + 1,
            path: state.path.child(self.clustering.cluster_of(theta)),
        })
    }

    /// Estimates `x̂(0..=m)` for modes `θ(0..m-1)` and outputs `y(0..m-1)`.
    pub fn run(&self, theta: &[usize], y: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if theta.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} modes but {} outputs",
                theta.len(),
                y.len()
            )));
        }
        let mut state = self.init();
        let mut out = Vec::with_capacity(theta.len() + 1);
        out.push(state.xhat.clone());
        for (&t, yk) in theta.iter().zip(y) {
            state = self.step(&state, t, yk)?;
            out.push(state.xhat.clone());
        }
        Ok(out)
    }

    /// Same as [`Observer::run`] for the general-form estimator.
    pub fn run_general(&self, theta: &[usize], y: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if theta.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} modes but {} outputs",
                theta.len(),
                y.len()
            )));
        }
        let mut state = self.init_general();
        let mut out = Vec::with_capacity(theta.len() + 1);
        out.push(state.z.clone());
        for (&t, yk) in theta.iter().zip(y) {
            state = self.general_step(&state, t, yk)?;
            out.push(state.z.clone());
        }
        Ok(out)
    }
}

pub fn init_filter(model: &MjlsModel) -> FilterState {
    FilterState {
        xhat: model.init_mean().clone(),
        k: 0,
        path: PathKey::root(),
    }
}

pub fn filter_step(state: &FilterState, theta: usize, y: &DVector<f64>, tree: &GainTree) -> Result<FilterState> {
    Observer::from_tree(tree).step(state, theta, y)
}

pub fn general_form_step(
    state: &GeneralEstimatorState,
    theta: usize,
    y: &DVector<f64>,
    tree: &GainTree,
) -> Result<GeneralEstimatorState> {
    Observer::from_tree(tree).general_step(state, theta, y)
}

pub fn run_filter(tree: &GainTree, theta: &[usize], y: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    Observer::from_tree(tree).run(theta, y)
}

/// Modes and outputs read from a trajectory CSV (`k,theta,y_1..y_p`, 1-based modes).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    pub theta: Vec<usize>,
    pub y: Vec<DVector<f64>>,
}

/// Reads `k,theta,y_1..y_p` rows; `k` must run `0,1,2,…` and `theta` is 1-based.
pub fn read_observations<R: Read>(reader: R, p_dim: usize) -> Result<ObservationStream> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let expected: Vec<String> = ["k".to_string(), "theta".to_string()]
        .into_iter()
        .chain((1..=p_dim).map(|i| format!("y_{i}")))
        .collect();
    if headers.len() < expected.len() || headers.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(Error::Dimension(format!(
            "trajectory header must start with {}",
            expected.join(",")
        )));
    }
    let mut out = ObservationStream {
        theta: Vec::new(),
        y: Vec::new(),
    };
    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        let line = row_idx + 2;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                source_name: "trajectory".into(),
                line,
                column: i + 1,
                message: "missing field".into(),
            })
        };
        let parse_err = |col: usize, what: &str| Error::Parse {
            source_name: "trajectory".into(),
            line,
            column: col + 1,
            message: format!("bad {what}"),
        };
        let k: usize = field(0)?.parse().map_err(|_| parse_err(0, "k"))?;
        if k != row_idx {
            return Err(Error::Parse {
                source_name: "trajectory".into(),
                line,
                column: 1,
                message: format!("expected k={row_idx}, got {k}"),
            });
        }
        let theta: usize = field(1)?.parse().map_err(|_| parse_err(1, "theta"))?;
        if theta == 0 {
            return Err(parse_err(1, "theta (modes are 1-based)"));
        }
        let y = (0..p_dim)
            .map(|i| field(2 + i)?.parse::<f64>().map_err(|_| parse_err(2 + i, "output value")))
            .collect::<Result<Vec<_>>>()?;
        out.theta.push(theta - 1);
        out.y.push(DVector::from_vec(y));
    }
    Ok(out)
}

/// Writes `k,theta,y_1..y_p` rows (1-based modes).
pub fn write_observations<W: Write>(writer: W, theta: &[usize], y: &[DVector<f64>]) -> Result<()> {
    let p_dim = y.first().map_or(0, |v| v.len());
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["k".to_string(), "theta".to_string()];
    header.extend((1..=p_dim).map(|i| format!("y_{i}")));
    csv.write_record(&header)?;
    for (k, (&t, yk)) in theta.iter().zip(y).enumerate() {
        let mut row = vec![k.to_string(), (t + 1).to_string()];
        row.extend(yk.iter().map(|v| v.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes `k,xhat_1..xhat_n` rows.
pub fn write_estimates<W: Write>(writer: W, estimates: &[DVector<f64>]) -> Result<()> {
    let n = estimates.first().map_or(0, |v| v.len());
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("xhat_{i}")));
    csv.write_record(&header)?;
    for (k, x) in estimates.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_observations_file(path: impl AsRef<Path>, p_dim: usize) -> Result<ObservationStream> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_observations(std::io::BufReader::new(file), p_dim)
}
