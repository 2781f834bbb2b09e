//! Trajectory sampling and Monte Carlo error estimates.
//!
//! `x(k+1) = A x(k) + G w(k)`, `y(k) = L x(k) + H w(k)` with a single
//! `w(k) ~ N(0, I_q)` driving both equations, `x(0) ~ N(x̄, Ψ)` and
//! `θ(0) ~ π0`. Trial `t` draws from the streams addressed by `(seed, t)`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::filter::Observer;
use crate::markov::{sample_chain, PathKey};
use crate::model::{Clustering, MjlsModel};
use crate::par::{map_indexed, Execution};
use crate::riccati::GainPolicy;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// One sample path: `theta` and `x` for `0..=s`, `y` for `0..s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub theta: Vec<usize>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    /// Writes `k,theta,y_1..y_p,x_1..x_n` for `k < s` (1-based modes).
    ///
    /// The leading columns are the filter input format; readers ignore the state columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p_dim = self.y.first().map_or(0, |v| v.len());
        let n = self.x.first().map_or(0, |v| v.len());
        let mut csv = csv::Writer::from_writer(writer);
        let mut header = vec!["k".to_string(), "theta".to_string()];
        header.extend((1..=p_dim).map(|i| format!("y_{i}")));
        header.extend((1..=n).map(|i| format!("x_{i}")));
        csv.write_record(&header)?;
        for k in 0..self.horizon() {
            let mut row = vec![k.to_string(), (self.theta[k] + 1).to_string()];
            row.extend(self.y[k].iter().map(|v| v.to_string()));
            row.extend(self.x[k].iter().map(|v| v.to_string()));
            csv.write_record(&row)?;
        }
        csv.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Mean of a Monte Carlo sample with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub std_error: f64,
    pub trials: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Estimate from per-trial values, summed in trial order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let trials = samples.len();
        if trials < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 trials, got {trials}")));
        }
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / trials as f64).sqrt(),
            trials,
            seed,
        })
    }

    /// `|mean − target| ≤ sigmas · std_error`
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.std_error
    }
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Precomputed sampling data for one model.
struct Sampler<'a> {
    model: &'a MjlsModel,
    init_sqrt: DMatrix<f64>,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a MjlsModel) -> Self {
        Self {
            model,
            init_sqrt: psd_sqrt(model.init_cov()),
        }
    }

    fn normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
    }

    fn trial(&self, s: usize, seed: u64, trial: u64) -> Trajectory {
        let mut chain_rng = stream(seed, trial, Purpose::Chain);
        let mut noise_rng = stream(seed, trial, Purpose::Trajectory);
        let theta = sample_chain(self.model, s, &mut chain_rng);
        self.along(theta, &mut noise_rng)
    }

    fn along<R: Rng + ?Sized>(&self, theta: Vec<usize>, rng: &mut R) -> Trajectory {
        let model = self.model;
        let s = theta.len() - 1;
        let x0 = model.init_mean() + &self.init_sqrt * Self::normal_vector(model.n(), rng);
        let mut x = Vec::with_capacity(s + 1);
        let mut y = Vec::with_capacity(s);
        x.push(x0);
        for &t in &theta[..s] {
            let mode = model.mode(t);
            let w = Self::normal_vector(model.q_dim(), rng);
            let xk = x.last().expect("x(0)");
            y.push(&mode.l * xk + &mode.h * &w);
            let next = &mode.a * xk + &mode.g * &w;
            x.push(next);
        }
        Trajectory { theta, x, y }
    }
}

/// Samples `θ(0..=s)`, `x(0..=s)` and `y(0..s)` from `rng`.
pub fn sample_trajectory<R: Rng + ?Sized>(model: &MjlsModel, s: usize, rng: &mut R) -> Trajectory {
    let theta = sample_chain(model, s, rng);
    Sampler::new(model).along(theta, rng)
}

/// Trajectory of trial `trial` under `seed`, as used by the Monte Carlo estimators.
pub fn trial_trajectory(model: &MjlsModel, s: usize, seed: u64, trial: u64) -> Trajectory {
    Sampler::new(model).trial(s, seed, trial)
}

/// `E‖x(s) − x̂(s)‖²` estimated over `trials` independent runs of the observer driven by `policy`.
pub fn monte_carlo_mse<P: GainPolicy + ?Sized>(
    model: &MjlsModel,
    clustering: &Clustering,
    policy: &P,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    monte_carlo_mse_with(model, clustering, policy, s, trials, seed, Execution::default())
}

pub fn monte_carlo_mse_with<P: GainPolicy + ?Sized>(
    model: &MjlsModel,
    clustering: &Clustering,
    policy: &P,
    s: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    if trials < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 trials, got {trials}")));
    }
    let sampler = Sampler::new(model);
    let observer = Observer::new(model, clustering, policy, None);
    let errors: Vec<Result<f64>> = map_indexed(exec, trials, |t| {
        let traj = sampler.trial(s, seed, t as u64);
        let mut state = observer.init();
        for k in 0..s {
            state = observer.step(&state, traj.theta[k], &traj.y[k])?;
        }
        Ok((&traj.x[s] - &state.xhat).norm_squared())
    });
    let samples = errors.into_iter().collect::<Result<Vec<_>>>()?;
    McEstimate::from_samples(&samples, seed)
}

/// Empirical joint moment of one `(path, mode)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCell {
    /// `Σ x̃ x̃' 1{cell}` over trials, divided by the number of trials.
    pub moment: DMatrix<f64>,
    /// Trials that landed in the cell.
    pub count: usize,
}

/// Estimates `E[x̃(s) x̃(s)' 1{ρ(0..s-1) = path, θ(s) = i}]` for every cell.
///
/// All `N_C^s · N` cells are present; cells never visited have count 0.
pub fn empirical_path_moments<P: GainPolicy + ?Sized>(
    model: &MjlsModel,
    clustering: &Clustering,
    policy: &P,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<BTreeMap<(PathKey, usize), EmpiricalCell>> {
    let n = model.n();
    let n_cells = clustering.n_clusters().pow(s as u32) * model.n_modes();
    if trials < 100 * n_cells {
        log::warn!("{trials} trials over {n_cells} cells leaves fewer than 100 expected per cell");
    }
    let sampler = Sampler::new(model);
    let observer = Observer::new(model, clustering, policy, None);
    let per_trial: Vec<Result<(PathKey, usize, DVector<f64>)>> = map_indexed(Execution::default(), trials, |t| {
        let traj = sampler.trial(s, seed, t as u64);
        let mut state = observer.init();
        for k in 0..s {
            state = observer.step(&state, traj.theta[k], &traj.y[k])?;
        }
        Ok((state.path, traj.theta[s], &traj.x[s] - &state.xhat))
    });

    let mut cells = BTreeMap::new();
    let n_clusters = clustering.n_clusters();
    for idx in 0..n_clusters.pow(s as u32) {
        for mode in 0..model.n_modes() {
            cells.insert(
                (PathKey::from_index(idx, s, n_clusters), mode),
                EmpiricalCell {
                    moment: DMatrix::zeros(n, n),
                    count: 0,
                },
            );
        }
    }
    for entry in per_trial {
        let (path, mode, err) = entry?;
        let cell = cells.get_mut(&(path, mode)).expect("every cell is preallocated");
        cell.moment += &err * err.transpose();
        cell.count += 1;
    }
    for cell in cells.values_mut() {
        cell.moment /= trials as f64;
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::ModeMatrices;
    use crate::riccati::{build_tree, ZeroGains};

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = fixtures::data1();
        assert_eq!(trial_trajectory(&m, 6, 11, 3), trial_trajectory(&m, 6, 11, 3));
        assert_ne!(trial_trajectory(&m, 6, 11, 3), trial_trajectory(&m, 6, 11, 4));
        let t = trial_trajectory(&m, 6, 11, 3);
        assert_eq!((t.theta.len(), t.x.len(), t.y.len()), (7, 7, 6));
    }

    #[test]
    fn deterministic_without_noise() {
        let base = fixtures::data1();
        let modes: Vec<_> = base
            .modes()
            .iter()
            .map(|m| ModeMatrices::new(m.a.clone(), DMatrix::zeros(2, 2), m.l.clone(), m.h.clone()))
            .collect();
        let m = MjlsModel::new(
            modes,
            base.transition().clone(),
            base.initial_dist().clone(),
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let t = trial_trajectory(&m, 5, 1, 0);
        for k in 0..5 {
            assert_eq!(t.x[k + 1], &m.mode(t.theta[k]).a * &t.x[k]);
        }
    }

    #[test]
    fn chain_variance_grows_by_one_per_step() {
        let m = fixtures::three_mode_chain();
        let trials = 100_000;
        for k in [1usize, 3] {
            let samples: Vec<f64> = (0..trials).map(|t| trial_trajectory(&m, k, 5, t).x[k][0].powi(2)).collect();
            let est = McEstimate::from_samples(&samples, 5).unwrap();
            assert!(est.agrees_with(1.0 + k as f64, 3.0), "k={k}: {est:?}");
        }
    }

    #[test]
    fn noise_components_are_uncorrelated() {
        let m = fixtures::data1();
        let mut rng = stream(9, 0, Purpose::Trajectory);
        let trials = 50_000;
        let mode = m.mode(0);
        let samples: Vec<f64> = (0..trials)
            .map(|_| {
                let w = Sampler::normal_vector(m.q_dim(), &mut rng);
                (&mode.g * &w)[0] * (&mode.h * &w)[0]
            })
            .collect();
        let est = McEstimate::from_samples(&samples, 9).unwrap();
        assert!(est.agrees_with(0.0, 3.0), "{est:?}");
    }

    #[test]
    fn zero_gain_chain_mse_is_two() {
        let m = fixtures::three_mode_chain();
        let c = Clustering::parse("{1,2}|{3}", 3).unwrap();
        let est = monte_carlo_mse(&m, &c, &ZeroGains::for_model(&m), 1, 100_000, 17).unwrap();
        assert!(est.agrees_with(2.0, 3.0), "{est:?}");
    }

    #[test]
    fn trivial_model_has_zero_error() {
        let base = fixtures::scalar_single_mode();
        let mode = ModeMatrices::new(
            base.mode(0).a.clone(),
            DMatrix::zeros(1, 2),
            base.mode(0).l.clone(),
            base.mode(0).h.clone(),
        );
        let m = MjlsModel::new(
            vec![mode],
            base.transition().clone(),
            base.initial_dist().clone(),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let c = Clustering::single(1);
        let tree = build_tree(&m, &c, 4).unwrap();
        let est = monte_carlo_mse(&m, &c, &tree, 4, 10, 0).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let m = fixtures::toto();
        let c = Clustering::parse("{1,2}|{3,4}", 4).unwrap();
        let tree = build_tree(&m, &c, 5).unwrap();
        let a = monte_carlo_mse_with(&m, &c, &tree, 5, 2000, 3, Execution::Sequential).unwrap();
        let b = monte_carlo_mse_with(&m, &c, &tree, 5, 2000, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_empirical_cells() {
        let m = fixtures::three_mode_chain();
        let c = Clustering::parse("{1,2}|{3}", 3).unwrap();
        let trials = 100_000;
        let cells = empirical_path_moments(&m, &c, &ZeroGains::for_model(&m), 1, trials, 23).unwrap();
        assert_eq!(cells.len(), 6);
        let expected = [
            ((0, 0), 1.1),
            ((0, 1), 0.4),
            ((0, 2), 0.1),
            ((1, 0), 0.2),
            ((1, 1), 0.0),
            ((1, 2), 0.2),
        ];
        let mut total = 0.0;
        for ((cluster, mode), value) in expected {
            let cell = &cells[&(PathKey::new(vec![cluster]), mode)];
            // per-trial contribution x̃²·1{cell}; its variance is bounded by E[x̃⁴ 1{cell}]
            let sigma = (3.0 * 4.0 / trials as f64).sqrt();
            assert!((cell.moment[(0, 0)] - value).abs() <= 3.0 * sigma, "{cluster},{mode}: {}", cell.moment[(0, 0)]);
            total += cell.moment[(0, 0)];
        }
        assert_eq!(cells[&(PathKey::new(vec![1]), 1)].count, 0);
        assert!((total - 2.0).abs() < 0.05);
    }

    #[test]
    fn trajectory_csv_feeds_the_filter_reader() {
        let m = fixtures::data1();
        let t = trial_trajectory(&m, 3, 1, 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,theta,y_1,x_1,x_2\n"));
        let obs = crate::filter::read_observations(buf.as_slice(), 1).unwrap();
        assert_eq!(obs.theta, t.theta[..3]);
        assert_eq!(obs.y, t.y);
    }
}
