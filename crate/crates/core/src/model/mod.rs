//! Markov jump linear system models and mode clusterings.
//!
//! The plant is
//!
//! ```text
//! x(k+1) = A[θ(k)] x(k) + G[θ(k)] w(k)
//! y(k)   = L[θ(k)] x(k) + H[θ(k)] w(k)
//! ```
//!
//! with `x(0) ~ N(x̄, Ψ)`, `w(k) ~ N(0, I)` and `θ` a Markov chain with
//! transition matrix `P` (`P[j][i] = Pr(θ(k+1)=i | θ(k)=j)`) and initial law `π0`.
//! Modes are 0-based in this API; files and the CLI use 1-based indices.

mod clustering;
mod json;

pub use clustering::Clustering;
pub use json::{load_model, model_from_json, model_to_json, save_model, ModelFile};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Absolute slack on row sums of `P` and on the sum of `π0`.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Relative slack on `G H' = 0`, scaled by `‖G‖·‖H‖`.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;
/// Relative floor on the smallest eigenvalue of `H H'`, scaled by `‖H H'‖`.
pub const DEFINITENESS_TOL: f64 = 1e-12;

/// Per-mode system matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrices {
    /// State transition, n×n.
    pub a: DMatrix<f64>,
    /// Noise input to the state, n×q.
    pub g: DMatrix<f64>,
    /// Output map, p×n.
    pub l: DMatrix<f64>,
    /// Noise input to the output, p×q.
    pub h: DMatrix<f64>,
}

impl ModeMatrices {
    pub fn new(a: DMatrix<f64>, g: DMatrix<f64>, l: DMatrix<f64>, h: DMatrix<f64>) -> Self {
        Self { a, g, l, h }
    }

    /// `G G'`
    pub fn process_noise(&self) -> DMatrix<f64> {
        &self.g * self.g.transpose()
    }

    /// `H H'`
    pub fn output_noise(&self) -> DMatrix<f64> {
        &self.h * self.h.transpose()
    }
}

/// A Markov jump linear system. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct MjlsModel {
    n: usize,
    p_dim: usize,
    q_dim: usize,
    modes: Vec<ModeMatrices>,
    transition: DMatrix<f64>,
    initial_dist: DVector<f64>,
    init_mean: DVector<f64>,
    init_cov: DMatrix<f64>,
}

impl MjlsModel {
    /// Builds a model after checking that all dimensions agree.
    ///
    /// Only structure is checked here; use [`MjlsModel::validate`] for the
    /// probabilistic and noise assumptions. `init_cov` is symmetrized.
    pub fn new(
        modes: Vec<ModeMatrices>,
        transition: DMatrix<f64>,
        initial_dist: DVector<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::Dimension("model needs at least one mode".into()))?;
        let n = first.a.nrows();
        let p_dim = first.l.nrows();
        let q_dim = first.g.ncols();
        if n == 0 || p_dim == 0 || q_dim == 0 {
            return Err(Error::Dimension(format!(
                "dimensions must be positive (n={n}, p={p_dim}, q={q_dim})"
            )));
        }
        let expect = |what: &str, idx: usize, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.shape() == (r, c) {
                Ok(())
            } else {
                Err(Error::Dimension(format!(
                    "mode {}: {what} is {}x{}, expected {r}x{c}",
                    idx + 1,
                    m.nrows(),
                    m.ncols()
                )))
            }
        };
        for (idx, m) in modes.iter().enumerate() {
            expect("A", idx, &m.a, n, n)?;
            expect("G", idx, &m.g, n, q_dim)?;
            expect("L", idx, &m.l, p_dim, n)?;
            expect("H", idx, &m.h, p_dim, q_dim)?;
        }
        let n_modes = modes.len();
        if transition.shape() != (n_modes, n_modes) {
            return Err(Error::Dimension(format!(
                "P is {}x{}, expected {n_modes}x{n_modes}",
                transition.nrows(),
                transition.ncols()
            )));
        }
        if initial_dist.len() != n_modes {
            return Err(Error::Dimension(format!(
                "pi0 has length {}, expected {n_modes}",
                initial_dist.len()
            )));
        }
        if init_mean.len() != n {
            return Err(Error::Dimension(format!(
                "xbar has length {}, expected {n}",
                init_mean.len()
            )));
        }
        if init_cov.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Psi is {}x{}, expected {n}x{n}",
                init_cov.nrows(),
                init_cov.ncols()
            )));
        }
        let init_cov = (&init_cov + init_cov.transpose()) * 0.5;
        Ok(Self {
            n,
            p_dim,
            q_dim,
            modes,
            transition,
            initial_dist,
            init_mean,
            init_cov,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_dim(&self) -> usize {
        self.p_dim
    }

    pub fn q_dim(&self) -> usize {
        self.q_dim
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ModeMatrices] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &ModeMatrices {
        &self.modes[i]
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// `Pr(θ(k+1) = to | θ(k) = from)`
    #[inline]
    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        self.transition[(from, to)]
    }

    pub fn initial_dist(&self) -> &DVector<f64> {
        &self.initial_dist
    }

    pub fn init_mean(&self) -> &DVector<f64> {
        &self.init_mean
    }

    pub fn init_cov(&self) -> &DMatrix<f64> {
        &self.init_cov
    }

    /// Same plant with a different initial law for `x(0)`.
    pub fn with_initial_state(&self, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.modes.clone(),
            self.transition.clone(),
            self.initial_dist.clone(),
            mean,
            cov,
        )
    }

    /// Same plant with a different initial mode distribution.
    pub fn with_initial_dist(&self, pi0: DVector<f64>) -> Result<Self> {
        Self::new(
            self.modes.clone(),
            self.transition.clone(),
            pi0,
            self.init_mean.clone(),
            self.init_cov.clone(),
        )
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = model_to_json(self);
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every admissibility rule and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let mut push = |rule: &'static str, message: String, index: Option<usize>| {
            violations.push(Violation {
                rule,
                message,
                index,
            })
        };

        let all_finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        for (idx, m) in self.modes.iter().enumerate() {
            if !(all_finite(&m.a) && all_finite(&m.g) && all_finite(&m.l) && all_finite(&m.h)) {
                push(
                    "non-finite",
                    format!("mode {} has non-finite matrix entries", idx + 1),
                    Some(idx + 1),
                );
            }
        }

        let n_modes = self.n_modes();
        for j in 0..n_modes {
            let row = self.transition.row(j);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                push(
                    "transition-range",
                    format!("row {} of P has entries outside [0,1]", j + 1),
                    Some(j + 1),
                );
            }
            let sum: f64 = row.iter().sum();
            if sum.is_nan() || (sum - 1.0).abs() > STOCHASTIC_TOL {
                push(
                    "transition-row-sum",
                    format!("row {} of P not stochastic: sums to {sum}", j + 1),
                    Some(j + 1),
                );
            }
        }

        if self.initial_dist.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            push(
                "initial-range",
                "pi0 has entries outside [0,1]".into(),
                None,
            );
        }
        let sum: f64 = self.initial_dist.iter().sum();
        if sum.is_nan() || (sum - 1.0).abs() > STOCHASTIC_TOL {
            push(
                "initial-sum",
                format!("pi0 not on the simplex: sums to {sum}"),
                None,
            );
        }

        if !self.init_mean.iter().all(|v| v.is_finite()) {
            push("non-finite", "xbar has non-finite entries".into(), None);
        }
        if !all_finite(&self.init_cov) {
            push("non-finite", "Psi has non-finite entries".into(), None);
        } else {
            let min_eig = min_eigenvalue(&self.init_cov);
            let scale = self.init_cov.norm().max(f64::MIN_POSITIVE);
            if min_eig < -DEFINITENESS_TOL * scale {
                push(
                    "init-cov-psd",
                    format!("Psi not positive semidefinite: min eigenvalue {min_eig:e}"),
                    None,
                );
            }
        }

        for (idx, m) in self.modes.iter().enumerate() {
            if !(all_finite(&m.g) && all_finite(&m.h)) {
                continue;
            }
            let cross = &m.g * m.h.transpose();
            let scale = m.g.norm() * m.h.norm();
            if cross.iter().any(|v| v.abs() > ORTHOGONALITY_TOL * scale) {
                push(
                    "noise-orthogonality",
                    format!("mode {}: G H' is not zero", idx + 1),
                    Some(idx + 1),
                );
            }
            let hh = m.output_noise();
            let min_eig = min_eigenvalue(&hh);
            if min_eig.is_nan() || min_eig <= DEFINITENESS_TOL * hh.norm() || min_eig <= 0.0 {
                push(
                    "output-noise-pd",
                    format!(
                        "mode {}: HH' not positive definite (min eigenvalue {min_eig:e})",
                        idx + 1
                    ),
                    Some(idx + 1),
                );
            }
        }

        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }

    /// Validates and converts the report into an error when it is not clean.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(report.summary()))
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new((m + m.transpose()) * 0.5)
        .eigenvalues
        .min()
}

/// One broken admissibility rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Stable rule identifier, e.g. `transition-row-sum`.
    pub rule: &'static str,
    pub message: String,
    /// 1-based mode or row index, when the rule is local to one.
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("[{}] {}", v.rule, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}
