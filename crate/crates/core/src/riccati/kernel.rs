use nalgebra::{Cholesky, DMatrix, DMatrixView};

use crate::model::MjlsModel;

/// Per-mode constants reused by every node update.
#[derive(Debug, Clone)]
pub(crate) struct ModeCache {
    pub a: DMatrix<f64>,
    pub a_t: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub l_t: DMatrix<f64>,
    pub gg: DMatrix<f64>,
    pub hh: DMatrix<f64>,
}

/// Result of one normalized Kalman update of a conditional covariance.
pub(crate) struct Update {
    /// `A Ȳ L' (L Ȳ L' + H H')^{-1}`
    pub gain: DMatrix<f64>,
    /// `A Ȳ A' + G G' − A Ȳ L' (L Ȳ L' + H H')^{-1} L Ȳ A'`, symmetrized.
    pub predicted: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    pub n: usize,
    pub p_dim: usize,
    pub modes: Vec<ModeCache>,
}

impl Kernel {
    pub fn new(model: &MjlsModel) -> Self {
        let modes = model
            .modes()
            .iter()
            .map(|m| ModeCache {
                a: m.a.clone(),
                a_t: m.a.transpose(),
                l: m.l.clone(),
                l_t: m.l.transpose(),
                gg: m.process_noise(),
                hh: m.output_noise(),
            })
            .collect();
        Self {
            n: model.n(),
            p_dim: model.p_dim(),
            modes,
        }
    }

    /// Normalized update for mode `j`. `None` when the inner matrix is not positive definite.
    pub fn update(&self, j: usize, ybar: DMatrixView<'_, f64>) -> Option<Update> {
        let m = &self.modes[j];
        let ay = &m.a * ybar;
        let ayl = &ay * &m.l_t;
        let inner = &m.l * ybar * &m.l_t + &m.hh;
        let chol = Cholesky::new(inner)?;
        // M = AYL' Φ^{-1}  <=>  Φ M' = (AYL')'
        let gain = chol.solve(&ayl.transpose()).transpose();
        let mut predicted = &ay * &m.a_t + &m.gg - &gain * ayl.transpose();
        symmetrize(&mut predicted);
        Some(Update { gain, predicted })
    }
}

/// `M ← (M + M')/2` in place.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}
