//! Reference systems used in tests, benches and documentation.

use nalgebra::{DMatrix, DVector};

use crate::model::{MjlsModel, ModeMatrices};

fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Scalar three-mode chain with identical modes `A = G = 1`, `Ψ = 1`, `x̄ = 0`.
///
/// The noise is two-dimensional so that `G = [1 0]` and `H = [0 1]` satisfy
/// `G H' = 0`; `L = 1`. The usual clustering is `{1,2}|{3}`.
pub fn three_mode_chain() -> MjlsModel {
    let mode = ModeMatrices::new(
        m(1, 1, &[1.0]),
        m(1, 2, &[1.0, 0.0]),
        m(1, 1, &[1.0]),
        m(1, 2, &[0.0, 1.0]),
    );
    MjlsModel::new(
        vec![mode.clone(), mode.clone(), mode],
        m(3, 3, &[0.5, 0.4, 0.1, 1.0, 0.0, 0.0, 0.5, 0.0, 0.5]),
        DVector::from_vec(vec![0.5, 0.3, 0.2]),
        DVector::zeros(1),
        DMatrix::identity(1, 1),
    )
    .expect("three-mode chain is well formed")
}

/// Four-mode second-order system with scalar output.
///
/// `H = [0 1]` realizes the unit output noise orthogonal to `G = diag(0.5, 0)`.
/// The initial law is `π0` uniform, `x̄ = 0`, `Ψ = I`.
pub fn data1() -> MjlsModel {
    let a = [
        [0.0, -0.405, 0.81, 0.81],
        [0.0, -0.2673, 0.81, 1.134],
        [0.0, -0.81, 0.81, 0.972],
        [0.0, -0.1863, 0.81, 0.891],
    ];
    let modes = a
        .iter()
        .map(|a| {
            ModeMatrices::new(
                m(2, 2, a),
                m(2, 2, &[0.5, 0.0, 0.0, 0.0]),
                m(1, 2, &[1.0, 0.0]),
                m(1, 2, &[0.0, 1.0]),
            )
        })
        .collect();
    MjlsModel::new(
        modes,
        m(
            4,
            4,
            &[
                0.3, 0.2, 0.1, 0.4, //
                0.3, 0.2, 0.3, 0.2, //
                0.1, 0.1, 0.5, 0.3, //
                0.2, 0.2, 0.1, 0.5,
            ],
        ),
        DVector::from_element(4, 0.25),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
    )
    .expect("data1 is well formed")
}

/// [`data1`] with every matrix of mode 4 multiplied by ten.
pub fn toto() -> MjlsModel {
    let base = data1();
    let mut modes = base.modes().to_vec();
    let m4 = &mut modes[3];
    m4.a *= 10.0;
    m4.g *= 10.0;
    m4.l *= 10.0;
    m4.h *= 10.0;
    MjlsModel::new(
        modes,
        base.transition().clone(),
        base.initial_dist().clone(),
        base.init_mean().clone(),
        base.init_cov().clone(),
    )
    .expect("toto is well formed")
}

/// Scalar single-mode plant `A = G = L = H = 1` (two-dimensional noise), `Ψ = 1`.
pub fn scalar_single_mode() -> MjlsModel {
    MjlsModel::new(
        vec![ModeMatrices::new(
            m(1, 1, &[1.0]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[1.0]),
            m(1, 2, &[0.0, 1.0]),
        )],
        m(1, 1, &[1.0]),
        DVector::from_element(1, 1.0),
        DVector::zeros(1),
        DMatrix::identity(1, 1),
    )
    .expect("scalar model is well formed")
}

/// Random valid model with `n_modes` modes, state dimension `n` and output dimension `p_dim`.
///
/// The noise has `q = n + p` components, `G = [G₀ 0]` and `H = [0 H₀]`, so
/// `G H' = 0` and `H H' = H₀ H₀' > 0`. Some transitions are zero, which makes
/// some `(path, mode)` pairs unreachable. Deterministic in `seed`.
pub fn random_model(seed: u64, n_modes: usize, n: usize, p_dim: usize) -> MjlsModel {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = crate::rng::stream(seed, 0, crate::rng::Purpose::Model);
    let q = n + p_dim;
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut modes = Vec::with_capacity(n_modes);
    for _ in 0..n_modes {
        let a = normal(n, n) * (0.9 / (n as f64).sqrt());
        let mut g = DMatrix::zeros(n, q);
        g.view_mut((0, 0), (n, n)).copy_from(&(normal(n, n) * 0.7));
        let mut h = DMatrix::zeros(p_dim, q);
        let h0 = DMatrix::identity(p_dim, p_dim) * 0.8 + normal(p_dim, p_dim) * 0.2;
        h.view_mut((0, n), (p_dim, p_dim)).copy_from(&h0);
        let l = normal(p_dim, n);
        modes.push(ModeMatrices::new(a, g, l, h));
    }
    let b = normal(n, n);
    let psi = &b * b.transpose() * 0.5 + DMatrix::identity(n, n) * 0.1;
    let mut rows = Vec::with_capacity(n_modes * n_modes);
    for i in 0..n_modes {
        let mut row: Vec<f64> = (0..n_modes)
            .map(|j| {
                let u: f64 = rng.random();
                // keep the diagonal so every row has mass; drop about a quarter of the rest
                if j != i && u < 0.25 {
                    0.0
                } else {
                    rng.random::<f64>() + 0.05
                }
            })
            .collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
        rows.extend(row);
    }
    let mut pi0: Vec<f64> = (0..n_modes).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = pi0.iter().sum();
    pi0.iter_mut().for_each(|v| *v /= total);
    let mean = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    MjlsModel::new(
        modes,
        DMatrix::from_row_slice(n_modes, n_modes, &rows),
        DVector::from_vec(pi0),
        mean,
        psi,
    )
    .expect("random model is well formed")
}
