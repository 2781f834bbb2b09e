//! JSON model files.
//!
//! ```json
//! { "n": 2, "p": 1, "q": 2,
//!   "modes": [ { "A": [[..],[..]], "G": [[..],[..]], "L": [[..]], "H": [[..]] }, ... ],
//!   "P": [[..], ...], "pi0": [..], "xbar": [..], "Psi": [[..],[..]] }
//! ```
//!
//! Matrices are row-major nested arrays. `pi0` defaults to the uniform law,
//! `xbar` to zero and `Psi` to the identity when omitted.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{MjlsModel, ModeMatrices};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
}

/// On-disk form of [`MjlsModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub modes: Vec<ModeFile>,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbar: Option<Vec<f64>>,
    #[serde(rename = "Psi", default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<Vec<f64>>>,
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let got_cols = rows.first().map_or(0, Vec::len);
        return Err(Error::Dimension(format!(
            "{field}: expected {nrows}x{ncols}, got {}x{got_cols}{}",
            rows.len(),
            if rows.iter().any(|r| r.len() != got_cols) {
                " (ragged rows)"
            } else {
                ""
            }
        )));
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn from_model(model: &MjlsModel) -> Self {
        Self {
            n: model.n(),
            p: model.p_dim(),
            q: model.q_dim(),
            modes: model
                .modes()
                .iter()
                .map(|m| ModeFile {
                    a: matrix_to_rows(&m.a),
                    g: matrix_to_rows(&m.g),
                    l: matrix_to_rows(&m.l),
                    h: matrix_to_rows(&m.h),
                })
                .collect(),
            transition: matrix_to_rows(model.transition()),
            pi0: Some(model.initial_dist().iter().copied().collect()),
            xbar: Some(model.init_mean().iter().copied().collect()),
            psi: Some(matrix_to_rows(model.init_cov())),
        }
    }

    pub fn into_model(self) -> Result<MjlsModel> {
        let (n, p, q) = (self.n, self.p, self.q);
        if n == 0 || p == 0 || q == 0 {
            return Err(Error::Dimension(format!(
                "n, p, q must be positive (got n={n}, p={p}, q={q})"
            )));
        }
        let n_modes = self.modes.len();
        if n_modes == 0 {
            return Err(Error::Dimension("modes: at least one mode is required".into()));
        }
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let at = |name: &str| format!("modes[{}].{name}", i);
                Ok(ModeMatrices::new(
                    rows_to_matrix(&at("A"), &m.a, n, n)?,
                    rows_to_matrix(&at("G"), &m.g, n, q)?,
                    rows_to_matrix(&at("L"), &m.l, p, n)?,
                    rows_to_matrix(&at("H"), &m.h, p, q)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let transition = rows_to_matrix("P", &self.transition, n_modes, n_modes)?;
        let pi0 = match self.pi0 {
            Some(v) if v.len() != n_modes => {
                return Err(Error::Dimension(format!(
                    "pi0: expected length {n_modes}, got {}",
                    v.len()
                )))
            }
            Some(v) => DVector::from_vec(v),
            None => DVector::from_element(n_modes, 1.0 / n_modes as f64),
        };
        let xbar = match self.xbar {
            Some(v) if v.len() != n => {
                return Err(Error::Dimension(format!(
                    "xbar: expected length {n}, got {}",
                    v.len()
                )))
            }
            Some(v) => DVector::from_vec(v),
            None => DVector::zeros(n),
        };
        let psi = match self.psi {
            Some(rows) => rows_to_matrix("Psi", &rows, n, n)?,
            None => DMatrix::identity(n, n),
        };
        MjlsModel::new(modes, transition, pi0, xbar, psi)
    }
}

/// Parses a model from JSON text; `source_name` labels diagnostics.
pub fn model_from_json(text: &str, source_name: &str) -> Result<MjlsModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_model()
}

/// Canonical pretty JSON encoding; floats are written in shortest round-trip form.
pub fn model_to_json(model: &MjlsModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes")
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MjlsModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, &path.display().to_string())
}

pub fn save_model(model: &MjlsModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = model_to_json(model);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const DATA1: &str = include_str!("../../data/data1.json");
    const TOTO: &str = include_str!("../../data/toto.json");

    #[test]
    fn data1_fixture_parses() {
        let m = model_from_json(DATA1, "data1.json").unwrap();
        assert_eq!(m.mode(0).a[(0, 1)], -0.405);
        assert_eq!(m, fixtures::data1());
        assert!(m.validate().ok);
    }

    #[test]
    fn toto_fixture_matches_scaled_mode() {
        assert_eq!(model_from_json(TOTO, "toto.json").unwrap(), fixtures::toto());
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        let err = model_from_json("", "empty.json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn parse_error_reports_position() {
        let err = model_from_json("{\n  \"n\": 2,\n  \"p\": x\n}", "bad.json").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dimension_mismatch_names_field() {
        let text = DATA1.replacen("[0.0, -0.405]", "[0.0, -0.405, 1.0]", 1);
        let err = model_from_json(&text, "x").unwrap_err();
        assert!(err.to_string().contains("modes[0].A"), "{err}");
    }

    #[test]
    fn defaults_fill_missing_initial_law() {
        let mut file = ModelFile::from_model(&fixtures::data1());
        file.pi0 = None;
        file.xbar = None;
        file.psi = None;
        let m = file.into_model().unwrap();
        assert_eq!(m.initial_dist().as_slice(), &[0.25; 4]);
        assert_eq!(m.init_cov(), &DMatrix::identity(2, 2));
        assert_eq!(m.init_mean(), &DVector::zeros(2));
    }

    #[test]
    fn save_then_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = fixtures::toto();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(
            load_model(dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }
}
