//! Binary gain-tree container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "CLMMSETR"
//! version  u32
//! hlen     u64      length of the JSON header
//! header   hlen bytes of UTF-8 JSON (see `Header`)
//! per depth k = 0..=s, depth-major:
//!   nodes           u64
//!   factorizations  u64
//!   prob   nodes·N        f64
//!   cov    nodes·N·n·n    f64   conditional covariances, column-major
//!   gain   nodes·N·n·p    f64   column-major
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a read reproduces the tree exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{GainTree, Level};
use crate::model::{Clustering, ModelFile};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CLMMSETR";
pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    model_sha256: String,
    clustering: String,
    horizon: usize,
    n: usize,
    p: usize,
    q: usize,
    n_modes: usize,
    n_clusters: usize,
    /// Clusters in tree order (1-based); the label alone loses the order.
    clusters: Vec<Vec<usize>>,
    model: ModelFile,
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Writes `tree` to any sink.
pub fn write_tree_to<W: Write>(tree: &GainTree, mut w: W) -> std::io::Result<()> {
    let model = tree.model();
    let header = Header {
        version: TREE_FORMAT_VERSION,
        model_sha256: model.fingerprint(),
        clustering: tree.clustering().label(),
        horizon: tree.horizon(),
        n: model.n(),
        p: model.p_dim(),
        q: model.q_dim(),
        n_modes: model.n_modes(),
        n_clusters: tree.n_clusters(),
        clusters: tree
            .clustering()
            .clusters()
            .iter()
            .map(|b| b.iter().map(|m| m + 1).collect())
            .collect(),
        model: ModelFile::from_model(model),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(MAGIC)?;
    w.write_all(&TREE_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (depth, level) in tree.levels.iter().enumerate() {
        w.write_all(&(tree.nodes_at(depth) as u64).to_le_bytes())?;
        w.write_all(&(level.factorizations as u64).to_le_bytes())?;
        write_f64s(&mut w, &level.prob)?;
        write_f64s(&mut w, &level.cov)?;
        write_f64s(&mut w, &level.gain)?;
    }
    w.flush()
}

/// Reads a tree from any source.
pub fn read_tree_from<R: Read>(mut r: R) -> Result<GainTree> {
    let bad = |msg: String| Error::TreeFormat(msg);
    let io = |e: std::io::Error| Error::TreeFormat(format!("truncated or unreadable: {e}"));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a gain-tree file (bad magic)".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version).map_err(io)?;
    let version = u32::from_le_bytes(version);
    if version != TREE_FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported version {version} (expected {TREE_FORMAT_VERSION})"
        )));
    }
    let hlen = read_u64(&mut r).map_err(io)? as usize;
    if hlen > 1 << 30 {
        return Err(bad(format!("header length {hlen} is implausible")));
    }
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| bad(format!("bad header: {e}")))?;

    let model = header.model.into_model()?;
    if model.fingerprint() != header.model_sha256 {
        return Err(bad("embedded model does not match its fingerprint".into()));
    }
    let clustering = Clustering::from_one_based(&header.clusters, model.n_modes())?;
    if clustering.label() != header.clustering || clustering.n_clusters() != header.n_clusters {
        return Err(bad("clustering header is inconsistent".into()));
    }
    if (header.n, header.p, header.q, header.n_modes) != (model.n(), model.p_dim(), model.q_dim(), model.n_modes()) {
        return Err(bad("dimension header is inconsistent with the model".into()));
    }

    let (n_modes, nn, np) = (model.n_modes(), model.n() * model.n(), model.n() * model.p_dim());
    let mut levels = Vec::with_capacity(header.horizon + 1);
    let mut expected_nodes = 1usize;
    for depth in 0..=header.horizon {
        let nodes = read_u64(&mut r).map_err(io)? as usize;
        if nodes != expected_nodes {
            return Err(bad(format!(
                "depth {depth} has {nodes} nodes, expected {expected_nodes}"
            )));
        }
        let factorizations = read_u64(&mut r).map_err(io)? as usize;
        let prob = read_f64s(&mut r, nodes * n_modes).map_err(io)?;
        let cov = read_f64s(&mut r, nodes * n_modes * nn).map_err(io)?;
        let gain = read_f64s(&mut r, nodes * n_modes * np).map_err(io)?;
        levels.push(Level {
            prob,
            cov,
            gain,
            factorizations,
        });
        expected_nodes = expected_nodes.saturating_mul(clustering.n_clusters());
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(bad("trailing bytes after the last level".into()));
    }
    Ok(GainTree {
        model,
        clustering,
        horizon: header.horizon,
        levels,
    })
}

pub fn write_tree(tree: &GainTree, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tree_to(tree, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_tree(path: impl AsRef<Path>) -> Result<GainTree> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tree_from(BufReader::new(file))
}
