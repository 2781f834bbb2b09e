use std::fmt;

use crate::{Error, Result};

/// An ordered partition `S_1, …, S_{N_C}` of the mode set.
///
/// Cluster order is significant: it fixes the cluster indices that make up
/// tree paths. Mode and cluster indices are 0-based here.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clustering {
    clusters: Vec<Vec<usize>>,
    // mode -> cluster
    lookup: Vec<usize>,
}

impl Clustering {
    /// Builds a clustering of `{0..n_modes}` from 0-based blocks, keeping the given order.
    pub fn new(clusters: Vec<Vec<usize>>, n_modes: usize) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Clustering("at least one cluster is required".into()));
        }
        let mut lookup = vec![usize::MAX; n_modes];
        let mut clusters = clusters;
        for (c, block) in clusters.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(Error::Clustering(format!("cluster {} is empty", c + 1)));
            }
            block.sort_unstable();
            for &mode in block.iter() {
                if mode >= n_modes {
                    return Err(Error::Clustering(format!(
                        "mode {} out of range 1..={n_modes}",
                        mode + 1
                    )));
                }
                if lookup[mode] != usize::MAX {
                    return Err(Error::Clustering(format!(
                        "mode {} appears in more than one cluster",
                        mode + 1
                    )));
                }
                lookup[mode] = c;
            }
        }
        if let Some(missing) = lookup.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Clustering(format!(
                "mode {} is not covered by any cluster",
                missing + 1
            )));
        }
        Ok(Self { clusters, lookup })
    }

    /// Builds a clustering from 1-based blocks, as written in files and on the command line.
    pub fn from_one_based(clusters: &[Vec<usize>], n_modes: usize) -> Result<Self> {
        let zero_based = clusters
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|&m| {
                        m.checked_sub(1)
                            .ok_or_else(|| Error::Clustering("mode index 0 (indices are 1-based)".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero_based, n_modes)
    }

    /// One cluster per mode: the Kalman end of the lattice.
    pub fn singletons(n_modes: usize) -> Self {
        Self {
            clusters: (0..n_modes).map(|i| vec![i]).collect(),
            lookup: (0..n_modes).collect(),
        }
    }

    /// A single cluster holding every mode: the Markovian LMMSE end of the lattice.
    pub fn single(n_modes: usize) -> Self {
        Self {
            clusters: vec![(0..n_modes).collect()],
            lookup: vec![0; n_modes],
        }
    }

    /// Parses `"{1,2}|{3}"` or a JSON array of arrays such as `[[1,2],[3]]` (1-based).
    pub fn parse(text: &str, n_modes: usize) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('[') {
            let blocks: Vec<Vec<usize>> = serde_json::from_str(text)
                .map_err(|e| Error::Clustering(format!("bad JSON clustering: {e}")))?;
            return Self::from_one_based(&blocks, n_modes);
        }
        let mut blocks = Vec::new();
        for part in text.split('|') {
            let part = part.trim();
            let inner = part
                .strip_prefix('{')
                .and_then(|p| p.strip_suffix('}'))
                .ok_or_else(|| Error::Clustering(format!("expected {{i,j,...}}, got {part:?}")))?;
            let block = inner
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| Error::Clustering(format!("bad mode index {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push(block);
        }
        Self::from_one_based(&blocks, n_modes)
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_modes(&self) -> usize {
        self.lookup.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Modes of cluster `c` in ascending order.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.clusters[c]
    }

    /// Cluster containing `mode` (both 0-based).
    #[inline]
    pub fn cluster_of(&self, mode: usize) -> usize {
        self.lookup[mode]
    }

    /// `ρ` for a 1-based mode, returned 1-based.
    pub fn cluster_index(&self, mode: usize) -> Result<usize> {
        if mode == 0 || mode > self.n_modes() {
            return Err(Error::ModeOutOfRange {
                mode,
                n_modes: self.n_modes(),
            });
        }
        Ok(self.lookup[mode - 1] + 1)
    }

    /// True when every block of `self` lies inside some block of `coarser`.
    pub fn refines(&self, coarser: &Clustering) -> bool {
        self.n_modes() == coarser.n_modes()
            && self.clusters.iter().all(|block| {
                let target = coarser.cluster_of(block[0]);
                block.iter().all(|&m| coarser.cluster_of(m) == target)
            })
    }

    /// Canonical label: blocks sorted by smallest element, e.g. `{1,2,3}|{4}`.
    pub fn label(&self) -> String {
        let mut blocks: Vec<&Vec<usize>> = self.clusters.iter().collect();
        blocks.sort_by_key(|b| b[0]);
        blocks
            .iter()
            .map(|b| {
                let items: Vec<String> = b.iter().map(|m| (m + 1).to_string()).collect();
                format!("{{{}}}", items.join(","))
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Same partition with blocks reordered canonically.
    pub fn canonical(&self) -> Self {
        let mut clusters = self.clusters.clone();
        clusters.sort_by_key(|b| b[0]);
        Self::new(clusters, self.n_modes()).expect("reordering keeps a valid partition")
    }
}

impl fmt::Display for Clustering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
