//! Enumeration of all clusterings of a mode set.

use crate::model::Clustering;
use crate::{Error, Result};

/// Largest mode count [`enumerate_partitions`] accepts (Bell(12) = 4 213 597).
pub const MAX_ENUMERATED_MODES: usize = 12;

/// Every set partition of `{1..N}`, in lexicographic order of restricted growth strings.
///
/// A restricted growth string `a` has `a[0] = 0` and `a[i] ≤ 1 + max(a[..i])`;
/// mode `i` goes to block `a[i]`, so blocks come out ordered by smallest member.
pub fn enumerate_partitions(n_modes: usize) -> Result<Vec<Clustering>> {
    if n_modes == 0 || n_modes > MAX_ENUMERATED_MODES {
        return Err(Error::TooManyModes(n_modes));
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; n_modes];
    // max(a[..=i]) for each prefix
    let mut prefix_max = vec![0usize; n_modes];
    loop {
        out.push(from_growth_string(&a, prefix_max[n_modes - 1] + 1));
        // rightmost position that can still grow
        let Some(i) = (1..n_modes).rev().find(|&i| a[i] <= prefix_max[i - 1]) else {
            return Ok(out);
        };
        a[i] += 1;
        prefix_max[i] = prefix_max[i - 1].max(a[i]);
        for j in i + 1..n_modes {
            a[j] = 0;
            prefix_max[j] = prefix_max[i];
        }
    }
}

fn from_growth_string(a: &[usize], n_blocks: usize) -> Clustering {
    let mut blocks = vec![Vec::new(); n_blocks];
    for (mode, &b) in a.iter().enumerate() {
        blocks[b].push(mode);
    }
    Clustering::new(blocks, a.len()).expect("growth strings encode partitions")
}
