//! Execution strategy for the data-parallel loops (tree levels, Monte Carlo trials).
//!
//! With the `parallel` feature the loops run on the rayon global pool; without
//! it every strategy runs sequentially. Results do not depend on the strategy.

/// How to run a data-parallel loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing; sequential when the `parallel` feature is off.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n` and collects in index order.
pub(crate) fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs `f(index, a_chunk, b_chunk, c_chunk)` over matching chunks of three buffers.
///
/// Chunk sizes of zero mean the buffer is not split (it must then be empty).
pub(crate) fn for_each_chunk3<A, B, C, E, F>(
    exec: Execution,
    count: usize,
    (a, a_len): (&mut [A], usize),
    (b, b_len): (&mut [B], usize),
    (c, c_len): (&mut [C], usize),
    f: F,
) -> Result<usize, E>
where
    A: Send,
    B: Send,
    C: Send,
    E: Send,
    F: Fn(usize, &mut [A], &mut [B], &mut [C]) -> Result<usize, E> + Sync + Send,
{
    fn split<T>(buf: &mut [T], len: usize, count: usize) -> Vec<&mut [T]> {
        if len == 0 {
            (0..count).map(|_| <&mut [T]>::default()).collect()
        } else {
            buf.chunks_mut(len).collect()
        }
    }
    let a = split(a, a_len, count);
    let b = split(b, b_len, count);
    let c = split(c, c_len, count);
    debug_assert!(a.len() == count && b.len() == count && c.len() == count);

    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return a
            .into_par_iter()
            .zip(b)
            .zip(c)
            .enumerate()
            .map(|(i, ((a, b), c))| f(i, a, b, c))
            .try_reduce(|| 0, |x, y| Ok(x + y));
    }
    let _ = exec;
    let mut total = 0;
    for (i, ((a, b), c)) in a.into_iter().zip(b).zip(c).enumerate() {
        total += f(i, a, b, c)?;
    }
    Ok(total)
}
