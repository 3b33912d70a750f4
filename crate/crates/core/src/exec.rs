//! Data-parallel execution with a sequential fallback.
//!
//! Work is always split into the same chunks, and results are returned in
//! input order, so parallel and sequential runs produce bitwise-identical
//! reductions.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled; otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

/// Maps `f` over fixed-size chunks of `items`, preserving order.
pub fn map_chunks<T, R, F>(mode: ExecMode, items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
    map(mode, &chunks, |i, c| f(i, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let xs: Vec<u64> = (0..100).collect();
        let a = map_chunks(ExecMode::Sequential, &xs, 7, |i, c| (i, c.iter().sum::<u64>()));
        let b = map_chunks(ExecMode::Parallel, &xs, 7, |i, c| (i, c.iter().sum::<u64>()));
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        assert_eq!(a[0], (0, 21));
    }
}
