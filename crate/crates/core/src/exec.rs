//! Execution helper for index-parallel loops.
//!
//! Work items are keyed by their index, outputs come back in index order,
//! and all reductions downstream are sequential folds, so results are
//! bit-identical whatever the worker count. Built without the `parallel`
//! feature, everything runs sequentially and `parallel: true` is a no-op.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when requested and compiled in.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as f64).sin() * (i as f64 + 1.0);
        let a = map_indexed(257, true, f);
        let b = map_indexed(257, false, f);
        assert_eq!(a, b);
    }
}
