//! Data-parallel map helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `maybe_par_*` functions fan work
//! out on the rayon pool; without it they run sequentially. Outputs are always
//! collected in index order, so both paths return identical vectors and any
//! left-to-right reduction over the result is bit-exact regardless of thread
//! count. `seq_map_indexed` is the always-sequential baseline the benchmark
//! suite compares against.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, preserving index order.
#[cfg(feature = "parallel")]
pub fn maybe_par_map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving index order.
#[cfg(not(feature = "parallel"))]
pub fn maybe_par_map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Map `f` over a slice, preserving order.
pub fn maybe_par_map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    maybe_par_map_indexed(items.len(), |i| f(&items[i]))
}

/// Sequential reference implementation of [`maybe_par_map_indexed`].
pub fn seq_map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Run `f` over disjoint mutable row chunks of `data` (`chunk_len` elements
/// each); chunk index is passed along. Parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn maybe_par_chunks_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

/// Run `f` over disjoint mutable row chunks of `data` (`chunk_len` elements
/// each); chunk index is passed along. Parallel when the feature is on.
#[cfg(not(feature = "parallel"))]
pub fn maybe_par_chunks_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}
