//! Data-parallel helpers.
//!
//! With the `parallel` feature every helper dispatches to rayon; without it the
//! same loops run sequentially. Work is split into fixed-size chunks that do not
//! depend on the thread count, so both builds produce bit-identical results.

/// Rows per chunk for reductions. Fixed so that partial sums are combined in
/// the same order regardless of how many workers run.
pub const REDUCE_CHUNK: usize = 4096;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Applies `f(row_index, row)` to each `width`-long row of `values`.
pub fn for_each_row_mut<F>(values: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        values
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        values
            .chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Maps each `width`-long row of `values` to one output value.
pub fn map_rows<T, F>(values: &[f64], width: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync + Send,
{
    if width == 0 {
        return Vec::new();
    }
    #[cfg(feature = "parallel")]
    {
        values.par_chunks(width).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        values.chunks(width).map(f).collect()
    }
}

/// Computes one partial result per block of `REDUCE_CHUNK` rows and returns
/// them in block order. Callers fold the partials sequentially.
pub fn chunked_partials<T, F>(values: &[f64], width: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync + Send,
{
    if width == 0 {
        return Vec::new();
    }
    let block = REDUCE_CHUNK * width;
    #[cfg(feature = "parallel")]
    {
        values.par_chunks(block).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        values.chunks(block).map(f).collect()
    }
}
