//! Deterministic data-parallel primitives.
//!
//! Reductions split the index range into fixed-size chunks, reduce each
//! chunk in index order and then fold the per-chunk partials in chunk
//! order. The chunk boundaries do not depend on the thread count, so a
//! reduction returns bitwise-identical results sequentially, with the
//! `parallel` feature disabled, or on any rayon pool size.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Elements per reduction chunk. Large enough to amortize scheduling,
/// small enough to load-balance on a few cores.
const CHUNK: usize = 4096;

fn chunk_ranges(len: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len.div_ceil(CHUNK)).map(move |c| (c * CHUNK, ((c + 1) * CHUNK).min(len)))
}

/// Sum of `f(i)` for `i in 0..len`, chunk-ordered.
pub fn indexed_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials = indexed_partials(len, &f);
    partials.into_iter().sum()
}

fn indexed_partials<F>(len: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let ranges: Vec<(usize, usize)> = chunk_ranges(len).collect();
    let per_chunk = |&(lo, hi): &(usize, usize)| -> f64 { (lo..hi).map(f).sum() };
    #[cfg(feature = "parallel")]
    {
        ranges.par_iter().map(per_chunk).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.iter().map(per_chunk).collect()
    }
}

/// Sequential reference implementation of [`indexed_sum`]; used by the
/// benchmark suite to compare both execution modes.
pub fn indexed_sum_sequential<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    chunk_ranges(len)
        .map(|(lo, hi)| (lo..hi).map(&f).sum::<f64>())
        .sum()
}

/// Maximum of `f(i)` for `i in 0..len`; `NEG_INFINITY` when empty.
pub fn indexed_max<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let ranges: Vec<(usize, usize)> = chunk_ranges(len).collect();
    let per_chunk =
        |&(lo, hi): &(usize, usize)| -> f64 { (lo..hi).map(&f).fold(f64::NEG_INFINITY, f64::max) };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = ranges.par_iter().map(per_chunk).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = ranges.iter().map(per_chunk).collect();
    partials.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Fills `out[i] = f(i)`; each slot is written independently.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}

/// Dot product over equal-length slices, chunk-ordered.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    indexed_sum(a.len(), |i| a[i] * b[i])
}

pub(crate) fn fill_u8<F>(out: &mut [u8], f: F)
where
    F: Fn(usize) -> u8 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}

pub(crate) fn fill_bool<F>(out: &mut [bool], f: F)
where
    F: Fn(usize) -> bool + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}
