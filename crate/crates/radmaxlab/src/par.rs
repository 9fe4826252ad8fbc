//! Data-parallel helpers. With the `parallel` feature (default) the indexed
//! maps run on rayon; without it they fall back to the sequential versions.
//! Both paths produce identical results: outputs are collected in index
//! order and reductions happen sequentially over the collected vector, so
//! reports are byte-identical regardless of thread count.

/// Map `f` over `0..n`, preserving index order.
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential reference implementation, always available (used by the bench
/// suite to compare against the rayon path).
pub fn map_indexed_seq<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Ordered sum of `f(i)` over `0..n`. Summation order is fixed.
pub fn sum_indexed(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    map_indexed(n, f).iter().sum()
}

pub fn sum_indexed_seq(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    map_indexed_seq(n, f).iter().sum()
}

/// Cap the rayon pool size (no-op without the `parallel` feature or if a
/// global pool was already installed).
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}
