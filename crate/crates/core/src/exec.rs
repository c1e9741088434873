//! Data-parallel helpers with a sequential fallback.
//!
//! Every kernel in the crate routes its outer loop through [`Execution`].
//! Work items are independent and results are gathered in index order, so
//! sequential and parallel runs produce bit-identical output.

/// How the outer loop of a kernel is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon work-stealing over work items. Falls back to sequential when the
    /// `parallel` feature is disabled.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when this mode will actually run on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills consecutive `chunk_len`-sized slices of `out` with `f(chunk_index, chunk)`.
    pub fn for_each_chunk<T, F>(self, out: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk_len > 0);
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Sets the size of the global rayon pool. A no-op without the `parallel`
/// feature. Returns false if the pool was already initialised.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let seq = Execution::Sequential.map(1000, |i| (i as f64).sqrt());
        let par = Execution::Parallel.map(1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
        assert_eq!(seq[16], 4.0);
    }

    #[test]
    fn chunks_cover_everything() {
        let mut a = vec![0usize; 103];
        Execution::Parallel.for_each_chunk(&mut a, 10, |ci, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = ci * 10 + j;
            }
        });
        assert!(a.iter().enumerate().all(|(i, &v)| i == v));
    }
}
