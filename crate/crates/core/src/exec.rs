//! Ordered map over an index range, parallel when the `parallel` feature is
//! enabled and the caller asks for it.
//!
//! Results always come back in index order, and callers reduce them
//! sequentially, so parallel and sequential runs are bit-identical.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Sequential,
    /// Use the current rayon pool. Without the `parallel` feature this is the
    /// same as `Sequential`.
    Parallel,
}

impl Exec {
    /// `jobs == 1` is sequential; anything else runs on the rayon pool.
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => parallel_map(n, f),
        }
    }

    /// Like [`Exec::map`] but stops at the first error (in index order).
    pub fn try_map<R, E, F>(self, n: usize, f: F) -> Result<Vec<R>, E>
    where
        R: Send,
        E: Send,
        F: Fn(usize) -> Result<R, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool. Only the first call has any effect.
#[cfg(feature = "parallel")]
pub fn init_pool(jobs: usize) {
    if jobs > 1 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn init_pool(_jobs: usize) {}
