//! Execution strategy for independent replications.
//!
//! Replications never share mutable state, so they can be mapped over a rayon
//! pool. Without the `parallel` feature every strategy runs sequentially.
//! Results keep input order either way, so outputs do not depend on the
//! strategy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Strategy using at most `jobs` worker threads. Sizes the global rayon
    /// pool, so only the first call in a process has any effect on it.
    pub fn with_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            None => Execution::default(),
            Some(0 | 1) => Execution::Sequential,
            #[cfg(feature = "parallel")]
            Some(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                Execution::Parallel
            }
            #[cfg(not(feature = "parallel"))]
            Some(_) => Execution::Sequential,
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}
