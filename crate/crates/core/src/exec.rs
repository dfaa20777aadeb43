//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over a rayon pool of the
//! requested size; without it (or with [`Exec::Sequential`]) the same
//! closures run on the calling thread. Results are always returned in input
//! order, so both paths produce identical output.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Parallel over `threads` workers; 0 means the rayon default.
    Parallel { threads: usize },
}

impl Default for Exec {
    fn default() -> Self {
        Exec::Parallel { threads: 0 }
    }
}

impl Exec {
    pub fn with_threads(threads: usize) -> Self {
        if threads == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel { threads }
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Exec::Parallel { .. })
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel { .. } => {
                use rayon::prelude::*;
                items.par_iter().map(&f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Run `f` inside a pool sized for this mode. Nested [`Exec::map`] calls
    /// pick up the pool; without it they use the global rayon pool.
    pub fn install<R, F>(&self, f: F) -> R
    where
        R: Send,
        F: FnOnce() -> R + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel { threads } if *threads > 0 => match pool(*threads) {
                Some(pool) => pool.install(f),
                None => f(),
            },
            _ => f(),
        }
    }

    /// Fallible map; the first error in input order wins.
    pub fn try_map<T, R, E, F>(&self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn pool(threads: usize) -> Option<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .ok()
}
