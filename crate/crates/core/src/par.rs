//! Data-parallel helpers.
//!
//! Every hot loop that is embarrassingly parallel (ensemble replicas, per-cell
//! gain sums, residual sweeps) goes through [`Execution`]. With the `parallel`
//! feature disabled, [`Execution::Parallel`] silently runs sequentially, so
//! call sites never need their own `cfg`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f).collect()`, in index order regardless of scheduling.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
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

    /// Maximum of `f(i)` over `0..n`; NaN-free inputs assumed. Max is
    /// associative, so the result does not depend on the split.
    pub fn max_range<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).reduce(|| 0.0_f64, f64::max);
        }
        (0..n).map(f).fold(0.0_f64, f64::max)
    }

    /// Fill `out[i] = f(i)`.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
    }
}

/// Build the global rayon pool with at most `threads` workers. A no-op without
/// the `parallel` feature or when the pool already exists.
pub fn init_thread_cap(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let v = exec.map_range(1000, |i| i * 3);
            assert!(v.iter().enumerate().all(|(i, &x)| x == 3 * i));
        }
    }

    #[test]
    fn max_matches_sequential() {
        let f = |i: usize| ((i as f64) * 0.37).sin().abs();
        let a = Execution::Sequential.max_range(5000, f);
        let b = Execution::Parallel.max_range(5000, f);
        assert_eq!(a, b);
    }
}
