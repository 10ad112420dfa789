//! Sequential / data-parallel execution switch.
//!
//! Every hot loop in the crate (Monte Carlo trials, per-token pipeline work,
//! batch scheduling, softmax sweeps) is written once against [`Exec`]. With the
//! `parallel` feature disabled, [`Exec::Parallel`] silently degrades to the
//! sequential path so results never depend on the build.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run work on the rayon pool.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Map `f` over `0..n`, preserving index order in the output.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Map `f` over a slice, preserving order.
    pub fn map_slice<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Map then reduce with an associative `combine`.
    pub fn map_reduce<R, F, C>(self, n: usize, identity: R, f: F, combine: C) -> R
    where
        R: Send + Sync + Clone,
        F: Fn(usize) -> R + Sync + Send,
        C: Fn(R, R) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).reduce(|| identity.clone(), &combine)
            }
            _ => (0..n).map(f).fold(identity, combine),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i * i) as u64;
        let a = Exec::Sequential.map_range(1000, f);
        let b = Exec::Parallel.map_range(1000, f);
        assert_eq!(a, b);
        let s = Exec::Sequential.map_reduce(1000, 0u64, f, |a, b| a + b);
        let p = Exec::Parallel.map_reduce(1000, 0u64, f, |a, b| a + b);
        assert_eq!(s, p);
    }
}
