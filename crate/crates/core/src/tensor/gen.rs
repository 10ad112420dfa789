use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use super::{DType, IntTensor};
use crate::error::{Error, Result};

/// Synthetic element distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform over the inclusive integer range.
    Uniform { lo: i64, hi: i64 },
    /// `round(N(mean, std))`, clamped to the dtype range.
    Gaussian { mean: f64, std: f64 },
    /// Each element is nonzero with probability `density`; nonzero elements
    /// are uniform over `[lo, hi]`.
    Sparse { density: f64, lo: i64, hi: i64 },
}

impl Distribution {
    fn validate(&self, dtype: DType) -> Result<()> {
        let in_range = |lo: i64, hi: i64| -> Result<()> {
            if lo > hi {
                return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")));
            }
            if lo < dtype.min() || hi > dtype.max() {
                return Err(Error::InvalidArgument(format!(
                    "range [{lo}, {hi}] exceeds {}",
                    dtype.name()
                )));
            }
            Ok(())
        };
        match *self {
            Distribution::Uniform { lo, hi } => in_range(lo, hi),
            Distribution::Gaussian { std, mean } => {
                if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(Error::InvalidArgument(format!("invalid gaussian N({mean}, {std})")));
                }
                Ok(())
            }
            Distribution::Sparse { density, lo, hi } => {
                if !(0.0..=1.0).contains(&density) {
                    return Err(Error::InvalidArgument(format!("density {density} outside [0, 1]")));
                }
                in_range(lo, hi)
            }
        }
    }
}

/// Deterministic synthetic tensor: the same `(shape, dtype, dist, seed)`
/// always yields the same elements.
pub fn gen_tensor(shape: &[usize], dtype: DType, dist: Distribution, seed: u64) -> Result<IntTensor> {
    dist.validate(dtype)?;
    let numel: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<i32> = match dist {
        Distribution::Uniform { lo, hi } => (0..numel).map(|_| rng.random_range(lo..=hi) as i32).collect(),
        Distribution::Gaussian { mean, std } => {
            let normal = Normal::new(mean, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..numel)
                .map(|_| {
                    let v = normal.sample(&mut rng).round();
                    v.clamp(dtype.min() as f64, dtype.max() as f64) as i32
                })
                .collect()
        }
        Distribution::Sparse { density, lo, hi } => (0..numel)
            .map(|_| {
                if rng.random_bool(density) {
                    rng.random_range(lo..=hi) as i32
                } else {
                    0
                }
            })
            .collect(),
    };
    IntTensor::new(dtype, shape.to_vec(), data)
}
