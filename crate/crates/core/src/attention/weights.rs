use std::path::Path;

use crate::error::{Error, Result};
use crate::shape::ModelShape;
use crate::tensor::{gen_tensor, load_tensor, save_tensor, DType, Distribution, IntTensor};

/// Stationary projection weights.
///
/// `w_q`, `w_k` and `w_v` are `[H, D, d_k]` (one `[D, d_k]` matrix per head);
/// `w_o` is `[D, D]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSet {
    pub w_q: IntTensor,
    pub w_k: IntTensor,
    pub w_v: IntTensor,
    pub w_o: IntTensor,
}

/// File names of a saved weight set, in `w_q, w_k, w_v, w_o` order.
pub const WEIGHT_FILES: [&str; 4] = ["w_q.bin", "w_k.bin", "w_v.bin", "w_o.bin"];

impl WeightSet {
    pub fn new(w_q: IntTensor, w_k: IntTensor, w_v: IntTensor, w_o: IntTensor) -> Self {
        WeightSet { w_q, w_k, w_v, w_o }
    }

    /// Synthetic weights drawn from `dist`, one independent stream per matrix.
    pub fn random(shape: &ModelShape, wbp: u32, dist: Distribution, seed: u64) -> Result<Self> {
        let dtype = DType::for_bits(wbp)?;
        let per_head = [shape.heads, shape.hidden, shape.head_dim];
        let clamp = |t: IntTensor| clamp_to_bits(t, wbp);
        Ok(WeightSet {
            w_q: clamp(gen_tensor(&per_head, dtype, dist, seed.wrapping_add(1))?)?,
            w_k: clamp(gen_tensor(&per_head, dtype, dist, seed.wrapping_add(2))?)?,
            w_v: clamp(gen_tensor(&per_head, dtype, dist, seed.wrapping_add(3))?)?,
            w_o: clamp(gen_tensor(
                &[shape.hidden, shape.hidden],
                dtype,
                dist,
                seed.wrapping_add(4),
            )?)?,
        })
    }

    pub fn validate(&self, shape: &ModelShape, wbp: u32) -> Result<()> {
        let per_head = [shape.heads, shape.hidden, shape.head_dim];
        for (name, t) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            if t.shape() != per_head {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected {per_head:?}",
                    t.shape()
                )));
            }
        }
        if self.w_o.shape() != [shape.hidden, shape.hidden] {
            return Err(Error::Shape(format!(
                "w_o is {:?}, expected [{}, {}]",
                self.w_o.shape(),
                shape.hidden,
                shape.hidden
            )));
        }
        let lim = 1i64 << (wbp - 1);
        for t in [&self.w_q, &self.w_k, &self.w_v, &self.w_o] {
            if let Some(&bad) = t.data().iter().find(|&&v| (v as i64) < -lim || (v as i64) >= lim) {
                return Err(Error::Overflow {
                    value: bad as i64,
                    bits: wbp,
                });
            }
        }
        Ok(())
    }

    /// All heads of a per-head tensor side by side: row-major `[D, H·d_k]`,
    /// head `h` in columns `h·d_k..(h+1)·d_k`.
    pub fn fused(t: &IntTensor) -> Vec<i64> {
        let (h, d, dk) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let mut out = vec![0i64; d * h * dk];
        for head in 0..h {
            for r in 0..d {
                for c in 0..dk {
                    out[r * h * dk + head * dk + c] = t.data()[(head * d + r) * dk + c] as i64;
                }
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, t) in WEIGHT_FILES.iter().zip([&self.w_q, &self.w_k, &self.w_v, &self.w_o]) {
            save_tensor(dir.join(name), t)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let [q, k, v, o] = WEIGHT_FILES.map(|name| load_tensor(dir.join(name)));
        Ok(WeightSet {
            w_q: q?,
            w_k: k?,
            w_v: v?,
            w_o: o?,
        })
    }
}

/// Clamps a tensor generated in a wider dtype to `bits`-bit two's complement.
pub(crate) fn clamp_to_bits(t: IntTensor, bits: u32) -> Result<IntTensor> {
    let lim = 1i32 << (bits - 1);
    let data = t.data().iter().map(|&v| v.clamp(-lim, lim - 1)).collect();
    IntTensor::new(t.dtype(), t.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_layout() {
        let shape = ModelShape::new(1, 2, 4, 2, 2).unwrap();
        let w = WeightSet::random(&shape, 8, Distribution::Uniform { lo: -9, hi: 9 }, 5).unwrap();
        w.validate(&shape, 8).unwrap();
        let f = WeightSet::fused(&w.w_k);
        // head 1, row 3, column 0
        assert_eq!(f[3 * 4 + 2], w.w_k.data()[(4 + 3) * 2] as i64);
        let wrong = ModelShape::new(1, 2, 8, 2, 4).unwrap();
        assert!(w.validate(&wrong, 8).is_err());
        assert!(w.validate(&shape, 4).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let shape = ModelShape::new(1, 2, 4, 2, 2).unwrap();
        let w = WeightSet::random(&shape, 6, Distribution::Gaussian { mean: 0.0, std: 40.0 }, 1).unwrap();
        assert!(w.w_o.data().iter().all(|&v| (-32..32).contains(&v)));
        w.save(dir.path()).unwrap();
        assert_eq!(WeightSet::load(dir.path()).unwrap(), w);
    }
}
