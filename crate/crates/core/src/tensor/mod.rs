//! Integer tensors, bit planes, synthetic generators and the exchange format.

mod bits;
mod gen;
mod io;

pub use bits::{bit_decompose, bit_recompose, order_planes, BitOrder, BitPlane};
pub use gen::{gen_tensor, Distribution};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, TensorHeader};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed two's-complement element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    I16,
    I32,
}

impl DType {
    pub fn bits(self) -> u32 {
        match self {
            DType::I8 => 8,
            DType::I16 => 16,
            DType::I32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn min(self) -> i64 {
        -(1i64 << (self.bits() - 1))
    }

    pub fn max(self) -> i64 {
        (1i64 << (self.bits() - 1)) - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::I8 => "i8",
            DType::I16 => "i16",
            DType::I32 => "i32",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "i8" => Ok(DType::I8),
            "i16" => Ok(DType::I16),
            "i32" => Ok(DType::I32),
            other => Err(Error::MalformedHeader(format!("unknown dtype '{other}'"))),
        }
    }

    /// Smallest dtype holding `bits`-bit signed values.
    pub fn for_bits(bits: u32) -> Result<Self> {
        match bits {
            0 => Err(Error::InvalidArgument("zero-width dtype".into())),
            1..=8 => Ok(DType::I8),
            9..=16 => Ok(DType::I16),
            17..=32 => Ok(DType::I32),
            _ => Err(Error::InvalidArgument(format!("{bits}-bit elements are not supported"))),
        }
    }
}

/// Row-major signed integer tensor.
///
/// Elements are held as `i32` regardless of `dtype`; the dtype bounds every
/// element and fixes the on-disk width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor {
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<i32>,
}

impl IntTensor {
    pub fn new(dtype: DType, shape: Vec<usize>, data: Vec<i32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::LengthMismatch {
                expected: numel,
                actual: data.len(),
            });
        }
        if let Some(&bad) = data
            .iter()
            .find(|&&v| (v as i64) < dtype.min() || (v as i64) > dtype.max())
        {
            return Err(Error::Overflow {
                value: bad as i64,
                bits: dtype.bits(),
            });
        }
        Ok(IntTensor { dtype, shape, data })
    }

    /// Builds a tensor from wide values, checking that each fits `dtype`.
    pub fn from_i64(dtype: DType, shape: Vec<usize>, data: &[i64]) -> Result<Self> {
        let narrowed = data
            .iter()
            .map(|&v| {
                if v < dtype.min() || v > dtype.max() {
                    Err(Error::Overflow {
                        value: v,
                        bits: dtype.bits(),
                    })
                } else {
                    Ok(v as i32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        IntTensor::new(dtype, shape, narrowed)
    }

    pub fn zeros(dtype: DType, shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        IntTensor {
            dtype,
            shape,
            data: vec![0; numel],
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Contiguous view of the last axis at a flat row index.
    pub fn row(&self, index: usize) -> &[i32] {
        let width = *self.shape.last().unwrap_or(&1);
        &self.data[index * width..(index + 1) * width]
    }

    pub fn rows(&self) -> usize {
        let width = *self.shape.last().unwrap_or(&1);
        self.data.len().checked_div(width).unwrap_or(0)
    }

    pub fn to_i64(&self) -> Vec<i64> {
        self.data.iter().map(|&v| v as i64).collect()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::LengthMismatch {
                expected: self.data.len(),
                actual: numel,
            });
        }
        Ok(IntTensor { shape, ..self })
    }

    /// Largest `|x|` bit position that any element occupies, useful for sizing.
    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|&v| (v as i64).abs()).max().unwrap_or(0)
    }
}
