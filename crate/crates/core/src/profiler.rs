//! Activation sparsity at four granularities.
//!
//! Tensors are viewed as stacks of `[tokens, features]` matrices: the last
//! axis is the feature axis, the one before it the token axis, and anything
//! further out just stacks independent matrices. A 1-D tensor is a single
//! feature column. Groups of `N` run down the token axis; a ragged tail is
//! padded with zeros and the padding is reported separately.

use std::fmt;
use std::io::Write;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::IntTensor;

/// `1 / (1 − bitwise)`, or skip-all when every bit is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictedBoost {
    Finite(f64),
    SkipAll,
}

impl PredictedBoost {
    pub fn value(self) -> f64 {
        match self {
            PredictedBoost::Finite(v) => v,
            PredictedBoost::SkipAll => f64::INFINITY,
        }
    }
}

impl fmt::Display for PredictedBoost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictedBoost::Finite(v) => write!(f, "{v}"),
            PredictedBoost::SkipAll => f.write_str("skip-all"),
        }
    }
}

impl Serialize for PredictedBoost {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PredictedBoost::Finite(v) => s.serialize_f64(*v),
            PredictedBoost::SkipAll => s.serialize_str("skip-all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub bp: u32,
    pub n_group: usize,
    /// Zero bits over all planes of the unpadded tensor.
    pub bitwise: f64,
    /// All-zero words of the unpadded tensor.
    pub valuewise: f64,
    /// All-zero aligned groups of `n_group` words along the token axis.
    pub n_valuewise: f64,
    /// Per bit plane (LSB first), all-zero aligned `n_group`-long segments.
    pub n_column_bitslice: Vec<f64>,
    pub n_column_bitslice_mean: f64,
    /// Zero words appended to complete the last group of each column.
    pub padded: usize,
    pub predicted_boost: PredictedBoost,
}

pub fn predict_boost(bitwise: f64) -> PredictedBoost {
    if bitwise >= 1.0 {
        PredictedBoost::SkipAll
    } else {
        PredictedBoost::Finite(1.0 / (1.0 - bitwise))
    }
}

fn matrix_view(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [] => Err(Error::Shape("cannot profile a scalar".into())),
        [len] => Ok((1, *len, 1)),
        [outer @ .., rows, cols] => Ok((outer.iter().product(), *rows, *cols)),
    }
}

pub fn profile(tensor: &IntTensor, bp: u32, n_group: usize) -> Result<SparsityReport> {
    profile_with(tensor, bp, n_group, Exec::default())
}

pub fn profile_with(tensor: &IntTensor, bp: u32, n_group: usize, exec: Exec) -> Result<SparsityReport> {
    if !(1..=32).contains(&bp) {
        return Err(Error::InvalidArgument(format!("bit precision {bp} outside [1, 32]")));
    }
    if n_group == 0 {
        return Err(Error::InvalidArgument("group size must be at least 1".into()));
    }
    if tensor.is_empty() {
        return Err(Error::Empty("tensor has no elements"));
    }
    let (mats, rows, cols) = matrix_view(tensor.shape())?;
    let data = tensor.data();
    let (lo, hi) = (-(1i64 << (bp - 1)), (1i64 << (bp - 1)) - 1);
    if let Some(&bad) = data.iter().find(|&&v| !(lo..=hi).contains(&(v as i64))) {
        return Err(Error::Overflow {
            value: bad as i64,
            bits: bp,
        });
    }
    let mask = if bp == 32 { u32::MAX } else { (1u32 << bp) - 1 };
    let words: Vec<u32> = data.iter().map(|&v| v as u32 & mask).collect();

    let total = words.len();
    let set_bits: u64 = words.iter().map(|w| w.count_ones() as u64).sum();
    let bitwise = 1.0 - set_bits as f64 / (total as f64 * bp as f64);
    let valuewise = words.iter().filter(|&&w| w == 0).count() as f64 / total as f64;

    let groups_per_col = rows.div_ceil(n_group);
    let segments = mats * cols * groups_per_col;
    let padded = mats * cols * (groups_per_col * n_group - rows);
    // OR of every word in a group: zero exactly when the group is all zero,
    // and bit p is zero exactly when plane p's segment is.
    let ors: Vec<u32> = (0..segments)
        .map(|s| {
            let (m, rest) = (s / (cols * groups_per_col), s % (cols * groups_per_col));
            let (c, g) = (rest / groups_per_col, rest % groups_per_col);
            let base = m * rows * cols;
            (g * n_group..((g + 1) * n_group).min(rows)).fold(0, |acc, r| acc | words[base + r * cols + c])
        })
        .collect();
    let n_valuewise = ors.iter().filter(|&&o| o == 0).count() as f64 / segments as f64;
    let n_column_bitslice: Vec<f64> = exec.map_range(bp as usize, |p| {
        ors.iter().filter(|&&o| (o >> p) & 1 == 0).count() as f64 / segments as f64
    });
    let n_column_bitslice_mean = n_column_bitslice.iter().sum::<f64>() / bp as f64;

    Ok(SparsityReport {
        bp,
        n_group,
        bitwise,
        valuewise,
        n_valuewise,
        n_column_bitslice,
        n_column_bitslice_mean,
        padded,
        predicted_boost: predict_boost(bitwise),
    })
}

/// Writes `layer,metric,n_group,value` rows, one per metric and plane.
pub fn write_profile_csv<W: Write>(mut w: W, rows: &[(String, SparsityReport)]) -> Result<()> {
    let io = |e| Error::io("profile csv", e);
    writeln!(w, "layer,metric,n_group,value").map_err(io)?;
    for (tag, r) in rows {
        let n = r.n_group;
        writeln!(w, "{tag},bitwise,{n},{}", r.bitwise).map_err(io)?;
        writeln!(w, "{tag},valuewise,{n},{}", r.valuewise).map_err(io)?;
        writeln!(w, "{tag},n_valuewise,{n},{}", r.n_valuewise).map_err(io)?;
        for (p, v) in r.n_column_bitslice.iter().enumerate() {
            writeln!(w, "{tag},n_column_bitslice_b{p},{n},{v}").map_err(io)?;
        }
        writeln!(w, "{tag},n_column_bitslice_mean,{n},{}", r.n_column_bitslice_mean).map_err(io)?;
        writeln!(w, "{tag},padded,{n},{}", r.padded).map_err(io)?;
        writeln!(w, "{tag},predicted_boost,{n},{}", r.predicted_boost).map_err(io)?;
    }
    Ok(())
}
