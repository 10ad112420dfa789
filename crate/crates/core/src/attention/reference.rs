//! Floating-point multi-head attention used to judge the integer datapath.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::weights::WeightSet;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::tensor::IntTensor;

fn to_real(t: &IntTensor, frac: u32) -> Vec<f64> {
    let s = 2f64.powi(-(frac as i32));
    t.data().iter().map(|&v| v as f64 * s).collect()
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Attention output in real units, `[B, N, D]` row-major. Inputs and weights
/// are read as fixed point with the configured fraction bits.
pub fn fp_reference(x: &IntTensor, weights: &WeightSet, cfg: &RunConfig) -> Result<Vec<f64>> {
    let shape = cfg.shape;
    let (b, n, d, h, dk) = (shape.batch, shape.tokens, shape.hidden, shape.heads, shape.head_dim);
    if x.shape() != [b, n, d] {
        return Err(Error::Shape(format!(
            "input is {:?}, expected [{b}, {n}, {d}]",
            x.shape()
        )));
    }
    let wf = cfg.w_frac();
    let fused = |w: &IntTensor| -> Result<Array2<f64>> {
        let s = 2f64.powi(-(wf as i32));
        let v: Vec<f64> = WeightSet::fused(w).iter().map(|&v| v as f64 * s).collect();
        Array2::from_shape_vec((d, h * dk), v).map_err(|e| Error::Shape(e.to_string()))
    };
    let (wq, wk, wv) = (fused(&weights.w_q)?, fused(&weights.w_k)?, fused(&weights.w_v)?);
    let wo = Array2::from_shape_vec((d, d), to_real(&weights.w_o, wf)).map_err(|e| Error::Shape(e.to_string()))?;
    let xs = to_real(x, cfg.x_frac());
    let scale = 1.0 / (dk as f64).sqrt();

    let mut out = Vec::with_capacity(b * n * d);
    for batch in 0..b {
        let xb = ArrayView2::from_shape((n, d), &xs[batch * n * d..(batch + 1) * n * d])
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (q, k, v) = (xb.dot(&wq), xb.dot(&wk), xb.dot(&wv));
        let mut concat = Array2::<f64>::zeros((n, h * dk));
        for head in 0..h {
            let cols = s![.., head * dk..(head + 1) * dk];
            let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut a);
            concat.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        }
        out.extend(concat.dot(&wo).iter().copied());
    }
    Ok(out)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        1.0
    } else if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FidelitySummary {
    pub tokens: usize,
    pub mean_cosine: f64,
    pub min_cosine: f64,
}

/// Per-token cosine similarity between two `[tokens, width]` buffers.
pub fn fidelity(actual: &[f64], expected: &[f64], width: usize) -> Result<FidelitySummary> {
    if actual.len() != expected.len() || width == 0 || !actual.len().is_multiple_of(width) {
        return Err(Error::LengthMismatch {
            expected: expected.len(),
            actual: actual.len(),
        });
    }
    let cos: Vec<f64> = actual
        .chunks(width)
        .zip(expected.chunks(width))
        .map(|(a, e)| cosine_similarity(a, e))
        .collect();
    if cos.is_empty() {
        return Err(Error::Empty("no tokens to compare"));
    }
    Ok(FidelitySummary {
        tokens: cos.len(),
        mean_cosine: cos.iter().sum::<f64>() / cos.len() as f64,
        min_cosine: cos.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
