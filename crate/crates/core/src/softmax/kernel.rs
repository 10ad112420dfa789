use serde::{Deserialize, Serialize};

use super::lut::{LutEntry, Scale, SoftmaxLut};
use crate::error::{Error, Result};
use crate::quant::{emsb, emsb_quantize, Rounding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftmaxConfig {
    pub q_i: u32,
    pub q_o: u32,
    #[serde(default)]
    pub rounding: Rounding,
}

impl SoftmaxConfig {
    pub fn new(q_i: u32, q_o: u32) -> Result<Self> {
        let cfg = SoftmaxConfig {
            q_i,
            q_o,
            rounding: Rounding::Truncate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Q_I", self.q_i), ("Q_O", self.q_o)] {
            if !(4..=16).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [4, 16]")));
            }
        }
        Ok(())
    }

    /// Range-reduction clip: at most `2·Q_I` halvings.
    pub fn q_clip(&self) -> u32 {
        2 * self.q_i
    }
}

/// `vdr_iexp` result. The value is `poly · S_POLY · 2^(−q)`; `poly` is kept
/// unshifted so its width never depends on `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Iexp {
    pub poly: i64,
    pub q: u32,
    pub scale: Scale,
}

impl Iexp {
    /// `S_EXP = S_POLY · 2^(−q)`.
    pub fn exp_scale(&self) -> Scale {
        self.scale.shifted(-(self.q as i32))
    }

    pub fn value(&self) -> f64 {
        self.poly as f64 * self.exp_scale().value()
    }
}

fn to_working_grid(r: i64, entry: &LutEntry) -> i64 {
    let t = entry.align_shift();
    if t <= 0 {
        r << -t
    } else {
        (r + (1 << (t - 1))) >> t
    }
}

/// Polynomial stage for a reduced input `r ∈ [l, 0]` in entry units.
pub fn vdr_ipoly(r: i64, entry: &LutEntry) -> Result<(i64, Scale)> {
    let l = entry.l as i64;
    if r > 0 || r < l {
        return Err(Error::OutOfRange { value: r, lo: l });
    }
    let rw = to_working_grid(r, entry);
    Ok((rw * (rw + entry.b as i64) + entry.c as i64, entry.poly_scale()))
}

/// Exponential of a max-subtracted logit.
///
/// `q` counts how many times `l` fits into `x_sub`, found by subtraction and
/// capped at `2·Q_I`. When the cap bites the remainder would leave `[l, 0]`;
/// it is pinned to `l`, the smallest value of the last segment, so the
/// output stays monotone in `x_sub`.
pub fn vdr_iexp(x_sub: i64, entry: &LutEntry, cfg: &SoftmaxConfig) -> Result<Iexp> {
    if x_sub > 0 {
        return Err(Error::InvalidArgument(format!("x_sub = {x_sub} must be <= 0")));
    }
    let l = entry.l as i64;
    let cap = cfg.q_clip();
    let mut r = x_sub;
    let mut q = 0;
    while q < cap && r <= l {
        r -= l;
        q += 1;
    }
    if r < l {
        r = l;
    }
    let (poly, scale) = vdr_ipoly(r, entry)?;
    Ok(Iexp { poly, q, scale })
}

/// Quantized, unnormalized softmax of one token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftmaxOutput {
    /// Unsigned `Q_O`-bit codes, proportional to `exp(x − max)`.
    pub codes: Vec<i64>,
    /// Real value of one code step: `S_POLY · 2^(shift − guard)`.
    pub scale: Scale,
    /// eMSB-Q shift applied to the aligned exponentials.
    pub shift: u32,
    /// Left shift applied before alignment to keep `Q_O` bits of headroom.
    pub guard: u32,
}

impl SoftmaxOutput {
    pub fn dequantize(&self) -> Vec<f64> {
        let s = self.scale.value();
        self.codes.iter().map(|&c| c as f64 * s).collect()
    }
}

pub fn vdr_norm(x: &[i64], n_e: u32, lut: &SoftmaxLut, cfg: &SoftmaxConfig) -> Result<SoftmaxOutput> {
    vdr_norm_with_residual(x, n_e, 0, lut, cfg)
}

/// [`vdr_norm`] for logits whose scale lies `residual` entries beyond the LUT:
/// `x − max` is shifted right by `residual` (left when negative) onto the
/// grid of entry `n_e` before range reduction.
pub fn vdr_norm_with_residual(
    x: &[i64],
    n_e: u32,
    residual: i64,
    lut: &SoftmaxLut,
    cfg: &SoftmaxConfig,
) -> Result<SoftmaxOutput> {
    cfg.validate()?;
    let max = *x.iter().max().ok_or(Error::Empty("logits"))?;
    let entry = lut.entry(n_e)?;
    let res = residual.clamp(-62, 62);
    let exps = x
        .iter()
        .map(|&xi| {
            let sub = xi - max;
            let sub = if res < 0 {
                sub.checked_shl(-res as u32)
                    .filter(|v| v >> -res == sub)
                    .unwrap_or(i64::MIN / 2)
            } else {
                sub >> res
            };
            vdr_iexp(sub, entry, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    // Exponentials are nonnegative, so the Q_O-bit code is unsigned and its
    // top bit is magnitude: quantize as a (Q_O+1)-bit signed value.
    let guard = (cfg.q_o as i32 - 1 - emsb(entry.c as i64)).max(0) as u32;
    let aligned: Vec<i64> = exps.iter().map(|e| (e.poly << guard) >> e.q).collect();
    let q = emsb_quantize(&aligned, cfg.q_o + 1, cfg.rounding, None)?;
    Ok(SoftmaxOutput {
        codes: q.values,
        scale: entry.poly_scale().shifted(q.shift as i32 - guard as i32),
        shift: q.shift,
        guard,
    })
}

/// Floating-point softmax of `x · 2^scale_exp`, for reports and sweeps.
pub fn reference_softmax(x: &[i64], scale_exp: i32) -> Vec<f64> {
    let s = 2f64.powi(scale_exp);
    let max = x.iter().copied().max().unwrap_or(0);
    let e: Vec<f64> = x.iter().map(|&v| ((v - max) as f64 * s).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Divides codes by their sum. Used by evaluation harnesses only; the
/// datapath normalizes with an integer reciprocal.
pub fn renormalize(codes: &[i64]) -> Vec<f64> {
    let sum: i64 = codes.iter().sum();
    if sum == 0 {
        return vec![0.0; codes.len()];
    }
    codes.iter().map(|&c| c as f64 / sum as f64).collect()
}
