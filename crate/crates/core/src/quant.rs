//! Effective-MSB detection and the shift-only quantizers.
//!
//! Two quantizers live here. [`emsb_quantize`] picks a per-token shift from the
//! token's effective MSB so the largest magnitude lands just under the sign
//! bit of a `W`-bit output. [`msb_parse_quantize`] uses a fixed,
//! content-independent shift and is meant for tensors that must share one
//! scale across tokens (keys and values).
//!
//! Neither path divides: a quantization step is always a power of two and is
//! applied with an arithmetic right shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How bits below the shift point are disposed of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// Plain arithmetic right shift (floor).
    #[default]
    Truncate,
    /// Add half a step before shifting; saturates at the output width.
    Nearest,
}

/// Effective MSB of a value together with the top magnitude bit of its
/// container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmsbInfo {
    pub emsb: i32,
    pub container_msb: i32,
}

/// Index of the effective MSB of `x`.
///
/// Positive values report their highest set bit; negative values report the
/// highest bit that differs from the sign bit, which is the highest set bit of
/// `!x`. Zero (and `-1`, whose only information is the sign) returns `-1`.
pub fn emsb(x: i64) -> i32 {
    let m = if x < 0 { !x } else { x };
    63 - m.leading_zeros() as i32
}

/// [`emsb`] with the value checked against a `width`-bit container.
pub fn emsb_info(x: i64, width: u32) -> Result<EmsbInfo> {
    check_width(width)?;
    if !fits(x, width) {
        return Err(Error::Overflow { value: x, bits: width });
    }
    Ok(EmsbInfo {
        emsb: emsb(x),
        container_msb: width as i32 - 2,
    })
}

/// Largest per-element eMSB of a token; `-1` iff the token carries no
/// magnitude information.
pub fn token_emsb(v: &[i64]) -> Result<i32> {
    if v.is_empty() {
        return Err(Error::Empty("token"));
    }
    // OR-ing the sign-folded magnitudes finds the same top bit as a max over
    // per-element eMSBs, without a compare per element.
    let folded = v.iter().fold(0i64, |acc, &x| acc | if x < 0 { !x } else { x });
    Ok(emsb(folded))
}

/// A token after quantization: `values[i] ≈ source[i] / 2^shift`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedToken {
    pub values: Vec<i64>,
    pub shift: u32,
    pub width: u32,
}

/// A pipeline stage that contributes a scale deficit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Query,
    Logits,
    Output,
}

/// Per-token record of how many bits each stage kept above a fixed-point
/// parse of its container.
///
/// The softmax reads the accumulated deficit as the LUT index `n_e`. An
/// optional `baseline` is subtracted first so that index 0 can correspond to
/// any chosen logit scale; whatever the clamp to `[0, n_e_max]` cannot absorb
/// is kept as `residual`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenScaleTracker {
    stage_deficits: Vec<(Stage, u32)>,
    n_e_max: u32,
    baseline: i64,
}

impl TokenScaleTracker {
    pub fn new(n_e_max: u32) -> Self {
        Self::with_baseline(n_e_max, 0)
    }

    pub fn with_baseline(n_e_max: u32, baseline: i64) -> Self {
        TokenScaleTracker {
            stage_deficits: Vec::new(),
            n_e_max,
            baseline,
        }
    }

    pub fn record(&mut self, stage: Stage, deficit: u32) {
        self.stage_deficits.push((stage, deficit));
    }

    pub fn stage_deficits(&self) -> &[(Stage, u32)] {
        &self.stage_deficits
    }

    pub fn total_deficit(&self) -> i64 {
        self.stage_deficits.iter().map(|&(_, d)| d as i64).sum()
    }

    fn raw(&self) -> i64 {
        self.total_deficit() - self.baseline
    }

    /// LUT index, saturated to `[0, n_e_max]`.
    pub fn n_e(&self) -> u32 {
        self.raw().clamp(0, self.n_e_max as i64) as u32
    }

    /// Part of the deficit that did not fit the LUT range: negative when the
    /// logits are coarser than entry 0, positive beyond `n_e_max`.
    pub fn residual(&self) -> i64 {
        self.raw() - self.n_e() as i64
    }

    pub fn n_e_max(&self) -> u32 {
        self.n_e_max
    }
}

fn check_width(w: u32) -> Result<()> {
    if (2..=62).contains(&w) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quantizer width {w} outside [2, 62]")))
    }
}

fn fits(v: i64, bits: u32) -> bool {
    let half = 1i64 << (bits - 1);
    (-half..half).contains(&v)
}

/// `x >> s` under `rounding`, saturated to `width` bits.
pub fn shift_round(x: i64, s: u32, rounding: Rounding, width: u32) -> i64 {
    let shifted = match rounding {
        _ if s == 0 => x,
        Rounding::Truncate => x >> s.min(63),
        Rounding::Nearest if s >= 63 => 0,
        Rounding::Nearest => (x >> s) + ((x >> (s - 1)) & 1),
    };
    let hi = (1i64 << (width - 1)) - 1;
    shifted.clamp(-hi - 1, hi)
}

/// Per-token eMSB quantization to `width` bits.
///
/// The shift is `max(0, token_emsb − (width − 2))`. When a tracker is supplied
/// it receives the stage deficit `container_msb − max(token_emsb, width − 2)`
/// for a `container_bits`-wide source, i.e. how many of the bits a fixed parse
/// of the container would have discarded this token kept instead.
pub fn emsb_quantize(
    v: &[i64],
    width: u32,
    rounding: Rounding,
    tracker: Option<(&mut TokenScaleTracker, Stage, u32)>,
) -> Result<QuantizedToken> {
    check_width(width)?;
    let e = token_emsb(v)?;
    let floor = width as i32 - 2;
    let shift = (e - floor).max(0) as u32;
    if let Some((tracker, stage, container_bits)) = tracker {
        if container_bits < width {
            return Err(Error::InvalidArgument(format!(
                "container of {container_bits} bits is narrower than the {width}-bit output"
            )));
        }
        if let Some(&bad) = v.iter().find(|&&x| !fits(x, container_bits)) {
            return Err(Error::Overflow {
                value: bad,
                bits: container_bits,
            });
        }
        let container_msb = container_bits as i32 - 2;
        tracker.record(stage, (container_msb - e.max(floor)) as u32);
    }
    let values = v.iter().map(|&x| shift_round(x, shift, rounding, width)).collect();
    Ok(QuantizedToken { values, shift, width })
}

/// Fixed-window quantization: keep the top `width` bits of an
/// `acc_width`-bit accumulator regardless of content.
pub fn msb_parse_quantize(v: &[i64], width: u32, acc_width: u32, rounding: Rounding) -> Result<QuantizedToken> {
    check_width(width)?;
    if acc_width < width {
        return Err(Error::InvalidArgument(format!(
            "accumulator width {acc_width} is narrower than the {width}-bit output"
        )));
    }
    let shift = acc_width - width;
    let values = v.iter().map(|&x| shift_round(x, shift, rounding, width)).collect();
    Ok(QuantizedToken { values, shift, width })
}
