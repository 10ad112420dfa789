//! Division-free integer softmax with a per-token exponential base.
//!
//! Logits reach the softmax at a power-of-two scale that varies per token
//! (whatever the upstream shift-only quantizers left behind). Instead of
//! rescaling the logits, the kernel picks a LUT entry whose input scale matches
//! them: entry `n_e` evaluates `exp` for inputs at scale `2^(S_0 − n_e)`, which
//! is the same as evaluating the base-`2^(1/2^n_e)`-adjusted exponential on the
//! entry-0 grid. All arithmetic is integer; the only per-element loop that
//! would need a division (range reduction by `ln 2`) is a bounded repeated
//! subtraction.

pub mod eval;
mod kernel;
mod lut;

pub use kernel::{
    reference_softmax, renormalize, vdr_iexp, vdr_ipoly, vdr_norm, vdr_norm_with_residual, Iexp, SoftmaxConfig,
    SoftmaxOutput,
};
pub use lut::{build_lut, build_lut_with_base, default_base_exp, LutEntry, Scale, SoftmaxLut, ENTRY_BYTES, WORK_EXP};
