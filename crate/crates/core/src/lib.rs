//! Functional and performance model of an integer-only analog-mixed-signal
//! process-in-memory (AMS-PiM) self-attention accelerator.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] – integer tensors, two's-complement bit planes, synthetic data
//!   and the tensor-exchange file format.
//! * [`quant`] – effective-MSB (eMSB) detection and shift-only quantizers.
//! * [`softmax`] – the division-free integer softmax and its parameter LUT.
//! * [`bitsift`] – sparse bit-serial GEMV scheduling into fixed-activation
//!   segments.
//! * [`array`] – behavioural model of the PiM arrays, ADC and Monte Carlo
//!   reliability analysis.
//! * [`attention`] – the two-pass fused attention dataflow with traffic, cycle
//!   and energy accounting, plus a floating-point reference.
//! * [`profiler`] – activation sparsity at several granularities.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iterators otherwise.

pub mod array;
pub mod attention;
pub mod bitsift;
pub mod config;
pub mod error;
pub mod exec;
pub mod profiler;
pub mod quant;
pub mod shape;
pub mod softmax;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Exec;
pub use shape::{ModelShape, PrecisionConfig};
pub use tensor::{BitOrder, BitPlane, DType, IntTensor};
