//! Resolved run configuration.
//!
//! Keys are flat and mirror the command-line flags so a JSON file written by
//! hand, by CI or by another tool maps one-to-one onto them. Every field has a
//! default; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::array::{AdcModel, CostTokens};
use crate::bitsift::BitSiftConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::quant::Rounding;
use crate::shape::{ceil_log2, ModelShape, PrecisionConfig};
use crate::softmax::SoftmaxConfig;

/// How the key/value accumulators are parsed down to `IBP` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KvWidth {
    /// Window top set from the largest magnitude of the whole K (or V) tensor
    /// of one head, found once pass 1 has produced it.
    #[default]
    Calibrated,
    /// The full GEMV accumulator width `IBP + WBP + ⌈log2 D⌉`.
    Full,
    /// An explicit accumulator width.
    Fixed(u32),
}

impl fmt::Display for KvWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KvWidth::Calibrated => f.write_str("calibrated"),
            KvWidth::Full => f.write_str("full"),
            KvWidth::Fixed(w) => write!(f, "{w}"),
        }
    }
}

impl std::str::FromStr for KvWidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calibrated" => Ok(KvWidth::Calibrated),
            "full" => Ok(KvWidth::Full),
            n => n
                .parse::<u32>()
                .map(KvWidth::Fixed)
                .map_err(|_| Error::InvalidArgument(format!("kv width '{s}' is not calibrated, full or a bit count"))),
        }
    }
}

impl Serialize for KvWidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KvWidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod shape_string {
    use super::*;

    pub fn serialize<S: Serializer>(shape: &ModelShape, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(&format_args!(
            "{},{},{},{},{}",
            shape.batch, shape.tokens, shape.hidden, shape.heads, shape.head_dim
        ))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ModelShape, D::Error> {
        let s = String::deserialize(d)?;
        ModelShape::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(with = "shape_string")]
    pub shape: ModelShape,
    pub ibp: u32,
    pub wbp: u32,
    pub qi: u32,
    pub qo: u32,
    pub slice_len: usize,
    pub sawl: usize,
    pub sigma: f64,
    pub noise: bool,
    pub seed: u64,
    /// ADC resolution; `None` sizes it exactly for `sawl`.
    pub enob: Option<u32>,
    pub kv_width: KvWidth,
    pub rounding: Rounding,
    pub n_e_max: u32,
    /// Fraction bits of the input activations; `None` means `IBP − 1`.
    pub x_frac_bits: Option<u32>,
    /// Fraction bits of the weights; `None` means `WBP − 1`.
    pub w_frac_bits: Option<u32>,
    pub cycle_ns: f64,
    pub cost: CostTokens,
    pub exec: Exec,
    pub input_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            shape: ModelShape {
                batch: 1,
                tokens: 32,
                hidden: 64,
                heads: 4,
                head_dim: 16,
            },
            ibp: 8,
            wbp: 8,
            qi: 8,
            qo: 8,
            slice_len: 64,
            sawl: 8,
            sigma: 0.029,
            noise: false,
            seed: 0,
            enob: None,
            kv_width: KvWidth::Calibrated,
            rounding: Rounding::Truncate,
            n_e_max: 9,
            x_frac_bits: None,
            w_frac_bits: None,
            cycle_ns: 10.0,
            cost: CostTokens::default(),
            exec: Exec::Parallel,
            input_dir: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn precision(&self) -> PrecisionConfig {
        PrecisionConfig {
            ibp: self.ibp,
            wbp: self.wbp,
            qi: self.qi,
            qo: self.qo,
        }
    }

    pub fn bitsift(&self) -> BitSiftConfig {
        BitSiftConfig {
            slice_len: self.slice_len,
            sawl_max: self.sawl,
            dummy_rows: self.sawl.saturating_sub(1),
        }
    }

    pub fn adc(&self) -> AdcModel {
        AdcModel {
            enob: self.enob.unwrap_or_else(|| ceil_log2(self.sawl + 1)),
            sawl_max: self.sawl,
            sigma_cell: self.sigma,
        }
    }

    pub fn softmax(&self) -> SoftmaxConfig {
        SoftmaxConfig {
            q_i: self.qi,
            q_o: self.qo,
            rounding: self.rounding,
        }
    }

    pub fn x_frac(&self) -> u32 {
        self.x_frac_bits.unwrap_or(self.ibp - 1)
    }

    pub fn w_frac(&self) -> u32 {
        self.w_frac_bits.unwrap_or(self.wbp - 1)
    }

    /// Checks every module precondition up front so a run fails before any
    /// work starts.
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.precision().validate()?;
        if self.ibp > 16 || self.wbp > 16 {
            return Err(Error::InvalidArgument(format!(
                "IBP ({}) and WBP ({}) above 16 bits would overflow the 64-bit datapath model",
                self.ibp, self.wbp
            )));
        }
        self.softmax().validate()?;
        self.bitsift().validate()?;
        let adc = self.adc();
        adc.validate()?;
        if !adc.is_exact() {
            return Err(Error::InvalidArgument(format!(
                "ENOB {} cannot resolve {} activated word lines (needs {})",
                adc.enob,
                self.sawl,
                ceil_log2(self.sawl + 1)
            )));
        }
        if self.n_e_max > 15 {
            return Err(Error::InvalidArgument(format!("n_e_max {} exceeds 15", self.n_e_max)));
        }
        if let KvWidth::Fixed(w) = self.kv_width {
            if w < self.ibp || w > 62 {
                return Err(Error::InvalidArgument(format!(
                    "kv width {w} must lie in [IBP = {}, 62]",
                    self.ibp
                )));
            }
        }
        if !(self.cycle_ns > 0.0 && self.cycle_ns.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cycle time {} ns must be positive",
                self.cycle_ns
            )));
        }
        if self.x_frac() > 30 || self.w_frac() > 30 {
            return Err(Error::InvalidArgument(
                "fraction bits above 30 are not supported".into(),
            ));
        }
        Ok(())
    }
}
