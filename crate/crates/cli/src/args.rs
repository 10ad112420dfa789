use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use amspim::config::{KvWidth, RunConfig};
use amspim::quant::Rounding;
use amspim::{Exec, ModelShape, Result};

#[derive(Debug, Parser)]
#[command(
    name = "amspim",
    version,
    about = "Bit-accurate model of an AMS process-in-memory attention accelerator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic input tensor and weight set.
    Gen(GenArgs),
    /// Run fused attention and report traffic, cycles, energy and fidelity.
    Simulate(SimulateArgs),
    /// Measure activation sparsity of one or more tensor files.
    Profile(ProfileArgs),
    /// Sweep the integer softmax against floating point.
    SoftmaxEval(SoftmaxEvalArgs),
    /// Estimate ADC miscode rates per activated word-line count.
    Montecarlo(MonteCarloArgs),
    /// Closed-form off-device traffic, unfused versus two-pass.
    Traffic(TrafficArgs),
    /// Dump the softmax coefficient table.
    Lut(LutArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundingArg {
    Truncate,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecArg {
    Sequential,
    Parallel,
}

/// Flags shared by every command. Each one overrides the matching key of
/// `--config`; anything left unset keeps the file's (or the built-in) value.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file with flat keys named like the flags.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ibp: Option<u32>,
    #[arg(long)]
    pub wbp: Option<u32>,
    #[arg(long)]
    pub qi: Option<u32>,
    #[arg(long)]
    pub qo: Option<u32>,
    #[arg(long)]
    pub slice_len: Option<usize>,
    /// Maximum simultaneously activated word lines.
    #[arg(long)]
    pub sawl: Option<usize>,
    /// Per-cell conductance variation (relative standard deviation).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<OnOff>,
    #[arg(long)]
    pub enob: Option<u32>,
    /// Key/value parse width: calibrated, full or a bit count.
    #[arg(long, value_parser = parse_kv_width)]
    pub kv_width: Option<KvWidth>,
    #[arg(long, value_enum)]
    pub rounding: Option<RoundingArg>,
    #[arg(long)]
    pub n_e_max: Option<u32>,
    #[arg(long)]
    pub cycle_ns: Option<f64>,
    #[arg(long, value_enum)]
    pub exec: Option<ExecArg>,
    /// Directory for output files; created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Format of the summary printed on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

fn parse_kv_width(s: &str) -> std::result::Result<KvWidth, String> {
    s.parse().map_err(|e: amspim::Error| e.to_string())
}

fn parse_shape(s: &str) -> std::result::Result<ModelShape, String> {
    ModelShape::parse(s).map_err(|e| e.to_string())
}

impl Common {
    /// Built-in defaults, then the config file, then flags.
    pub fn resolve(&self, shape: Option<ModelShape>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { cfg.$field = v; })*};
        }
        set!(seed, ibp, wbp, qi, qo, slice_len, sawl, sigma, kv_width, n_e_max, cycle_ns);
        if let Some(s) = shape {
            cfg.shape = s;
        }
        if let Some(n) = self.noise {
            cfg.noise = n == OnOff::On;
        }
        if self.enob.is_some() {
            cfg.enob = self.enob;
        }
        if let Some(r) = self.rounding {
            cfg.rounding = match r {
                RoundingArg::Truncate => Rounding::Truncate,
                RoundingArg::Nearest => Rounding::Nearest,
            };
        }
        if let Some(e) = self.exec {
            cfg.exec = match e {
                ExecArg::Sequential => Exec::Sequential,
                ExecArg::Parallel => Exec::Parallel,
            };
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// B,N,D,H,dk
    #[arg(long, value_parser = parse_shape, required_unless_present = "config")]
    pub shape: Option<ModelShape>,
    /// Fraction of nonzero input values; inputs are uniform over the full
    /// `IBP`-bit range when set, Gaussian otherwise.
    #[arg(long)]
    pub density: Option<f64>,
    /// Standard deviation, in integer units, of Gaussian inputs and weights.
    #[arg(long, default_value_t = 32.0)]
    pub std: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<ModelShape>,
    /// Directory written by `gen`; synthetic data from `--seed` otherwise.
    #[arg(long, value_name = "DIR")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 32.0)]
    pub std: f64,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    /// Tensor files; each is tagged with its file stem.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Bit precision of the profiled words; defaults to the dtype width.
    #[arg(long)]
    pub bp: Option<u32>,
    #[arg(long, default_value_t = 8)]
    pub n_group: usize,
}

#[derive(Debug, Args)]
pub struct SoftmaxEvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Logits per token.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub tokens: usize,
    /// Standard deviation of the logits in real units.
    #[arg(long, default_value_t = 1.0)]
    pub logit_std: f64,
    /// LUT entry the logits are generated for.
    #[arg(long, default_value_t = 0)]
    pub n_e: u32,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: Common,
    /// Activated word-line counts to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32])]
    pub sawls: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
}

#[derive(Debug, Args)]
pub struct TrafficArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<ModelShape>,
}

#[derive(Debug, Args)]
pub struct LutArgs {
    #[command(flatten)]
    pub common: Common,
}
