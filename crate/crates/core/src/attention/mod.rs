//! Fused two-pass self-attention on the modelled hardware.
//!
//! Pass 1 streams every token through the K/V projection and writes the
//! quantized keys and values into per-head SRAM arrays. Pass 2 streams the
//! tokens again and runs the whole per-token chain (query, logits, softmax,
//! weighted sum of values, output projection) without anything leaving the
//! device. Every GEMV is bit-serial and scheduled by BitSift, so the run also
//! yields cycle, event and traffic counts.

mod pipeline;
mod recip;
mod reference;
mod report;
mod weights;

pub use pipeline::{pass1_kv, pass2_token, run_attention, AttentionRun, Datapath, KvState, MramSet, TokenTrace};
pub use recip::reciprocal;
pub use reference::{cosine_similarity, fidelity, fp_reference, FidelitySummary};
pub use report::{
    dense_gemm_cycles, traffic_original, traffic_revised, write_reports_csv, CostReport, EnergyBreakdown, EventCounts,
    StageCycles, TrafficReport,
};
pub use weights::{WeightSet, WEIGHT_FILES};

use serde::Serialize;

use crate::config::RunConfig;

/// Everything needed to reproduce and interpret one simulation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub traffic: TrafficReport,
    pub traffic_original: TrafficReport,
    pub cost: CostReport,
    pub dense_baseline_cycles: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelitySummary>,
    pub notes: Vec<String>,
}
