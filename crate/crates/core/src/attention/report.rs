use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::array::{AdcModel, CostTokens};
use crate::error::{Error, Result};
use crate::shape::ModelShape;

/// Element counts crossing the device boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub in_elements: u64,
    pub out_elements: u64,
    pub intermediate_elements: u64,
    pub stages: BTreeMap<String, u64>,
}

impl TrafficReport {
    pub fn total(&self) -> u64 {
        self.in_elements + self.out_elements + self.intermediate_elements
    }

    pub(crate) fn add_in(&mut self, stage: &str, n: u64) {
        self.in_elements += n;
        *self.stages.entry(stage.to_owned()).or_default() += n;
    }

    pub(crate) fn add_out(&mut self, stage: &str, n: u64) {
        self.out_elements += n;
        *self.stages.entry(stage.to_owned()).or_default() += n;
    }

    pub(crate) fn add_intermediate(&mut self, stage: &str, n: u64) {
        self.intermediate_elements += n;
        *self.stages.entry(stage.to_owned()).or_default() += n;
    }
}

/// Unfused execution: every intermediate tensor goes off-device and back.
///
/// Input and output are `B·N·D` each; the logit matrix is written and read
/// back (`2·B·H·N²`), and Q, K, V and the per-head attention result each cost
/// `B·H·N·d_k`.
pub fn traffic_original(shape: &ModelShape) -> TrafficReport {
    let (b, n, d, h, dk) = dims(shape);
    let mut t = TrafficReport::default();
    t.add_in("input", b * n * d);
    t.add_out("output", b * n * d);
    t.add_intermediate("logits", 2 * b * h * n * n);
    t.add_intermediate("qkv_attention", 4 * b * h * n * dk);
    t
}

/// Fused two-pass execution: the input is streamed twice and only the output
/// leaves the device.
pub fn traffic_revised(shape: &ModelShape) -> TrafficReport {
    let (b, n, d, _, _) = dims(shape);
    let mut t = TrafficReport::default();
    t.add_in("pass1_input", b * n * d);
    t.add_in("pass2_input", b * n * d);
    t.add_out("output", b * n * d);
    t
}

fn dims(s: &ModelShape) -> (u64, u64, u64, u64, u64) {
    (
        s.batch as u64,
        s.tokens as u64,
        s.hidden as u64,
        s.heads as u64,
        s.head_dim as u64,
    )
}

/// Cycles of a dense bit-serial A-W GEMM: `(D / l) · N · BP`.
pub fn dense_gemm_cycles(d: u64, n: u64, bp: u64, l: u64) -> u64 {
    d.div_ceil(l) * n * bp
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCycles {
    pub kv_projection: u64,
    pub kv_write: u64,
    pub q_projection: u64,
    pub logits: u64,
    pub attention_values: u64,
    pub out_projection: u64,
}

impl StageCycles {
    pub fn total(&self) -> u64 {
        self.kv_projection
            + self.kv_write
            + self.q_projection
            + self.logits
            + self.attention_values
            + self.out_projection
    }

    pub fn merge(self, o: StageCycles) -> StageCycles {
        StageCycles {
            kv_projection: self.kv_projection + o.kv_projection,
            kv_write: self.kv_write + o.kv_write,
            q_projection: self.q_projection + o.q_projection,
            logits: self.logits + o.logits,
            attention_values: self.attention_values + o.attention_values,
            out_projection: self.out_projection + o.out_projection,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub wl_activations: u64,
    pub adc_conversions: u64,
    pub sram_bit_writes: u64,
    pub mram_bit_writes: u64,
    pub shift_adds: u64,
}

impl EventCounts {
    pub fn merge(self, o: EventCounts) -> EventCounts {
        EventCounts {
            wl_activations: self.wl_activations + o.wl_activations,
            adc_conversions: self.adc_conversions + o.adc_conversions,
            sram_bit_writes: self.sram_bit_writes + o.sram_bit_writes,
            mram_bit_writes: self.mram_bit_writes + o.mram_bit_writes,
            shift_adds: self.shift_adds + o.shift_adds,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub wl_activation: f64,
    pub adc_conversion: f64,
    pub sram_write: f64,
    pub mram_write: f64,
    pub shift_add: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total_cycles: u64,
    pub stages: StageCycles,
    pub events: EventCounts,
    pub energy: EnergyBreakdown,
    pub cycle_ns: f64,
    pub wall_time_ns: f64,
}

impl CostReport {
    pub fn new(stages: StageCycles, events: EventCounts, tokens: &CostTokens, adc: &AdcModel, cycle_ns: f64) -> Self {
        let wl_activation = events.wl_activations as f64 * tokens.wl_activation;
        let adc_conversion = events.adc_conversions as f64 * tokens.adc(adc);
        let sram_write = events.sram_bit_writes as f64 * tokens.sram_bit_write;
        let mram_write = events.mram_bit_writes as f64 * tokens.mram_bit_write;
        let shift_add = events.shift_adds as f64 * tokens.shift_add;
        let total_cycles = stages.total();
        CostReport {
            total_cycles,
            stages,
            events,
            energy: EnergyBreakdown {
                wl_activation,
                adc_conversion,
                sram_write,
                mram_write,
                shift_add,
                total: wl_activation + adc_conversion + sram_write + mram_write + shift_add,
            },
            cycle_ns,
            wall_time_ns: total_cycles as f64 * cycle_ns,
        }
    }
}

/// Long-format CSV: `section,key,value`.
pub fn write_reports_csv<W: Write>(mut w: W, traffic: &TrafficReport, cost: &CostReport) -> Result<()> {
    let io = |e| Error::io("<csv>", e);
    let mut rows: Vec<(String, String, String)> = vec![
        ("traffic".into(), "in_elements".into(), traffic.in_elements.to_string()),
        (
            "traffic".into(),
            "out_elements".into(),
            traffic.out_elements.to_string(),
        ),
        (
            "traffic".into(),
            "intermediate_elements".into(),
            traffic.intermediate_elements.to_string(),
        ),
    ];
    for (k, v) in &traffic.stages {
        rows.push(("traffic_stage".into(), k.clone(), v.to_string()));
    }
    let stage_json = serde_json::to_value(cost.stages)?;
    let event_json = serde_json::to_value(cost.events)?;
    let energy_json = serde_json::to_value(cost.energy)?;
    for (section, value) in [("cycles", stage_json), ("events", event_json), ("energy", energy_json)] {
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                rows.push((section.into(), k, v.to_string()));
            }
        }
    }
    rows.push(("cycles".into(), "total".into(), cost.total_cycles.to_string()));
    rows.push(("time".into(), "wall_time_ns".into(), cost.wall_time_ns.to_string()));
    writeln!(w, "section,key,value").map_err(io)?;
    for (s, k, v) in rows {
        writeln!(w, "{s},{k},{v}").map_err(io)?;
    }
    Ok(())
}
