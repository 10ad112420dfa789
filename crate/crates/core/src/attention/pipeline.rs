use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::recip::reciprocal;
use super::report::{traffic_revised, CostReport, EventCounts, StageCycles, TrafficReport};
use super::weights::WeightSet;
use crate::array::{
    accumulator_bits, exact_psums, gemv_bitserial, mix_seed, shift_add_recombine, AdcModel, ArrayKind, PimArray,
};
use crate::bitsift::{schedule_bitplane, BitSiftConfig};
use crate::config::{KvWidth, RunConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::quant::{emsb, emsb_quantize, msb_parse_quantize, token_emsb, Rounding, Stage, TokenScaleTracker};
use crate::shape::{ModelShape, PrecisionConfig};
use crate::softmax::{build_lut, vdr_norm_with_residual, SoftmaxConfig, SoftmaxLut};
use crate::tensor::{bit_decompose, DType, IntTensor};

/// Fraction bits kept by the per-head softmax normalizer.
const RECIP_FRAC: u32 = 15;

/// Resolved, validated parameters shared by both passes.
#[derive(Debug, Clone)]
pub struct Datapath {
    pub shape: ModelShape,
    pub prec: PrecisionConfig,
    pub bitsift: BitSiftConfig,
    pub adc: AdcModel,
    pub softmax: SoftmaxConfig,
    pub lut: SoftmaxLut,
    pub noise: bool,
    pub seed: u64,
    pub kv_width: KvWidth,
    pub rounding: Rounding,
    pub x_frac: u32,
    pub w_frac: u32,
    pub exec: Exec,
}

impl Datapath {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Datapath {
            shape: cfg.shape,
            prec: cfg.precision(),
            bitsift: cfg.bitsift(),
            adc: cfg.adc(),
            softmax: cfg.softmax(),
            lut: build_lut(cfg.qi, cfg.n_e_max)?,
            noise: cfg.noise,
            seed: cfg.seed,
            kv_width: cfg.kv_width,
            rounding: cfg.rounding,
            x_frac: cfg.x_frac(),
            w_frac: cfg.w_frac(),
            exec: cfg.exec,
        })
    }

    /// `round(log2 √d_k)`: the power-of-two stand-in for the `1/√d_k` logit
    /// scaling.
    pub fn dk_shift(&self) -> i32 {
        // round(L / 2) with L = log2 d_k is k exactly when 2k - 1 <= floor(L) <= 2k
        let floor_log = (usize::BITS - 1 - self.shape.head_dim.leading_zeros()) as i32;
        (floor_log + 1) / 2
    }

    fn stream(&self, parts: &[u64]) -> Option<ChaCha8Rng> {
        self.noise
            .then(|| ChaCha8Rng::seed_from_u64(mix_seed(self.seed, parts)))
    }

    /// One bit-serial GEMV of `x` (`bits`-bit) against `array`; returns the
    /// recombined outputs and the cycles spent.
    fn gemv(
        &self,
        x: &[i64],
        bits: u32,
        array: &PimArray,
        rng: Option<&mut ChaCha8Rng>,
        ev: &mut EventCounts,
    ) -> Result<(Vec<i64>, u64)> {
        let planes = bit_decompose(x, bits)?;
        let schedules = planes
            .iter()
            .map(|p| schedule_bitplane(p, array.rows(), &self.bitsift))
            .collect::<Result<Vec<_>>>()?;
        let cycles: u64 = schedules.iter().map(|s| s.cycles as u64).sum();
        let psums = match rng {
            Some(rng) => gemv_bitserial(&planes, array, &schedules, &self.adc, Some(rng))?,
            None => exact_psums(&planes, array)?,
        };
        // Noisy codes can exceed the true count by a level, so the noisy path
        // gets the full 63-bit headroom.
        let acc = if self.noise {
            63
        } else {
            accumulator_bits(bits, array.wbp(), x.len())
        };
        let out = shift_add_recombine(&psums, acc)?;
        ev.wl_activations += cycles * self.bitsift.sawl_max as u64;
        ev.adc_conversions += cycles * array.active_columns() as u64;
        ev.shift_adds += (bits * array.wbp()) as u64 * array.filters() as u64;
        Ok((out, cycles))
    }
}

/// The stationary weight arrays: Q, the fused K|V projection, and the output
/// projection. Each has `D` word lines.
#[derive(Debug, Clone)]
pub struct MramSet {
    pub q: PimArray,
    pub kv: PimArray,
    pub o: PimArray,
}

impl MramSet {
    pub fn program(weights: &WeightSet, dp: &Datapath) -> Result<Self> {
        weights.validate(&dp.shape, dp.prec.wbp)?;
        let d = dp.shape.hidden;
        let wbp = dp.prec.wbp;
        let k = WeightSet::fused(&weights.w_k);
        let v = WeightSet::fused(&weights.w_v);
        let kv: Vec<i64> = (0..d)
            .flat_map(|r| k[r * d..(r + 1) * d].iter().chain(&v[r * d..(r + 1) * d]).copied())
            .collect();
        let mut q_arr = PimArray::new(ArrayKind::Mram, d, d * wbp as usize);
        q_arr.write_matrix(&WeightSet::fused(&weights.w_q), d, d, wbp)?;
        let mut kv_arr = PimArray::new(ArrayKind::Mram, d, 2 * d * wbp as usize);
        kv_arr.write_matrix(&kv, d, 2 * d, wbp)?;
        let mut o_arr = PimArray::new(ArrayKind::Mram, d, d * wbp as usize);
        let wo: Vec<i64> = weights.w_o.to_i64();
        o_arr.write_matrix(&wo, d, d, wbp)?;
        Ok(MramSet {
            q: q_arr,
            kv: kv_arr,
            o: o_arr,
        })
    }

    pub fn bits_written(&self) -> u64 {
        self.q.bits_written() + self.kv.bits_written() + self.o.bits_written()
    }
}

/// Keys and values of one sequence after pass 1.
#[derive(Debug, Clone)]
pub struct KvState {
    /// Per head, `[N, d_k]` row-major, `IBP`-bit.
    pub k: Vec<Vec<i64>>,
    pub v: Vec<Vec<i64>>,
    /// Right shift applied to each head's K and V accumulators.
    pub k_shift: Vec<u32>,
    pub v_shift: Vec<u32>,
    /// `K^T`: `d_k` word lines by `N·IBP` bit lines, one per head.
    pub k_arrays: Vec<PimArray>,
    /// `V`: `N` word lines by `d_k·IBP` bit lines, one per head.
    pub v_arrays: Vec<PimArray>,
    pub cycles: StageCycles,
    pub events: EventCounts,
}

fn kv_parse(acc: &[i64], dp: &Datapath) -> Result<(Vec<i64>, u32)> {
    let ibp = dp.prec.ibp;
    let width = match dp.kv_width {
        KvWidth::Full => accumulator_bits(dp.prec.ibp, dp.prec.wbp, dp.shape.hidden),
        KvWidth::Fixed(w) => w,
        KvWidth::Calibrated => ((token_emsb(acc)? + 2).max(ibp as i32)) as u32,
    };
    let q = msb_parse_quantize(acc, ibp, width, dp.rounding)?;
    Ok((q.values, q.shift))
}

/// Pass 1 for one sequence: `x` is `[N, D]` row-major.
pub fn pass1_kv(x: &[i64], batch: usize, mram: &MramSet, dp: &Datapath) -> Result<KvState> {
    let ModelShape {
        tokens: n,
        hidden: d,
        heads: h,
        head_dim: dk,
        ..
    } = dp.shape;
    if x.len() != n * d {
        return Err(Error::LengthMismatch {
            expected: n * d,
            actual: x.len(),
        });
    }
    let ibp = dp.prec.ibp;
    let per_token = dp
        .exec
        .map_range(n, |t| {
            let mut ev = EventCounts::default();
            let mut rng = dp.stream(&[batch as u64, t as u64, 0]);
            let (acc, cycles) = dp.gemv(&x[t * d..(t + 1) * d], ibp, &mram.kv, rng.as_mut(), &mut ev)?;
            Ok((acc, cycles, ev))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut cycles = StageCycles::default();
    let mut events = EventCounts::default();
    for (_, c, ev) in &per_token {
        cycles.kv_projection += c;
        events = events.merge(*ev);
    }

    let mut state = KvState {
        k: Vec::with_capacity(h),
        v: Vec::with_capacity(h),
        k_shift: Vec::with_capacity(h),
        v_shift: Vec::with_capacity(h),
        k_arrays: Vec::with_capacity(h),
        v_arrays: Vec::with_capacity(h),
        cycles,
        events,
    };
    for head in 0..h {
        let gather = |offset: usize| -> Vec<i64> {
            per_token
                .iter()
                .flat_map(|(acc, _, _)| acc[offset + head * dk..offset + (head + 1) * dk].iter().copied())
                .collect()
        };
        let (k, ks) = kv_parse(&gather(0), dp)?;
        let (v, vs) = kv_parse(&gather(d), dp)?;

        let mut kt = vec![0i64; dk * n];
        for t in 0..n {
            for c in 0..dk {
                kt[c * n + t] = k[t * dk + c];
            }
        }
        let mut k_arr = PimArray::new(ArrayKind::Sram, dk, n * ibp as usize);
        k_arr.write_matrix(&kt, dk, n, ibp)?;
        let mut v_arr = PimArray::new(ArrayKind::Sram, n, dk * ibp as usize);
        v_arr.write_matrix(&v, n, dk, ibp)?;
        state.events.sram_bit_writes += k_arr.bits_written() + v_arr.bits_written();
        state.k.push(k);
        state.v.push(v);
        state.k_shift.push(ks);
        state.v_shift.push(vs);
        state.k_arrays.push(k_arr);
        state.v_arrays.push(v_arr);
    }
    // one key column and one value row per token, heads in parallel
    state.cycles.kv_write += 2 * n as u64;
    Ok(state)
}

/// Scale history of one head for one token.
#[derive(Debug, Clone, Serialize)]
pub struct HeadTrace {
    pub deficits: Vec<(Stage, u32)>,
    pub q_shift: u32,
    pub logit_shift: u32,
    /// Real logit = integer logit · 2^logit_exp.
    pub logit_exp: i32,
    pub n_e: u32,
    pub residual: i64,
    pub softmax_shift: u32,
    pub recip_bits: u32,
    /// Real head output = integer head output · 2^head_exp.
    pub head_exp: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct TokenTrace {
    pub heads: Vec<HeadTrace>,
    pub concat_shift: u32,
    pub out_shift: u32,
    /// Real output = integer output · 2^out_exp.
    pub out_exp: i32,
    /// Deficit of the final quantizer; reported only.
    pub output_deficit: u32,
}

/// Pass 2 for one token against the keys and values of its sequence.
pub fn pass2_token(
    x_t: &[i64],
    batch: usize,
    token: usize,
    kv: &KvState,
    mram: &MramSet,
    dp: &Datapath,
) -> Result<(Vec<i64>, TokenTrace, StageCycles, EventCounts)> {
    let ModelShape {
        hidden: d,
        heads: h,
        head_dim: dk,
        tokens: n,
        ..
    } = dp.shape;
    if x_t.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            actual: x_t.len(),
        });
    }
    let PrecisionConfig { ibp, wbp, qi, qo } = dp.prec;
    let (sx, sw) = (dp.x_frac as i32, dp.w_frac as i32);
    let mut cycles = StageCycles::default();
    let mut ev = EventCounts::default();
    let stream = |stage: u64, head: usize| dp.stream(&[batch as u64, token as u64, stage, head as u64]);

    let (q_acc, c) = dp.gemv(x_t, ibp, &mram.q, stream(1, 0).as_mut(), &mut ev)?;
    cycles.q_projection += c;

    let c1 = accumulator_bits(ibp, wbp, d);
    let c2 = accumulator_bits(ibp, ibp, dk);
    let base = dp.lut.entry(0)?.s as i32;

    let mut heads = Vec::with_capacity(h);
    let mut head_vals = Vec::with_capacity(h);
    for head in 0..h {
        // Real logit exponent when both quantizers keep zero deficit.
        let e0 = (c1 - ibp) as i32 + (c2 - qi) as i32 + kv.k_shift[head] as i32 - 2 * (sx + sw) - dp.dk_shift();
        let mut tracker = TokenScaleTracker::with_baseline(dp.lut.n_e_max(), (e0 - base) as i64);
        emsb_quantize(x_t, ibp, dp.rounding, Some((&mut tracker, Stage::Input, ibp)))?;
        let q = emsb_quantize(
            &q_acc[head * dk..(head + 1) * dk],
            ibp,
            dp.rounding,
            Some((&mut tracker, Stage::Query, c1)),
        )?;

        let (l_acc, c) = dp.gemv(&q.values, ibp, &kv.k_arrays[head], stream(2, head).as_mut(), &mut ev)?;
        cycles.logits = cycles.logits.max(c);
        let logits = emsb_quantize(&l_acc, qi, dp.rounding, Some((&mut tracker, Stage::Logits, c2)))?;
        let logit_exp = e0 - (tracker.total_deficit() as i32);

        let sm = vdr_norm_with_residual(&logits.values, tracker.n_e(), tracker.residual(), &dp.lut, &dp.softmax)?;
        let (a_acc, c) = dp.gemv(&sm.codes, qo + 1, &kv.v_arrays[head], stream(3, head).as_mut(), &mut ev)?;
        cycles.attention_values = cycles.attention_values.max(c);

        let sum: i64 = sm.codes.iter().sum();
        let recip_bits = emsb(sum) as u32 + 1 + RECIP_FRAC;
        let inv = reciprocal(sum as u64, recip_bits)? as i64;
        let vals: Vec<i64> = a_acc.iter().map(|&a| a * inv).collect();
        let head_exp = kv.v_shift[head] as i32 - sx - sw - recip_bits as i32;
        head_vals.push(vals);
        heads.push(HeadTrace {
            deficits: tracker.stage_deficits().to_vec(),
            q_shift: q.shift,
            logit_shift: logits.shift,
            logit_exp,
            n_e: tracker.n_e(),
            residual: tracker.residual(),
            softmax_shift: sm.shift,
            recip_bits,
            head_exp,
        });
    }
    debug_assert_eq!(n, kv.v_arrays[0].rows());

    // Concatenation onto the coarsest head exponent.
    let common = heads.iter().map(|t| t.head_exp).max().unwrap_or(0);
    let concat: Vec<i64> = heads
        .iter()
        .zip(&head_vals)
        .flat_map(|(t, vals)| {
            let s = (common - t.head_exp).min(63) as u32;
            vals.iter().map(move |&v| v >> s)
        })
        .collect();
    let u = emsb_quantize(&concat, ibp, dp.rounding, None)?;
    let (y_acc, c) = dp.gemv(&u.values, ibp, &mram.o, stream(4, 0).as_mut(), &mut ev)?;
    cycles.out_projection += c;
    let mut out_tracker = TokenScaleTracker::new(u32::MAX);
    let y = emsb_quantize(&y_acc, ibp, dp.rounding, Some((&mut out_tracker, Stage::Output, c1)))?;
    let trace = TokenTrace {
        heads,
        concat_shift: u.shift,
        out_shift: y.shift,
        out_exp: common + u.shift as i32 - sw + y.shift as i32,
        output_deficit: out_tracker.stage_deficits()[0].1,
    };
    Ok((y.values, trace, cycles, ev))
}

/// Result of a full fused run.
#[derive(Debug, Clone)]
pub struct AttentionRun {
    /// `[B, N, D]`, `IBP`-bit; token `i` is scaled by `2^out_exps[i]`.
    pub y: IntTensor,
    pub out_exps: Vec<i32>,
    pub traces: Vec<TokenTrace>,
    pub kv: Vec<KvState>,
    pub traffic: TrafficReport,
    pub cost: CostReport,
}

impl AttentionRun {
    /// Token `i` of the output in real units.
    pub fn dequantized_token(&self, i: usize) -> Vec<f64> {
        let s = 2f64.powi(self.out_exps[i]);
        self.y.row(i).iter().map(|&v| v as f64 * s).collect()
    }
}

/// Runs pass 1 then pass 2 for every sequence of the batch.
pub fn run_attention(x: &IntTensor, weights: &WeightSet, cfg: &RunConfig) -> Result<AttentionRun> {
    let dp = Datapath::from_config(cfg)?;
    let ModelShape {
        batch: b,
        tokens: n,
        hidden: d,
        ..
    } = dp.shape;
    if x.shape() != [b, n, d] {
        return Err(Error::Shape(format!(
            "input is {:?}, expected [{b}, {n}, {d}]",
            x.shape()
        )));
    }
    let xs = x.to_i64();
    let ibp = dp.prec.ibp;
    if let Some(&bad) = xs.iter().find(|&&v| v < -(1 << (ibp - 1)) || v >= 1 << (ibp - 1)) {
        return Err(Error::Overflow { value: bad, bits: ibp });
    }
    let mram = MramSet::program(weights, &dp)?;

    let mut traffic = TrafficReport::default();
    let mut cycles = StageCycles::default();
    let mut events = EventCounts {
        mram_bit_writes: mram.bits_written(),
        ..Default::default()
    };
    let mut y = Vec::with_capacity(b * n * d);
    let mut out_exps = Vec::with_capacity(b * n);
    let mut traces = Vec::with_capacity(b * n);
    let mut kvs = Vec::with_capacity(b);
    for batch in 0..b {
        let seq = &xs[batch * n * d..(batch + 1) * n * d];
        let kv = pass1_kv(seq, batch, &mram, &dp)?;
        for _ in 0..n {
            traffic.add_in("pass1_input", d as u64);
        }
        cycles = cycles.merge(kv.cycles);
        events = events.merge(kv.events);

        let outs = dp
            .exec
            .map_range(n, |t| pass2_token(&seq[t * d..(t + 1) * d], batch, t, &kv, &mram, &dp))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (yt, trace, c, ev) in outs {
            traffic.add_in("pass2_input", d as u64);
            traffic.add_out("output", yt.len() as u64);
            cycles = cycles.merge(c);
            events = events.merge(ev);
            out_exps.push(trace.out_exp);
            traces.push(trace);
            y.extend(yt);
        }
        kvs.push(kv);
    }
    debug_assert_eq!(traffic.total(), traffic_revised(&dp.shape).total());
    let y = IntTensor::from_i64(DType::for_bits(ibp)?, vec![b, n, d], &y)?;
    let cost = CostReport::new(cycles, events, &cfg.cost, &dp.adc, cfg.cycle_ns);
    Ok(AttentionRun {
        y,
        out_exps,
        traces,
        kv: kvs,
        traffic,
        cost,
    })
}
