//! Behavioural model of the PiM arrays and their ADCs.
//!
//! Weights are stored bit-sliced: column `f·wbp + j` holds bit `j` of filter
//! `f` along the word lines. A GEMV drives one input bit plane at a time; each
//! scheduled segment activates its word lines together and every column's
//! analog sum is digitized by the ADC. Bit-serial partial sums are then
//! recombined with two's-complement weights.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bitsift::{ComputeSegment, SliceSchedule};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::shape::ceil_log2;
use crate::tensor::BitPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Mram,
    Sram,
}

/// A weight-stationary array holding a bit-sliced `[in_len, filters]` matrix.
#[derive(Debug, Clone)]
pub struct PimArray {
    kind: ArrayKind,
    rows: usize,
    cols: usize,
    in_len: usize,
    filters: usize,
    wbp: u32,
    columns: Vec<BitPlane>,
    bits_written: u64,
}

impl PimArray {
    /// An empty array of `rows` word lines by `cols` bit lines.
    pub fn new(kind: ArrayKind, rows: usize, cols: usize) -> Self {
        PimArray {
            kind,
            rows,
            cols,
            in_len: 0,
            filters: 0,
            wbp: 1,
            columns: Vec::new(),
            bits_written: 0,
        }
    }

    /// Writes a row-major `[in_len, filters]` matrix of `wbp`-bit weights.
    pub fn write_matrix(&mut self, weights: &[i64], in_len: usize, filters: usize, wbp: u32) -> Result<()> {
        if weights.len() != in_len * filters {
            return Err(Error::LengthMismatch {
                expected: in_len * filters,
                actual: weights.len(),
            });
        }
        if in_len > self.rows {
            return Err(Error::Capacity(format!(
                "{in_len} weight rows exceed {} word lines",
                self.rows
            )));
        }
        if filters * wbp as usize > self.cols {
            return Err(Error::Capacity(format!(
                "{filters} filters x {wbp} bits exceed {} bit lines",
                self.cols
            )));
        }
        let mut columns = Vec::with_capacity(filters * wbp as usize);
        for f in 0..filters {
            let column: Vec<i64> = (0..in_len).map(|r| weights[r * filters + f]).collect();
            columns.extend(crate::tensor::bit_decompose(&column, wbp)?);
        }
        self.in_len = in_len;
        self.filters = filters;
        self.wbp = wbp;
        self.columns = columns;
        self.bits_written += (in_len * filters * wbp as usize) as u64;
        Ok(())
    }

    /// Convenience: a right-sized array holding `weights`.
    pub fn programmed(kind: ArrayKind, weights: &[i64], in_len: usize, filters: usize, wbp: u32) -> Result<Self> {
        let mut a = PimArray::new(kind, in_len, filters * wbp as usize);
        a.write_matrix(weights, in_len, filters, wbp)?;
        Ok(a)
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn wbp(&self) -> u32 {
        self.wbp
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn bits_written(&self) -> u64 {
        self.bits_written
    }

    /// Bit-line `j` of filter `f`.
    pub fn column(&self, filter: usize, bit: u32) -> &BitPlane {
        &self.columns[filter * self.wbp as usize + bit as usize]
    }

    /// Bit lines that carry data, i.e. ADC conversions per segment.
    pub fn active_columns(&self) -> usize {
        self.columns.len()
    }
}

/// ADC plus the analog variation model feeding it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    pub enob: u32,
    pub sawl_max: usize,
    pub sigma_cell: f64,
}

impl AdcModel {
    pub fn new(sawl_max: usize, sigma_cell: f64) -> Result<Self> {
        let adc = AdcModel {
            enob: ceil_log2(sawl_max + 1),
            sawl_max,
            sigma_cell,
        };
        adc.validate()?;
        Ok(adc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_cell >= 0.0 && self.sigma_cell.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_cell {} must be >= 0",
                self.sigma_cell
            )));
        }
        if self.enob > 30 {
            return Err(Error::InvalidArgument(format!(
                "ENOB {} is unrealistically large",
                self.enob
            )));
        }
        Ok(())
    }

    /// Whether every count `0..=sawl_max` has its own code.
    pub fn is_exact(&self) -> bool {
        self.enob >= ceil_log2(self.sawl_max + 1)
    }

    pub fn max_level(&self) -> i64 {
        (self.sawl_max as i64).min((1i64 << self.enob) - 1)
    }

    /// Relative conversion energy, normalized so a 4-bit ADC costs 1.
    pub fn conversion_energy(&self) -> f64 {
        2f64.powi(self.enob as i32) / 16.0
    }

    /// Digitizes `count` conducting cells: each contributes `1 + N(0, σ)`
    /// when noise is on, and the sum snaps to the nearest level.
    pub fn convert<R: Rng + ?Sized>(&self, count: u32, noise: Option<&mut R>) -> i64 {
        let analog = match noise {
            Some(rng) if self.sigma_cell > 0.0 && count > 0 => (0..count)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    1.0 + self.sigma_cell * z
                })
                .sum::<f64>(),
            _ => count as f64,
        };
        (analog.round() as i64).clamp(0, self.max_level())
    }
}

/// Digital count for one segment on one bit line. Dummy rows hold only zero
/// cells, so they add no current and only the real word lines are read.
pub fn column_sum<R: Rng + ?Sized>(
    segment: &ComputeSegment,
    column: &BitPlane,
    adc: &AdcModel,
    noise: Option<&mut R>,
) -> i64 {
    let on = segment
        .wl_indices
        .iter()
        .filter(|&&r| r < column.len() && column.get(r))
        .count() as u32;
    adc.convert(on, noise)
}

/// Partial sums indexed by (input bit, weight bit, filter).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsumGrid {
    pub ibp: u32,
    pub wbp: u32,
    pub filters: usize,
    data: Vec<i64>,
}

impl PsumGrid {
    pub fn zeros(ibp: u32, wbp: u32, filters: usize) -> Self {
        PsumGrid {
            ibp,
            wbp,
            filters,
            data: vec![0; ibp as usize * wbp as usize * filters],
        }
    }

    fn idx(&self, i: u32, j: u32, f: usize) -> usize {
        (i as usize * self.wbp as usize + j as usize) * self.filters + f
    }

    pub fn get(&self, i: u32, j: u32, f: usize) -> i64 {
        self.data[self.idx(i, j, f)]
    }

    pub fn set(&mut self, i: u32, j: u32, f: usize, v: i64) {
        let k = self.idx(i, j, f);
        self.data[k] = v;
    }
}

fn check_planes(planes: &[BitPlane], array: &PimArray) -> Result<()> {
    if let Some(p) = planes.iter().find(|p| p.len() > array.rows()) {
        return Err(Error::PlaneTooLong {
            len: p.len(),
            rows: array.rows(),
        });
    }
    Ok(())
}

/// Runs every scheduled segment through the ADC of every bit line.
pub fn gemv_bitserial<R: Rng + ?Sized>(
    input_planes: &[BitPlane],
    array: &PimArray,
    schedules: &[SliceSchedule],
    adc: &AdcModel,
    mut noise: Option<&mut R>,
) -> Result<PsumGrid> {
    if schedules.len() != input_planes.len() {
        return Err(Error::LengthMismatch {
            expected: input_planes.len(),
            actual: schedules.len(),
        });
    }
    check_planes(input_planes, array)?;
    let ibp = input_planes.len() as u32;
    let mut grid = PsumGrid::zeros(ibp, array.wbp(), array.filters());
    for (i, sched) in schedules.iter().enumerate() {
        if let Some(seg) = sched.segments.iter().find(|s| s.activations() > adc.sawl_max) {
            return Err(Error::Capacity(format!(
                "segment activates {} word lines, ADC is sized for {}",
                seg.activations(),
                adc.sawl_max
            )));
        }
        for f in 0..array.filters() {
            for j in 0..array.wbp() {
                let column = array.column(f, j);
                let sum: i64 = sched
                    .segments
                    .iter()
                    .map(|seg| column_sum(seg, column, adc, noise.as_deref_mut()))
                    .sum();
                grid.set(i as u32, j, f, sum);
            }
        }
    }
    Ok(grid)
}

/// Noise-free partial sums straight from `popcount(plane AND column)`. Equal
/// to [`gemv_bitserial`] without noise for any valid schedule, since segments
/// partition the ones of each plane.
pub fn exact_psums(input_planes: &[BitPlane], array: &PimArray) -> Result<PsumGrid> {
    check_planes(input_planes, array)?;
    let mut grid = PsumGrid::zeros(input_planes.len() as u32, array.wbp(), array.filters());
    for (i, plane) in input_planes.iter().enumerate() {
        if plane.count_ones() == 0 {
            continue;
        }
        for f in 0..array.filters() {
            for j in 0..array.wbp() {
                let sum: u32 = plane
                    .words()
                    .iter()
                    .zip(array.column(f, j).words())
                    .map(|(a, b)| (a & b).count_ones())
                    .sum();
                grid.set(i as u32, j, f, sum as i64);
            }
        }
    }
    Ok(grid)
}

fn plane_weight(bit: u32, bits: u32) -> i64 {
    if bit == bits - 1 {
        -(1i64 << bit)
    } else {
        1i64 << bit
    }
}

/// `out[f] = Σ_i Σ_j w(i)·w(j)·psum(i, j, f)` with negative sign-plane
/// weights, checked against an `acc_bits`-wide accumulator.
pub fn shift_add_recombine(psums: &PsumGrid, acc_bits: u32) -> Result<Vec<i64>> {
    let lim = 1i64 << (acc_bits.min(63) - 1);
    (0..psums.filters)
        .map(|f| {
            let mut acc = 0i64;
            for i in 0..psums.ibp {
                for j in 0..psums.wbp {
                    acc += plane_weight(i, psums.ibp) * plane_weight(j, psums.wbp) * psums.get(i, j, f);
                }
            }
            if acc < -lim || acc >= lim {
                Err(Error::AccumulatorOverflow {
                    value: acc,
                    bits: acc_bits,
                })
            } else {
                Ok(acc)
            }
        })
        .collect()
}

/// Full accumulator width of a `len`-term product of `ibp`- and `wbp`-bit
/// operands.
pub fn accumulator_bits(ibp: u32, wbp: u32, len: usize) -> u32 {
    ibp + wbp + ceil_log2(len)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub sawl: usize,
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub sigma_equivalent: f64,
    /// Miscode probability predicted from the Gaussian tail for the same
    /// uniform count distribution.
    pub analytic_error_rate: f64,
}

impl McResult {
    /// Binomial standard error of the analytic rate at this trial count.
    pub fn standard_error(&self) -> f64 {
        let p = self.analytic_error_rate;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn passes_six_sigma(&self) -> bool {
        self.sigma_equivalent >= 6.0
    }
}

/// Worst-case margin in standard deviations: half an LSB over the spread of a
/// full segment.
pub fn sigma_equivalent(sigma_cell: f64, sawl: usize) -> f64 {
    if sigma_cell == 0.0 {
        f64::INFINITY
    } else {
        0.5 / (sigma_cell * (sawl as f64).sqrt())
    }
}

/// Probability that a uniformly drawn true count in `0..=sawl` is miscoded.
pub fn analytic_error_rate(sigma_cell: f64, sawl: usize, max_level: i64) -> f64 {
    use statrs::function::erf::erfc;
    let tail = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    let total: f64 = (1..=sawl as i64)
        .map(|k| {
            if k > max_level {
                return 1.0;
            }
            if sigma_cell == 0.0 {
                return 0.0;
            }
            let z = 0.5 / (sigma_cell * (k as f64).sqrt());
            if k == max_level {
                tail(z)
            } else {
                2.0 * tail(z)
            }
        })
        .sum();
    total / (sawl + 1) as f64
}

const MC_CHUNK: u64 = 1 << 14;

/// Derives an independent stream seed from a root seed and a path of
/// indices (splitmix64 finalizer applied after each component).
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let finalize = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(finalize(seed), |acc, &p| {
        finalize(acc.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p))
    })
}

/// Monte Carlo miscode rate per SAWL.
///
/// Trials are split into fixed chunks, each with its own RNG stream derived
/// from `(seed, sawl, chunk)`, so results do not depend on thread count or
/// execution order. The ADC is sized exactly for each SAWL.
pub fn monte_carlo_sawl(sigma_cell: f64, sawls: &[usize], trials: u64, seed: u64, exec: Exec) -> Result<Vec<McResult>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one trial".into()));
    }
    sawls
        .iter()
        .map(|&sawl| {
            if sawl == 0 {
                return Err(Error::InvalidArgument("SAWL must be positive".into()));
            }
            let adc = AdcModel::new(sawl, sigma_cell)?;
            let normal = Normal::new(1.0, sigma_cell).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let chunks = trials.div_ceil(MC_CHUNK);
            let errors = exec.map_reduce(
                chunks as usize,
                0u64,
                |c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[sawl as u64, c as u64]));
                    let n = MC_CHUNK.min(trials - c as u64 * MC_CHUNK);
                    let mut errs = 0;
                    for _ in 0..n {
                        let k = rng.random_range(0..=sawl as i64);
                        let analog: f64 = (0..k).map(|_| normal.sample(&mut rng)).sum();
                        let code = (analog.round() as i64).clamp(0, adc.max_level());
                        errs += (code != k) as u64;
                    }
                    errs
                },
                |a, b| a + b,
            );
            Ok(McResult {
                sawl,
                trials,
                errors,
                error_rate: errors as f64 / trials as f64,
                sigma_equivalent: sigma_equivalent(sigma_cell, sawl),
                analytic_error_rate: analytic_error_rate(sigma_cell, sawl, adc.max_level()),
            })
        })
        .collect()
}

/// CSV with columns `sawl,trials,errors,error_rate,sigma_equivalent`.
pub fn write_mc_csv<W: Write>(mut w: W, results: &[McResult]) -> Result<()> {
    let io = |e| Error::io("<csv>", e);
    writeln!(w, "sawl,trials,errors,error_rate,sigma_equivalent").map_err(io)?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{:e},{}",
            r.sawl, r.trials, r.errors, r.error_rate, r.sigma_equivalent
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Unit costs per event class. The ADC cost defaults to `2^enob / 2^4` when
/// left unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTokens {
    pub wl_activation: f64,
    pub adc_conversion: Option<f64>,
    pub sram_bit_write: f64,
    pub mram_bit_write: f64,
    pub shift_add: f64,
}

impl Default for CostTokens {
    fn default() -> Self {
        CostTokens {
            wl_activation: 1.0,
            adc_conversion: None,
            sram_bit_write: 1.0,
            mram_bit_write: 1.0,
            shift_add: 1.0,
        }
    }
}

impl CostTokens {
    pub fn adc(&self, adc: &AdcModel) -> f64 {
        self.adc_conversion.unwrap_or_else(|| adc.conversion_energy())
    }
}
