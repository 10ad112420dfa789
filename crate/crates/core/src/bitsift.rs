//! Sparse bit-serial GEMV scheduling.
//!
//! A bit plane of the input vector drives word lines: only rows holding a `1`
//! need to be activated. The scheduler groups those rows into compute
//! segments of exactly `sawl_max` activations, padding with dummy rows whose
//! cells are all zero, so the ADC always sees the same number of active word
//! lines.
//!
//! Grouping happens in two levels. A local pop controller scans one
//! `slice_len`-bit slice, cutting a segment at every `sawl_max`-th one and
//! leaving a remainder group. The global pop controller forwards full
//! segments and packs remainder groups greedily in slice order.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::BitPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSiftConfig {
    pub slice_len: usize,
    pub sawl_max: usize,
    pub dummy_rows: usize,
}

impl Default for BitSiftConfig {
    fn default() -> Self {
        BitSiftConfig {
            slice_len: 64,
            sawl_max: 8,
            dummy_rows: 7,
        }
    }
}

impl BitSiftConfig {
    pub fn new(slice_len: usize, sawl_max: usize) -> Result<Self> {
        let cfg = BitSiftConfig {
            slice_len,
            sawl_max,
            dummy_rows: sawl_max.saturating_sub(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sawl_max == 0 {
            return Err(Error::InvalidArgument("sawl_max must be positive".into()));
        }
        if self.dummy_rows + 1 != self.sawl_max {
            return Err(Error::InvalidArgument(format!(
                "dummy_rows ({}) must equal sawl_max - 1 ({})",
                self.dummy_rows,
                self.sawl_max - 1
            )));
        }
        if self.slice_len < self.sawl_max {
            return Err(Error::InvalidArgument(format!(
                "slice_len ({}) must be at least sawl_max ({})",
                self.slice_len, self.sawl_max
            )));
        }
        Ok(())
    }
}

/// One analog summation cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeSegment {
    pub wl_indices: Vec<usize>,
    pub dummy_count: usize,
}

impl ComputeSegment {
    fn padded(wl_indices: Vec<usize>, sawl_max: usize) -> Self {
        let dummy_count = sawl_max - wl_indices.len();
        ComputeSegment {
            wl_indices,
            dummy_count,
        }
    }

    pub fn activations(&self) -> usize {
        self.wl_indices.len() + self.dummy_count
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSchedule {
    pub segments: Vec<ComputeSegment>,
    pub cycles: usize,
    pub popcount: usize,
}

impl SliceSchedule {
    pub fn dummy_total(&self) -> usize {
        self.segments.iter().map(|s| s.dummy_count).sum()
    }
}

/// Output of one local pop controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpcResult {
    pub popcount: usize,
    /// Segments of exactly `sawl_max` ones.
    pub full: Vec<Vec<usize>>,
    /// The `popcount mod sawl_max` ones after the last cut.
    pub remainder: Vec<usize>,
}

/// Scans `plane[range]` (clipped to the plane) and cuts it at every
/// `sawl_max`-th one.
pub fn lpc_scan(plane: &BitPlane, range: Range<usize>, sawl_max: usize) -> LpcResult {
    let end = range.end.min(plane.len());
    let mut ones = Vec::new();
    if range.start < end {
        let first_word = range.start / 64;
        let last_word = (end - 1) / 64;
        for (w, &word) in plane.words()[first_word..=last_word].iter().enumerate() {
            let base = (first_word + w) * 64;
            let mut bits = word;
            while bits != 0 {
                let pos = base + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                if pos >= range.start && pos < end {
                    ones.push(pos);
                }
            }
        }
    }
    let popcount = ones.len();
    let cut = popcount - popcount % sawl_max;
    let remainder = ones.split_off(cut);
    let full = ones.chunks(sawl_max).map(<[usize]>::to_vec).collect();
    LpcResult {
        popcount,
        full,
        remainder,
    }
}

/// Global pop controller: forward full segments and pack remainders in slice
/// order, closing a segment whenever the next group would overflow it.
pub fn gpc_pack(results: &[LpcResult], sawl_max: usize) -> SliceSchedule {
    let mut segments = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut popcount = 0;
    for r in results {
        popcount += r.popcount;
        segments.extend(r.full.iter().map(|f| ComputeSegment::padded(f.clone(), sawl_max)));
        if r.remainder.is_empty() {
            continue;
        }
        if pending.len() + r.remainder.len() > sawl_max {
            segments.push(ComputeSegment::padded(std::mem::take(&mut pending), sawl_max));
        }
        pending.extend_from_slice(&r.remainder);
    }
    if !pending.is_empty() {
        segments.push(ComputeSegment::padded(pending, sawl_max));
    }
    SliceSchedule {
        cycles: segments.len(),
        segments,
        popcount,
    }
}

/// Schedules one input bit plane against an array with `rows` word lines.
/// An all-zero plane produces no segments.
pub fn schedule_bitplane(plane: &BitPlane, rows: usize, cfg: &BitSiftConfig) -> Result<SliceSchedule> {
    cfg.validate()?;
    if plane.len() > rows {
        return Err(Error::PlaneTooLong { len: plane.len(), rows });
    }
    let slices = plane.len().div_ceil(cfg.slice_len);
    let results: Vec<LpcResult> = (0..slices)
        .map(|s| lpc_scan(plane, s * cfg.slice_len..(s + 1) * cfg.slice_len, cfg.sawl_max))
        .collect();
    Ok(gpc_pack(&results, cfg.sawl_max))
}

/// Cycles saved relative to a dense `len / sawl_max` sweep. A plane with no
/// ones is skipped entirely and reports the dense cycle count.
pub fn boost_factor(schedule: &SliceSchedule, len: usize, cfg: &BitSiftConfig) -> f64 {
    let dense = len as f64 / cfg.sawl_max as f64;
    if schedule.cycles == 0 {
        dense
    } else {
        dense / schedule.cycles as f64
    }
}

/// Upper bound on cycles quoted for the scheduler: `⌈P / sawl_max⌉`.
pub fn roundup_cycles(popcount: usize, sawl_max: usize) -> usize {
    popcount.div_ceil(sawl_max)
}

/// One JSON object per segment: `{"cycle", "wl_indices", "dummy_count"}`.
pub fn write_schedule_jsonl<W: Write>(mut w: W, schedule: &SliceSchedule) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        cycle: usize,
        wl_indices: &'a [usize],
        dummy_count: usize,
    }
    for (cycle, seg) in schedule.segments.iter().enumerate() {
        let line = serde_json::to_string(&Line {
            cycle,
            wl_indices: &seg.wl_indices,
            dummy_count: seg.dummy_count,
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io("<schedule>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lpc(positions: &[usize], len: usize) -> LpcResult {
        lpc_scan(&BitPlane::from_positions(len, positions), 0..len, 8)
    }

    fn remainder_group(n: usize, offset: usize) -> LpcResult {
        LpcResult {
            popcount: n,
            full: vec![],
            remainder: (offset..offset + n).collect(),
        }
    }

    #[test]
    fn lpc_examples() {
        let r = lpc(&[], 64);
        assert_eq!((r.popcount, r.full.len(), r.remainder.len()), (0, 0, 0));

        let r = lpc(&(0..8).collect::<Vec<_>>(), 64);
        assert_eq!(r.full, vec![(0..8).collect::<Vec<_>>()]);
        assert!(r.remainder.is_empty());

        let ones: Vec<usize> = (0..19).map(|i| 3 * i + 1).collect();
        let r = lpc(&ones, 64);
        assert_eq!(r.popcount, 19);
        assert_eq!(r.full.len(), 2);
        assert_eq!(*r.full[0].last().unwrap(), ones[7]);
        assert_eq!(*r.full[1].last().unwrap(), ones[15]);
        assert_eq!(r.remainder, &ones[16..]);
    }

    #[test]
    fn lpc_respects_range() {
        let plane = BitPlane::from_positions(200, &[5, 63, 64, 130, 199]);
        let r = lpc_scan(&plane, 64..128, 8);
        assert_eq!(r.remainder, [64]);
        let r = lpc_scan(&plane, 128..256, 8);
        assert_eq!(r.remainder, [130, 199]);
    }

    #[test]
    fn gpc_examples() {
        let s = gpc_pack(&[remainder_group(7, 0), remainder_group(1, 64)], 8);
        assert_eq!(s.cycles, 1);
        assert_eq!(s.segments[0].dummy_count, 0);

        let s = gpc_pack(&[remainder_group(7, 0), remainder_group(2, 64)], 8);
        assert_eq!(s.cycles, 2);
        assert_eq!(s.segments[0].dummy_count, 1);
        assert_eq!(s.segments[1].dummy_count, 6);

        let full = LpcResult {
            popcount: 24,
            full: (0..3).map(|k| (8 * k..8 * k + 8).collect()).collect(),
            remainder: vec![],
        };
        let s = gpc_pack(&[full], 8);
        assert_eq!((s.cycles, s.dummy_total()), (3, 0));
    }

    #[test]
    fn schedule_examples() {
        let cfg = BitSiftConfig::default();
        let plane = BitPlane::from_positions(1024, &(0..37).collect::<Vec<_>>());
        let s = schedule_bitplane(&plane, 1024, &cfg).unwrap();
        assert_eq!(s.cycles, 5);
        assert!((boost_factor(&s, 1024, &cfg) - 25.6).abs() < 1e-12);

        let dense = BitPlane::from_positions(1024, &(0..1024).collect::<Vec<_>>());
        let s = schedule_bitplane(&dense, 1024, &cfg).unwrap();
        assert_eq!(s.cycles, 128);
        assert_eq!(boost_factor(&s, 1024, &cfg), 1.0);

        let zero = BitPlane::zeros(0, 1024, false);
        let s = schedule_bitplane(&zero, 1024, &cfg).unwrap();
        assert_eq!(s.cycles, 0);
        assert_eq!(boost_factor(&s, 1024, &cfg), 128.0);

        // one 1 in every 8-bit group: every slice holds exactly 8 ones
        let sparse = BitPlane::from_positions(1024, &(0..128).map(|i| 8 * i).collect::<Vec<_>>());
        let s = schedule_bitplane(&sparse, 1024, &cfg).unwrap();
        assert_eq!(boost_factor(&s, 1024, &cfg), 8.0);

        assert!(matches!(
            schedule_bitplane(&zero, 512, &cfg),
            Err(Error::PlaneTooLong { len: 1024, rows: 512 })
        ));
    }

    #[test]
    fn config_rules() {
        assert!(BitSiftConfig::new(64, 8).is_ok());
        assert!(BitSiftConfig::new(4, 8).is_err());
        assert!(BitSiftConfig::new(64, 0).is_err());
        let bad = BitSiftConfig {
            dummy_rows: 3,
            ..BitSiftConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn jsonl_dump() {
        let plane = BitPlane::from_positions(64, &[1, 2, 3]);
        let s = schedule_bitplane(&plane, 64, &BitSiftConfig::default()).unwrap();
        let mut out = Vec::new();
        write_schedule_jsonl(&mut out, &s).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"cycle\":0,\"wl_indices\":[1,2,3],\"dummy_count\":5}\n"
        );
    }

    /// Fewest segments over all splits of the remainder sequence into
    /// contiguous runs of at most 8 ones.
    fn optimal_contiguous(rem: &[usize]) -> usize {
        let mut best = vec![usize::MAX; rem.len() + 1];
        best[0] = 0;
        for end in 1..=rem.len() {
            let mut load = 0;
            for start in (0..end).rev() {
                load += rem[start];
                if load > 8 {
                    break;
                }
                best[end] = best[end].min(best[start] + 1);
            }
        }
        best[rem.len()]
    }

    fn plane_strategy() -> impl Strategy<Value = BitPlane> {
        (1usize..=256, 0.0f64..=1.0, any::<u64>()).prop_map(|(len, p, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ones: Vec<usize> = (0..len).filter(|_| rng.random_bool(p)).collect();
            BitPlane::from_positions(len, &ones)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn schedule_invariants(plane in plane_strategy(), slice_len in 8usize..=96) {
            let cfg = BitSiftConfig::new(slice_len, 8).unwrap();
            let s = schedule_bitplane(&plane, plane.len(), &cfg).unwrap();
            let mut covered: Vec<usize> = s.segments.iter().flat_map(|g| g.wl_indices.iter().copied()).collect();
            for g in &s.segments {
                prop_assert_eq!(g.activations(), 8);
                prop_assert!(!g.wl_indices.is_empty());
                prop_assert!(g.wl_indices.windows(2).all(|w| w[0] < w[1]));
            }
            covered.sort_unstable();
            prop_assert_eq!(covered, plane.ones().collect::<Vec<_>>());
            let p = plane.count_ones();
            prop_assert_eq!(s.popcount, p);
            prop_assert!(s.cycles >= p.div_ceil(8));
            prop_assert!(s.cycles <= 2 * p.div_ceil(8) + 1);
            if plane.len() <= slice_len {
                prop_assert_eq!(s.cycles, p.div_ceil(8));
            }
            prop_assert_eq!(&s, &schedule_bitplane(&plane, plane.len(), &cfg).unwrap());

            let rem: Vec<usize> = (0..plane.len().div_ceil(slice_len))
                .map(|k| lpc_scan(&plane, k * slice_len..(k + 1) * slice_len, 8).remainder.len())
                .filter(|&n| n > 0)
                .collect();
            let full = (p - rem.iter().sum::<usize>()) / 8;
            prop_assert_eq!(s.cycles, full + optimal_contiguous(&rem));
        }

        // Dropping a one can split a full segment into a remainder that no
        // neighbour absorbs, so cycles may rise, but by at most one.
        #[test]
        fn removing_a_one_costs_at_most_one_cycle(plane in plane_strategy(), pick in any::<prop::sample::Index>()) {
            let cfg = BitSiftConfig::default();
            let ones: Vec<usize> = plane.ones().collect();
            prop_assume!(!ones.is_empty());
            let mut fewer = ones.clone();
            fewer.remove(pick.index(ones.len()));
            let before = schedule_bitplane(&plane, plane.len(), &cfg).unwrap().cycles;
            let after = schedule_bitplane(&BitPlane::from_positions(plane.len(), &fewer), plane.len(), &cfg).unwrap().cycles;
            prop_assert!(after <= before + 1);
        }

        #[test]
        fn clearing_whole_slices_never_adds_cycles(plane in plane_strategy(), mask in any::<u64>()) {
            let cfg = BitSiftConfig::default();
            let kept: Vec<usize> = plane.ones().filter(|&i| (mask >> ((i / cfg.slice_len) % 64)) & 1 == 1).collect();
            let before = schedule_bitplane(&plane, plane.len(), &cfg).unwrap().cycles;
            let after = schedule_bitplane(&BitPlane::from_positions(plane.len(), &kept), plane.len(), &cfg).unwrap().cycles;
            prop_assert!(after <= before);
        }
    }
}
