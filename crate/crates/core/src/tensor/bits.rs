use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One bit position of a vector's two's-complement representation, packed
/// 64 elements per word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlane {
    bit_index: u32,
    words: Vec<u64>,
    len: usize,
    sign_plane: bool,
}

/// Order in which a consumer walks the planes of one vector.
///
/// Planes are always *stored* LSB-first; consumers pick the traversal order
/// explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BitOrder {
    LsbFirst,
    #[default]
    MsbFirst,
}

impl BitPlane {
    pub fn zeros(bit_index: u32, len: usize, sign_plane: bool) -> Self {
        BitPlane {
            bit_index,
            words: vec![0; len.div_ceil(64)],
            len,
            sign_plane,
        }
    }

    pub fn from_bools(bit_index: u32, sign_plane: bool, bits: &[bool]) -> Self {
        let mut p = BitPlane::zeros(bit_index, bits.len(), sign_plane);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                p.set(i);
            }
        }
        p
    }

    /// Plane with ones exactly at `positions`.
    pub fn from_positions(len: usize, positions: &[usize]) -> Self {
        let mut p = BitPlane::zeros(0, len, false);
        for &i in positions {
            p.set(i);
        }
        p
    }

    pub fn bit_index(&self) -> u32 {
        self.bit_index
    }

    pub fn is_sign(&self) -> bool {
        self.sign_plane
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of plane of length {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Positions of set bits in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Signed weight of this plane in a `bp`-bit recomposition.
    pub fn weight(&self) -> i64 {
        if self.sign_plane {
            -(1i64 << self.bit_index)
        } else {
            1i64 << self.bit_index
        }
    }
}

fn fits(v: i64, bp: u32) -> bool {
    let lo = -(1i64 << (bp - 1));
    let hi = (1i64 << (bp - 1)) - 1;
    (lo..=hi).contains(&v)
}

/// Splits `v` into `bp` LSB-first bit planes of its two's-complement form.
pub fn bit_decompose(v: &[i64], bp: u32) -> Result<Vec<BitPlane>> {
    if !(1..=63).contains(&bp) {
        return Err(Error::InvalidArgument(format!("bit precision {bp} outside [1, 63]")));
    }
    if let Some(&bad) = v.iter().find(|&&x| !fits(x, bp)) {
        return Err(Error::Overflow { value: bad, bits: bp });
    }
    let mut planes: Vec<BitPlane> = (0..bp).map(|i| BitPlane::zeros(i, v.len(), i == bp - 1)).collect();
    for (j, &x) in v.iter().enumerate() {
        let u = x as u64;
        for (i, plane) in planes.iter_mut().enumerate() {
            if (u >> i) & 1 == 1 {
                plane.words[j / 64] |= 1 << (j % 64);
            }
        }
    }
    Ok(planes)
}

/// Inverse of [`bit_decompose`]. Planes may arrive in any order; each one is
/// weighted by its own bit index and sign flag.
pub fn bit_recompose(planes: &[BitPlane], bp: u32) -> Result<Vec<i64>> {
    if planes.len() != bp as usize {
        return Err(Error::LengthMismatch {
            expected: bp as usize,
            actual: planes.len(),
        });
    }
    let len = planes.first().map_or(0, BitPlane::len);
    if let Some(p) = planes.iter().find(|p| p.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: p.len(),
        });
    }
    let mut out = vec![0i64; len];
    for p in planes {
        let w = p.weight();
        for j in p.ones() {
            out[j] += w;
        }
    }
    Ok(out)
}

/// Walks LSB-first stored planes in the requested order.
pub fn order_planes(planes: &[BitPlane], order: BitOrder) -> Box<dyn Iterator<Item = &BitPlane> + '_> {
    match order {
        BitOrder::LsbFirst => Box::new(planes.iter()),
        BitOrder::MsbFirst => Box::new(planes.iter().rev()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_in_four_bits() {
        let planes = bit_decompose(&[3], 4).unwrap();
        let bits: Vec<bool> = planes.iter().map(|p| p.get(0)).collect();
        assert_eq!(bits, [true, true, false, false]);
        assert!(planes[3].is_sign());
    }

    #[test]
    fn minus_two_in_four_bits() {
        let planes = bit_decompose(&[-2], 4).unwrap();
        let bits: Vec<bool> = planes.iter().map(|p| p.get(0)).collect();
        assert_eq!(bits, [false, true, true, true]);
        assert_eq!(bit_recompose(&planes, 4).unwrap(), [-2]);
    }

    #[test]
    fn overflow_rejected() {
        assert!(matches!(
            bit_decompose(&[8], 4),
            Err(Error::Overflow { value: 8, bits: 4 })
        ));
        assert!(bit_decompose(&[-9], 4).is_err());
        assert!(bit_decompose(&[-8, 7], 4).is_ok());
    }

    #[test]
    fn zero_planes_and_sign_only() {
        let zeros: Vec<BitPlane> = (0..8).map(|i| BitPlane::zeros(i, 5, i == 7)).collect();
        assert_eq!(bit_recompose(&zeros, 8).unwrap(), vec![0; 5]);

        let mut sign_only = zeros.clone();
        sign_only[7] = BitPlane::from_bools(7, true, &[true; 5]);
        assert_eq!(bit_recompose(&sign_only, 8).unwrap(), vec![-128; 5]);
    }

    #[test]
    fn recompose_length_mismatch() {
        let mut planes = bit_decompose(&[1, 2, 3], 4).unwrap();
        planes[2] = BitPlane::zeros(2, 4, false);
        assert!(matches!(bit_recompose(&planes, 4), Err(Error::LengthMismatch { .. })));
        assert!(bit_recompose(&planes[..3], 4).is_err());
    }

    #[test]
    fn most_negative_value_per_width() {
        for bp in [4u32, 8, 16] {
            let v = -(1i64 << (bp - 1));
            let planes = bit_decompose(&[v], bp).unwrap();
            assert_eq!(planes.iter().filter(|p| p.get(0)).count(), 1);
            assert_eq!(planes[bp as usize - 1].weight(), v);
            assert_eq!(bit_recompose(&planes, bp).unwrap(), [v]);
        }
    }

    #[test]
    fn ones_iterator_matches_get() {
        let bits: Vec<bool> = (0..200).map(|i| i % 7 == 0 || i == 199).collect();
        let p = BitPlane::from_bools(0, false, &bits);
        let ones: Vec<usize> = p.ones().collect();
        let expect: Vec<usize> = (0..200).filter(|&i| bits[i]).collect();
        assert_eq!(ones, expect);
        assert_eq!(p.count_ones(), expect.len());
    }

    #[test]
    fn plane_order_is_explicit() {
        let planes = bit_decompose(&[5], 4).unwrap();
        let msb: Vec<u32> = order_planes(&planes, BitOrder::MsbFirst)
            .map(|p| p.bit_index())
            .collect();
        assert_eq!(msb, [3, 2, 1, 0]);
        let lsb: Vec<u32> = order_planes(&planes, BitOrder::LsbFirst)
            .map(|p| p.bit_index())
            .collect();
        assert_eq!(lsb, [0, 1, 2, 3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn round_trip(bp in prop::sample::select(vec![4u32, 8, 16]), seed in any::<u64>(), len in 1usize..64) {
            let lo = -(1i64 << (bp - 1));
            let span = 1u64 << bp;
            let mut state = seed;
            let v: Vec<i64> = (0..len).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                lo + ((state >> 17) % span) as i64
            }).collect();
            let planes = bit_decompose(&v, bp).unwrap();
            prop_assert_eq!(planes.len(), bp as usize);
            for (j, &x) in v.iter().enumerate() {
                for (i, p) in planes.iter().enumerate() {
                    prop_assert_eq!(p.get(j), ((x as u64) >> i) & 1 == 1);
                }
            }
            prop_assert_eq!(bit_recompose(&planes, bp).unwrap(), v);
        }
    }
}
