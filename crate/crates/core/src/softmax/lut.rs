use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of the shared working grid the polynomial is evaluated on.
pub const WORK_EXP: i32 = -6;

/// Fraction bits of the stored `a` mantissa.
const A_FRAC: i32 = 15;

/// Second-order fit of `exp(r)` on `[-ln 2, 0]`: `A·(r + B)² + C`.
const POLY_A: f64 = 0.3585;
const POLY_B: f64 = 1.353;
const POLY_C: f64 = 0.344;

/// Five little-endian 16-bit fields per entry.
pub const ENTRY_BYTES: usize = 10;

/// A power-of-two scale with a Q15 mantissa: `mantissa · 2^(exp − 15)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub mantissa: i64,
    pub exp: i32,
}

impl Scale {
    pub fn value(self) -> f64 {
        self.mantissa as f64 * 2f64.powi(self.exp - A_FRAC)
    }

    pub fn shifted(self, by: i32) -> Scale {
        Scale {
            exp: self.exp + by,
            ..self
        }
    }
}

/// One LUT row.
///
/// `a` is a Q15 mantissa; `b` and `c` are the expanded polynomial
/// coefficients on the `2^WORK_EXP` working grid so that the kernel evaluates
/// `r'·(r' + b) + c`. `s` is the input-scale exponent of the entry and `l` the
/// range-reduction constant `≈ −ln 2` expressed in input units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutEntry {
    pub a: i16,
    pub b: i16,
    pub c: i16,
    pub s: i16,
    pub l: i16,
}

impl LutEntry {
    /// Scale of the raw polynomial value, shared by every entry.
    pub fn poly_scale(&self) -> Scale {
        Scale {
            mantissa: self.a as i64,
            exp: 2 * WORK_EXP,
        }
    }

    /// Shift that moves an input-unit value onto the working grid; positive
    /// values shift right.
    pub fn align_shift(&self) -> i32 {
        WORK_EXP - self.s as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftmaxLut {
    entries: Vec<LutEntry>,
}

/// Entry-0 input exponent for `q_i`-bit logits: the coarsest power of two at
/// which the full `2^(q_i+1)` range of `x − max(x)` still spans the
/// `2·q_i` halvings the clip allows.
pub fn default_base_exp(q_i: u32) -> i32 {
    let span = 2.0 * q_i as f64 * std::f64::consts::LN_2;
    span.log2().floor() as i32 - q_i as i32
}

pub fn build_lut(q_i: u32, n_e_max: u32) -> Result<SoftmaxLut> {
    build_lut_with_base(q_i, n_e_max, default_base_exp(q_i))
}

pub fn build_lut_with_base(q_i: u32, n_e_max: u32, base_exp: i32) -> Result<SoftmaxLut> {
    if !(4..=16).contains(&q_i) {
        return Err(Error::InvalidArgument(format!(
            "softmax input precision {q_i} outside [4, 16]"
        )));
    }
    if n_e_max > 15 {
        return Err(Error::InvalidArgument(format!("n_e_max {n_e_max} exceeds 15")));
    }
    let work = 2f64.powi(WORK_EXP);
    let a = (POLY_A * 2f64.powi(A_FRAC)).round() as i64;
    let b = (2.0 * POLY_B / work).round() as i64;
    let c = ((POLY_B * POLY_B + POLY_C / POLY_A) / (work * work)).round() as i64;
    let l0 = (-std::f64::consts::LN_2 * 2f64.powi(-base_exp)).round() as i64;
    if l0 >= 0 {
        return Err(Error::InvalidArgument(format!(
            "base exponent {base_exp} is too coarse to represent ln 2"
        )));
    }
    let narrow = |field: &'static str, value: i64, entry: usize| -> Result<i16> {
        i16::try_from(value).map_err(|_| Error::LutOverflow { field, value, entry })
    };
    let entries = (0..=n_e_max as usize)
        .map(|k| {
            Ok(LutEntry {
                a: narrow("a", a, k)?,
                b: narrow("b", b, k)?,
                c: narrow("c", c, k)?,
                s: narrow("S", base_exp as i64 - k as i64, k)?,
                l: narrow("l", l0 << k, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SoftmaxLut { entries })
}

impl SoftmaxLut {
    pub fn entry(&self, n_e: u32) -> Result<&LutEntry> {
        self.entries
            .get(n_e as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("n_e {n_e} beyond LUT range 0..={}", self.entries.len() - 1)))
    }

    pub fn entries(&self) -> &[LutEntry] {
        &self.entries
    }

    pub fn n_e_max(&self) -> u32 {
        self.entries.len() as u32 - 1
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries
            .iter()
            .flat_map(|e| [e.a, e.b, e.c, e.s, e.l])
            .flat_map(i16::to_le_bytes)
            .collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() || !bytes.len().is_multiple_of(ENTRY_BYTES) {
            return Err(Error::InvalidArgument(format!(
                "LUT image of {} bytes is not a positive multiple of {ENTRY_BYTES}",
                bytes.len()
            )));
        }
        let entries = bytes
            .chunks_exact(ENTRY_BYTES)
            .map(|c| {
                let f = |i: usize| i16::from_le_bytes([c[2 * i], c[2 * i + 1]]);
                LutEntry {
                    a: f(0),
                    b: f(1),
                    c: f(2),
                    s: f(3),
                    l: f(4),
                }
            })
            .collect::<Vec<_>>();
        if let Some((k, _)) = entries.iter().enumerate().find(|(_, e)| e.l >= 0) {
            return Err(Error::InvalidArgument(format!("LUT entry {k} has a non-negative l")));
        }
        Ok(SoftmaxLut { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lut_is_one_hundred_bytes() {
        let lut = build_lut(8, 9).unwrap();
        assert_eq!(lut.entries().len(), 10);
        assert_eq!(lut.to_bytes().len(), 100);
        assert!(lut.entries().iter().all(|e| e.l < 0));
        assert_eq!(SoftmaxLut::from_bytes(&lut.to_bytes()).unwrap(), lut);
    }

    #[test]
    fn entries_differ_by_one_halving() {
        let lut = build_lut(8, 9).unwrap();
        for w in lut.entries().windows(2) {
            assert_eq!(w[1].s, w[0].s - 1);
            assert_eq!(w[1].l, 2 * w[0].l);
            assert_eq!((w[0].a, w[0].b, w[0].c), (w[1].a, w[1].b, w[1].c));
        }
        assert_eq!(default_base_exp(8), -5);
    }

    #[test]
    fn overflow_is_reported() {
        match build_lut(8, 15) {
            Err(Error::LutOverflow { field: "l", entry, .. }) => assert_eq!(entry, 11),
            other => panic!("expected l overflow, got {other:?}"),
        }
        assert!(build_lut(8, 16).is_err());
        assert!(build_lut(3, 9).is_err());
        assert!(build_lut_with_base(8, 9, 3).is_err());
    }

    #[test]
    fn rejects_bad_images() {
        assert!(SoftmaxLut::from_bytes(&[0; 7]).is_err());
        assert!(SoftmaxLut::from_bytes(&[]).is_err());
        assert!(SoftmaxLut::from_bytes(&[0; 10]).is_err());
    }
}
