use crate::error::{Error, Result};
use crate::quant::emsb;

/// Working precision of the Newton–Raphson iteration.
const P: u32 = 62;
/// `48/17` and `32/17` in Q62: the minimax linear seed for `1/d`, `d ∈ [0.5, 1)`.
const SEED_A: u128 = (48u128 << P) / 17;
const SEED_B: u128 = (32u128 << P) / 17;

/// `⌊2^r / d⌋` from multiplies and shifts only.
///
/// `d` is normalized to `[0.5, 1)` in Q63, seeded linearly and refined with
/// four Newton–Raphson steps (`y ← y·(2 − d·y)`), which leaves at most a few
/// units of error; a compare-and-step against `d` makes the result exact.
pub fn reciprocal(d: u64, r: u32) -> Result<u64> {
    if d == 0 {
        return Err(Error::InvalidArgument("reciprocal of zero".into()));
    }
    if r > 62 || d > i64::MAX as u64 {
        return Err(Error::InvalidArgument(format!(
            "reciprocal 2^{r}/{d} outside the 62-bit range"
        )));
    }
    let n = emsb(d as i64) as u32;
    // D = dn / 2^(P+1) ∈ [0.5, 1)
    let dn = (d as u128) << (P - n);
    let two = 1u128 << (P + 1);
    let mut y = SEED_A - ((SEED_B * dn) >> (P + 1));
    for _ in 0..4 {
        let t = (dn * y) >> (P + 1);
        y = (y * (two - t)) >> P;
    }
    // y ≈ 2^P / D = 2^(2P+1) / dn, and 1/d = 2^(P-n) / dn
    let target = 1u128 << r;
    let d = d as u128;
    let mut q = (y << r) >> (P + n + 1);
    while q * d > target {
        q -= 1;
    }
    while (q + 1) * d <= target {
        q += 1;
    }
    Ok(q as u64)
}
