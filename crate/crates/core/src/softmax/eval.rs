//! Accuracy sweep of the integer softmax against the floating-point one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::{reference_softmax, renormalize, vdr_norm, SoftmaxConfig, SoftmaxLut};
use crate::array::mix_seed;
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub tokens: usize,
    /// Logits per token.
    pub len: usize,
    /// Standard deviation of the logits in real units.
    pub logit_std: f64,
    /// LUT entry the logits are generated for.
    pub n_e: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftmaxEval {
    pub tokens: usize,
    /// Tokens whose top code appears only at positions of the top logit.
    pub argmax_preserved: usize,
    pub mean_l1: f64,
    pub p99_l1: f64,
    pub max_l1: f64,
    /// Tokens where `(2x, n_e + 1)` reproduced the codes of `(x, n_e)`,
    /// checked for every `n_e < n_e_max` on logits that still fit after
    /// doubling.
    pub base_adjust_exact: usize,
    pub base_adjust_checked: usize,
}

/// One random token of `len` logits on the integer grid of entry `n_e`,
/// clamped to `Q_I` bits.
pub fn random_logits(
    rng: &mut ChaCha8Rng,
    len: usize,
    std: f64,
    n_e: u32,
    lut: &SoftmaxLut,
    q_i: u32,
) -> Result<Vec<i64>> {
    let scale_exp = lut.entry(n_e)?.s as i32;
    let normal = Normal::new(0.0, std * 2f64.powi(-scale_exp)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let hi = (1i64 << (q_i - 1)) - 1;
    Ok((0..len)
        .map(|_| (normal.sample(rng).round() as i64).clamp(-hi - 1, hi))
        .collect())
}

struct TokenOutcome {
    argmax: bool,
    l1: f64,
    adjust_exact: usize,
    adjust_checked: usize,
}

fn evaluate_token(x: &[i64], sweep: &SweepConfig, lut: &SoftmaxLut, cfg: &SoftmaxConfig) -> Result<TokenOutcome> {
    let out = vdr_norm(x, sweep.n_e, lut, cfg)?;
    let p = reference_softmax(x, lut.entry(sweep.n_e)?.s as i32);
    let q = renormalize(&out.codes);
    let l1 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
    let xmax = *x.iter().max().ok_or(Error::Empty("logits"))?;
    let cmax = *out.codes.iter().max().ok_or(Error::Empty("codes"))?;
    // Strict: every position holding the top code must hold a top logit.
    let argmax = x.iter().zip(&out.codes).all(|(&xi, &c)| c < cmax || xi == xmax);

    // Base adjustment on the half-range so that doubling still fits Q_I bits.
    let half = 1i64 << (cfg.q_i - 2);
    let small: Vec<i64> = x.iter().map(|&v| v.clamp(-half, half - 1)).collect();
    let doubled: Vec<i64> = small.iter().map(|&v| 2 * v).collect();
    let mut exact = 0;
    let mut checked = 0;
    for n_e in 0..lut.n_e_max() {
        let a = vdr_norm(&small, n_e, lut, cfg)?;
        let b = vdr_norm(&doubled, n_e + 1, lut, cfg)?;
        checked += 1;
        exact += (a.codes == b.codes) as usize;
    }
    Ok(TokenOutcome {
        argmax,
        l1,
        adjust_exact: exact,
        adjust_checked: checked,
    })
}

pub fn evaluate(sweep: &SweepConfig, lut: &SoftmaxLut, cfg: &SoftmaxConfig, exec: Exec) -> Result<SoftmaxEval> {
    cfg.validate()?;
    if sweep.tokens == 0 || sweep.len == 0 {
        return Err(Error::InvalidArgument(
            "softmax sweep needs at least one token of one logit".into(),
        ));
    }
    let outcomes = exec
        .map_range(sweep.tokens, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(sweep.seed, &[t as u64]));
            let x = random_logits(&mut rng, sweep.len, sweep.logit_std, sweep.n_e, lut, cfg.q_i)?;
            evaluate_token(&x, sweep, lut, cfg)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut l1: Vec<f64> = outcomes.iter().map(|o| o.l1).collect();
    l1.sort_by(f64::total_cmp);
    let n = l1.len();
    Ok(SoftmaxEval {
        tokens: n,
        argmax_preserved: outcomes.iter().filter(|o| o.argmax).count(),
        mean_l1: l1.iter().sum::<f64>() / n as f64,
        p99_l1: l1[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1],
        max_l1: l1[n - 1],
        base_adjust_exact: outcomes.iter().map(|o| o.adjust_exact).sum(),
        base_adjust_checked: outcomes.iter().map(|o| o.adjust_checked).sum(),
    })
}
