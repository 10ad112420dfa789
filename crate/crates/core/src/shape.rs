use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attention-layer dimensions: batch, tokens, hidden width, heads and the
/// per-head width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub batch: usize,
    pub tokens: usize,
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl ModelShape {
    pub fn new(batch: usize, tokens: usize, hidden: usize, heads: usize, head_dim: usize) -> Result<Self> {
        let s = ModelShape {
            batch,
            tokens,
            hidden,
            heads,
            head_dim,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.tokens == 0 || self.hidden == 0 || self.heads == 0 || self.head_dim == 0 {
            return Err(Error::Shape(format!("all dimensions must be positive: {self:?}")));
        }
        if self.heads * self.head_dim != self.hidden {
            return Err(Error::Shape(format!(
                "hidden ({}) must equal heads ({}) x head_dim ({})",
                self.hidden, self.heads, self.head_dim
            )));
        }
        Ok(())
    }

    /// Parses `B,N,D,H,dk`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("shape '{s}': {e}")))?;
        match parts.as_slice() {
            &[b, n, d, h, dk] => ModelShape::new(b, n, d, h, dk),
            _ => Err(Error::InvalidArgument(format!(
                "shape '{s}' must have five comma-separated values B,N,D,H,dk"
            ))),
        }
    }
}

/// Bit precisions of the datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    /// Input-activation bits.
    pub ibp: u32,
    /// Weight bits.
    pub wbp: u32,
    /// Softmax input bits.
    pub qi: u32,
    /// Softmax output bits.
    pub qo: u32,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig {
            ibp: 8,
            wbp: 8,
            qi: 8,
            qo: 8,
        }
    }
}

impl PrecisionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ibp", self.ibp), ("wbp", self.wbp), ("qi", self.qi), ("qo", self.qo)] {
            if !(2..=32).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must lie in [2, 32]")));
            }
        }
        Ok(())
    }
}

/// `ceil(log2(n))` for `n >= 1`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rules() {
        assert!(ModelShape::new(1, 32, 64, 4, 16).is_ok());
        assert!(ModelShape::new(1, 32, 64, 4, 15).is_err());
        assert!(ModelShape::new(0, 32, 64, 4, 16).is_err());
        assert_eq!(ModelShape::parse("1,512,1024,16,64").unwrap().tokens, 512);
        assert!(ModelShape::parse("1,2,3").is_err());
    }

    #[test]
    fn precision_bounds() {
        assert!(PrecisionConfig::default().validate().is_ok());
        let bad = PrecisionConfig {
            ibp: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PrecisionConfig {
            qo: 33,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn log2_ceiling() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(64), 6);
        assert_eq!(ceil_log2(65), 7);
        assert_eq!(ceil_log2(1024), 10);
    }
}
