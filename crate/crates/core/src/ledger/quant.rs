use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Wire precision of uploaded parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantizer {
    #[default]
    Float32,
    /// 32-bit floats with the low 16 mantissa bits dropped.
    BFloat16,
}

impl Quantizer {
    pub fn bits_per_value(self) -> u64 {
        match self {
            Quantizer::Float32 => 32,
            Quantizer::BFloat16 => 16,
        }
    }

    /// Value as seen by the receiver.
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Quantizer::Float32 => x,
            Quantizer::BFloat16 => bf16_truncate(x),
        }
    }

    pub fn apply_slice(self, xs: &mut [f32]) {
        if self == Quantizer::BFloat16 {
            xs.iter_mut().for_each(|x| *x = bf16_truncate(*x));
        }
    }
}

impl fmt::Display for Quantizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantizer::Float32 => "f32",
            Quantizer::BFloat16 => "bf16",
        })
    }
}

impl FromStr for Quantizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "float32" => Ok(Quantizer::Float32),
            "bf16" | "bfloat16" => Ok(Quantizer::BFloat16),
            other => Err(Error::config(format!("unknown quantizer `{other}`"))),
        }
    }
}

/// Zeroes the low 16 bits of `x` (truncation toward zero in magnitude).
pub fn bf16_truncate(x: f32) -> f32 {
    f32::from_bits(x.to_bits() & 0xFFFF_0000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values_survive() {
        for x in [0.0f32, -0.0, 1.0, -2.0, 0.5, 3.0, f32::INFINITY] {
            assert_eq!(bf16_truncate(x).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn truncation_not_rounding() {
        // bf16 keeps 7 mantissa bits; the tail 2^-8 + 2^-9 is above half an
        // ulp, so rounding would give 1 + 2^-6.
        let x = 1.0f32 + 2f32.powi(-7) + 2f32.powi(-8) + 2f32.powi(-9);
        assert_eq!(bf16_truncate(x), 1.0 + 2f32.powi(-7));
        assert_eq!(bf16_truncate(-x), -(1.0 + 2f32.powi(-7)));
    }

    #[test]
    fn quantizer_bits() {
        assert_eq!(Quantizer::Float32.bits_per_value(), 32);
        assert_eq!(Quantizer::BFloat16.bits_per_value(), 16);
        assert_eq!("bf16".parse::<Quantizer>().unwrap(), Quantizer::BFloat16);
        assert!("f16".parse::<Quantizer>().is_err());
    }
}
