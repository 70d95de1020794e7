//! Scalar messages and their per-state message vectors.
//!
//! Message spaces can be astronomically large (`2^{nR}` with `nR` in the
//! hundreds), so indices are arbitrary-precision and 1-based.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Message = BigUint;

/// `[m_0, ..., m_U]`, each `m_u` in `[1..K_u]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageVector {
    pub components: Vec<Message>,
}

impl MessageVector {
    pub fn ones(num_states: usize) -> Self {
        MessageVector {
            components: vec![BigUint::one(); num_states],
        }
    }

    /// Mixed-radix split of `m` in `[1..prod K_u]`, state 0 least significant.
    pub fn from_scalar(m: &Message, counts: &[BigUint]) -> Result<Self> {
        let total: BigUint = counts.iter().product();
        if m.is_zero() || m > &total {
            return Err(Error::MessageOutOfRange(format!("{m} not in [1..{total}]")));
        }
        let mut rest = m - 1u32;
        let components = counts
            .iter()
            .map(|k| {
                let digit = &rest % k;
                rest /= k;
                digit + 1u32
            })
            .collect();
        Ok(MessageVector { components })
    }

    pub fn to_scalar(&self, counts: &[BigUint]) -> Result<Message> {
        if counts.len() != self.components.len() {
            return Err(Error::MessageOutOfRange("vector length does not match state count".into()));
        }
        let mut acc = BigUint::zero();
        for (m, k) in self.components.iter().zip(counts).rev() {
            if m.is_zero() || m > k {
                return Err(Error::MessageOutOfRange(format!("component {m} not in [1..{k}]")));
            }
            acc = acc * k + (m - 1u32);
        }
        Ok(acc + 1u32)
    }
}

/// `log2(n)` for `n >= 1`, accurate to f64 precision at any size.
pub fn log2_big(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 63 {
        return (n.to_u64().expect("fits in 63 bits").max(1) as f64).log2();
    }
    let shift = bits - 63;
    let top = (n >> shift).to_u64().expect("63 leading bits");
    (top as f64).log2() + shift as f64
}

/// Natural log of `n`.
pub fn ln_big(n: &BigUint) -> f64 {
    if n.bits() <= 63 {
        return (n.to_u64().unwrap() as f64).ln();
    }
    log2_big(n) * std::f64::consts::LN_2
}

/// `floor(2^x)` for `x >= 0`. Exact below 2^52; above that the result keeps
/// 53 significant bits and rounds down.
pub fn pow2_floor(x: f64) -> BigUint {
    debug_assert!(x >= 0.0 && x.is_finite());
    if x < 52.0 {
        return BigUint::from(x.exp2().floor() as u64);
    }
    let whole = x.floor();
    let mantissa = ((x - whole).exp2() * (1u64 << 52) as f64).floor() as u64;
    BigUint::from(mantissa) << (whole as u64 - 52)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn mixed_radix_small_exhaustive() {
        let counts = vec![big(3), big(1), big(4)];
        for m in 1..=12u64 {
            let v = MessageVector::from_scalar(&big(m), &counts).unwrap();
            assert!(v.components.iter().zip(&counts).all(|(c, k)| *c >= big(1) && c <= k));
            assert_eq!(v.to_scalar(&counts).unwrap(), big(m));
        }
        assert!(MessageVector::from_scalar(&big(13), &counts).is_err());
        assert!(MessageVector::from_scalar(&big(0), &counts).is_err());
    }

    #[test]
    fn pow2_values() {
        assert_eq!(pow2_floor(0.0), big(1));
        assert_eq!(pow2_floor(10.0), big(1024));
        assert_eq!(pow2_floor(1.5), big(2));
        assert_eq!(pow2_floor(60.0), big(1) << 60u32);
        assert!((log2_big(&pow2_floor(800.25)) - 800.25).abs() < 1e-9);
    }

    #[test]
    fn log2_matches_small() {
        assert_eq!(log2_big(&big(1)), 0.0);
        assert!((log2_big(&big(4096)) - 12.0).abs() < 1e-12);
        assert!((ln_big(&(big(1) << 100u32)) - 100.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }
}
