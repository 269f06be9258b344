//! Fixed-length binary messages and their hex wire format.
//!
//! A message is an ordered sequence of bits, MSB-first everywhere: the first
//! bit of the message is the most significant bit of the first hex nibble.
//! Lengths that do not fill the final nibble are zero-padded, and those pad
//! bits are required to be zero when parsing.

use crate::rng::SplitMix64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitMsgError {
    #[error("message must have at least one bit")]
    Empty,
    #[error("hex text has length {got}, expected {expected} for {nbits} bits")]
    HexLength {
        got: usize,
        expected: usize,
        nbits: usize,
    },
    #[error("invalid hex character {0:?}")]
    InvalidHexChar(char),
    #[error("pad bits beyond the message length must be zero")]
    NonzeroPad,
    #[error("bit value {0} is not 0 or 1")]
    InvalidBit(u8),
    #[error("message lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// A secret (or fake) message of `t` bits, each 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMessage {
    bits: Vec<u8>,
}

impl BitMessage {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self, BitMsgError> {
        if bits.is_empty() {
            return Err(BitMsgError::Empty);
        }
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(BitMsgError::InvalidBit(b));
        }
        Ok(Self { bits })
    }

    /// Parse `nbits` bits from hex text of length `ceil(nbits/4)`.
    pub fn parse_hex(hex: &str, nbits: usize) -> Result<Self, BitMsgError> {
        if nbits == 0 {
            return Err(BitMsgError::Empty);
        }
        let expected = nbits.div_ceil(4);
        let chars: Vec<char> = hex.chars().collect();
        if chars.len() != expected {
            return Err(BitMsgError::HexLength {
                got: chars.len(),
                expected,
                nbits,
            });
        }
        let mut bits = Vec::with_capacity(expected * 4);
        for c in chars {
            let v = c.to_digit(16).ok_or(BitMsgError::InvalidHexChar(c))? as u8;
            for k in (0..4).rev() {
                bits.push((v >> k) & 1);
            }
        }
        if bits[nbits..].iter().any(|&b| b != 0) {
            return Err(BitMsgError::NonzeroPad);
        }
        bits.truncate(nbits);
        Ok(Self { bits })
    }

    /// Inverse of [`parse_hex`](Self::parse_hex): MSB-first packing, zero pad
    /// to the nibble boundary, uppercase digits.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.bits.len().div_ceil(4));
        for nibble in self.bits.chunks(4) {
            let mut v = 0u8;
            for (k, &b) in nibble.iter().enumerate() {
                v |= b << (3 - k);
            }
            out.push(char::from_digit(v as u32, 16).unwrap().to_ascii_uppercase());
        }
        out
    }

    /// Deterministic random message: SplitMix64 words consumed MSB-first.
    pub fn random(seed: u64, nbits: usize) -> Self {
        Self::random_from(&mut SplitMix64::new(seed), nbits)
    }

    /// Same bit-extraction rule, drawing from a caller-owned stream.
    pub fn random_from(rng: &mut SplitMix64, nbits: usize) -> Self {
        assert!(nbits >= 1, "message must have at least one bit");
        let mut bits = Vec::with_capacity(nbits);
        'outer: loop {
            let w = rng.next_u64();
            for k in 0..64 {
                bits.push(((w >> (63 - k)) & 1) as u8);
                if bits.len() == nbits {
                    break 'outer;
                }
            }
        }
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }
}

/// Fraction of positions where `a` and `b` disagree.
pub fn bit_error(a: &BitMessage, b: &BitMessage) -> Result<f64, BitMsgError> {
    if a.len() != b.len() {
        return Err(BitMsgError::LengthMismatch(a.len(), b.len()));
    }
    let diff = a
        .bits
        .iter()
        .zip(&b.bits)
        .filter(|(x, y)| x != y)
        .count();
    Ok(diff as f64 / a.len() as f64)
}
