//! Exact receiver-deniable constructions, no learning involved.
//!
//! Two mechanisms compose here. A one-time-pad XOR layer encrypts each
//! message and admits key forgery: given a ciphertext `x` and any target
//! plaintext, `forge_key` produces a pad under which `x` decrypts to that
//! target, so a coerced receiver can surrender a convincing pad. A keyed
//! location split then carries both ciphertexts in the least-significant
//! bits of the cover: one shared permutation (derived from both position
//! seeds) assigns the first `t` slots to the real ciphertext and the next
//! `t` to the fake one. Secrecy lives in the pads, not the positions, so
//! disclosing one pad reveals exactly one message.

use crate::bitmsg::BitMessage;
use crate::imaging::ImageBuffer;
use crate::rng::{shuffle, SplitMix64};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassicError {
    #[error("bit lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cover holds {capacity} carrier bytes, need {needed} for two messages")]
    CapacityExceeded { capacity: usize, needed: usize },
    #[error("pad length {pad} does not match message length {msg}")]
    PadLength { pad: usize, msg: usize },
}

/// t-bit ciphertext; deliberately a distinct type from both plain messages
/// and cover pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    bits: Vec<u8>,
}

impl Ciphertext {
    pub fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { bits }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Keys for one deniable channel: a position seed and a one-time pad per
/// message. The two position seeds are public-ish (both are needed to
/// extract anything); each pad is private to its message.
#[derive(Clone, Debug)]
pub struct DeniableKeyPair {
    pub seed_real: u64,
    pub pad_real: BitMessage,
    pub seed_fake: u64,
    pub pad_fake: BitMessage,
}

/// Which slot range of the shared permutation to address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Real,
    Fake,
}

/// Bitwise one-time-pad encryption; its own inverse.
pub fn xor_encrypt(p: &BitMessage, pad: &BitMessage) -> Result<Ciphertext, ClassicError> {
    if p.len() != pad.len() {
        return Err(ClassicError::LengthMismatch(p.len(), pad.len()));
    }
    Ok(Ciphertext::from_bits(
        p.bits()
            .iter()
            .zip(pad.bits())
            .map(|(a, b)| a ^ b)
            .collect(),
    ))
}

pub fn xor_decrypt(x: &Ciphertext, pad: &BitMessage) -> Result<BitMessage, ClassicError> {
    if x.len() != pad.len() {
        return Err(ClassicError::LengthMismatch(x.len(), pad.len()));
    }
    let bits = x
        .bits()
        .iter()
        .zip(pad.bits())
        .map(|(a, b)| a ^ b)
        .collect();
    Ok(BitMessage::from_bits(bits).expect("xor of valid bits is valid"))
}

/// Produce the pad under which `x` decrypts to `fake_p`. This is the
/// deniability core: `xor_decrypt(x, forge_key(x, fake_p)) == fake_p`.
pub fn forge_key(x: &Ciphertext, fake_p: &BitMessage) -> Result<BitMessage, ClassicError> {
    if x.len() != fake_p.len() {
        return Err(ClassicError::LengthMismatch(x.len(), fake_p.len()));
    }
    let bits = x
        .bits()
        .iter()
        .zip(fake_p.bits())
        .map(|(a, b)| a ^ b)
        .collect();
    Ok(BitMessage::from_bits(bits).expect("xor of valid bits is valid"))
}

/// Deterministic permutation of `[0, n)`: Fisher-Yates driven by
/// SplitMix64(seed). Cross-language reproducible; see [`crate::rng`].
pub fn permute_locations(seed: u64, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut SplitMix64::new(seed), &mut perm);
    perm
}

fn carrier_slots(keys_xor_seed: u64, n: usize, t: usize) -> (Vec<usize>, Vec<usize>) {
    let perm = permute_locations(keys_xor_seed, n);
    (perm[..t].to_vec(), perm[t..2 * t].to_vec())
}

/// Embed both messages: encrypt each with its pad, then write the real
/// ciphertext into the first `t` permuted LSB slots and the fake one into
/// the next `t`. Every other byte is untouched.
pub fn classic_embed(
    cover: &ImageBuffer,
    m_real: &BitMessage,
    m_fake: &BitMessage,
    keys: &DeniableKeyPair,
) -> Result<ImageBuffer, ClassicError> {
    let t = m_real.len();
    if m_fake.len() != t {
        return Err(ClassicError::LengthMismatch(t, m_fake.len()));
    }
    if keys.pad_real.len() != t {
        return Err(ClassicError::PadLength {
            pad: keys.pad_real.len(),
            msg: t,
        });
    }
    if keys.pad_fake.len() != t {
        return Err(ClassicError::PadLength {
            pad: keys.pad_fake.len(),
            msg: t,
        });
    }
    let n = cover.data.len();
    if 2 * t > n {
        return Err(ClassicError::CapacityExceeded {
            capacity: n,
            needed: 2 * t,
        });
    }

    let x_real = xor_encrypt(m_real, &keys.pad_real)?;
    let x_fake = xor_encrypt(m_fake, &keys.pad_fake)?;
    let (slots_real, slots_fake) = carrier_slots(keys.seed_real ^ keys.seed_fake, n, t);

    let mut stego = cover.clone();
    for (&pos, &bit) in slots_real.iter().zip(x_real.bits()) {
        stego.data[pos] = (stego.data[pos] & 0xFE) | bit;
    }
    for (&pos, &bit) in slots_fake.iter().zip(x_fake.bits()) {
        stego.data[pos] = (stego.data[pos] & 0xFE) | bit;
    }
    Ok(stego)
}

/// Read the LSBs of the designated slot range and strip the supplied pad.
/// Position recovery needs both seeds; the pad decides which message (or,
/// with a forged pad, which claimed message) comes out.
pub fn classic_extract(
    stego: &ImageBuffer,
    seed_real: u64,
    seed_fake: u64,
    pad: &BitMessage,
    which: Slot,
) -> Result<BitMessage, ClassicError> {
    let x = read_ciphertext(stego, seed_real, seed_fake, which, pad.len())?;
    xor_decrypt(&x, pad)
}

/// The raw ciphertext occupying a slot range, before any pad is applied.
/// `forge-key` uses this to fabricate a pad for an arbitrary claimed
/// message.
pub fn read_ciphertext(
    stego: &ImageBuffer,
    seed_real: u64,
    seed_fake: u64,
    which: Slot,
    t: usize,
) -> Result<Ciphertext, ClassicError> {
    let n = stego.data.len();
    if 2 * t > n {
        return Err(ClassicError::CapacityExceeded {
            capacity: n,
            needed: 2 * t,
        });
    }
    let (slots_real, slots_fake) = carrier_slots(seed_real ^ seed_fake, n, t);
    let slots = match which {
        Slot::Real => slots_real,
        Slot::Fake => slots_fake,
    };
    Ok(Ciphertext::from_bits(
        slots.iter().map(|&pos| stego.data[pos] & 1).collect(),
    ))
}
