//! Seeded randomness for the whole crate.
//!
//! Everything random in here flows from [`SplitMix64`]: message bits, shuffle
//! permutations, weight initialization, procedural covers. The generator is
//! fixed so that seeded runs reproduce bit-exactly, including from other
//! language implementations of the same stream.

/// SplitMix64 as published by Steele, Lea and Flood; `next_u64` for seed 0
/// starts `0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, ...`.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, bound)` by modulo reduction. The slight modulo bias is
    /// irrelevant at the sizes used here; what matters is that shuffles replay
    /// identically in any implementation of the same stream.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    /// Uniform in `[0, 1)` with 24 bits of mantissa.
    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / (1u32 << 24) as f32
    }

    /// Uniform in `[0, 1)` with 53 bits of mantissa.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Derive an independent child stream.
    pub fn fork(&mut self) -> SplitMix64 {
        SplitMix64::new(self.next_u64())
    }
}

/// In-place Fisher-Yates shuffle: for `i` from `len-1` down to `1`, swap
/// `slice[i]` with `slice[j]`, `j = next_u64() mod (i+1)`.
pub fn shuffle<T>(rng: &mut SplitMix64, slice: &mut [T]) {
    for i in (1..slice.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        slice.swap(i, j);
    }
}
