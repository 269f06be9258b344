//! Shared test support: an independent reference implementation of the
//! seeded shuffle pipeline. Deliberately separate from the library code so
//! the two can disagree; golden vectors were frozen from this oracle (and a
//! third, non-Rust implementation) before the library existed.

/// Reference SplitMix64, written from the published definition.
pub struct OracleSplitMix {
    state: u64,
}

impl OracleSplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let z = self.state;
        let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Reference Fisher-Yates: descending index, modulo draw.
pub fn oracle_permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = OracleSplitMix::new(seed);
    let mut a: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next() % (i as u64 + 1)) as usize;
        a.swap(i, j);
    }
    a
}

/// Reference message bits: words consumed MSB-first.
pub fn oracle_message_bits(seed: u64, nbits: usize) -> Vec<u8> {
    let mut rng = OracleSplitMix::new(seed);
    let mut bits = Vec::with_capacity(nbits);
    while bits.len() < nbits {
        let w = rng.next();
        for k in 0..64 {
            if bits.len() == nbits {
                break;
            }
            bits.push(((w >> (63 - k)) & 1) as u8);
        }
    }
    bits
}
