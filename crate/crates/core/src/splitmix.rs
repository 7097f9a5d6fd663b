//! SplitMix64 generator. Every sampled grid is a function of a single `u64`
//! seed through this stream, so golden files stay portable across languages.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, bound)` from the top 53 bits: `floor((u >> 11) * bound / 2^53)`.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        let top = u128::from(self.next_u64() >> 11);
        ((top * u128::from(bound)) >> 53) as u64
    }
}

/// The SplitMix64 output finalizer, usable as a standalone 64-bit mixer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
