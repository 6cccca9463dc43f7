//! Seeded pseudo-random generator used by every sampling operation.
//!
//! The algorithm is fixed so that splits and draws are reproducible across
//! runs and across reimplementations: the state is initialized by one
//! splitmix64 step of the seed, then advanced with xorshift64* (shifts
//! 12/25/27, multiplier `0x2545_F491_4F6C_DD1D`). Bounded draws use
//! rejection sampling, shuffles are Fisher-Yates from the top.

/// Deterministic 64-bit xorshift* generator.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const XORSHIFT_MULT: u64 = 0x2545_F491_4F6C_DD1D;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    /// Seeds the generator. Any seed is valid, including zero.
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            // xorshift has an all-zero fixed point
            state = SPLITMIX_GAMMA;
        }
        SeededRng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(XORSHIFT_MULT)
    }

    /// Uniform draw in `[0, bound)` via rejection sampling.
    ///
    /// Panics if `bound` is zero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Uniform float in `[0, 1)` built from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        if items.len() < 2 {
            return;
        }
        for i in (1..items.len()).rev() {
            let j = self.next_below((i + 1) as u64) as usize;
            items.swap(i, j);
        }
    }

    /// Draws `count` distinct indices from `0..len` without replacement
    /// (partial Fisher-Yates; the draw order is part of the contract).
    pub fn sample_indices(&mut self, len: usize, count: usize) -> Vec<usize> {
        let count = count.min(len);
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..count {
            let j = i + self.next_below((len - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(count);
        idx
    }
}

/// Derives a per-stage sub-seed from the global seed, by hashing the stage
/// name (FNV-1a) and mixing the result with the seed through splitmix64.
pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;
    let mut h = FNV_OFFSET;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h ^ global_seed)
}
