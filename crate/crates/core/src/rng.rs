//! Deterministic per-realization random streams.
//!
//! Each realization gets its own ChaCha8 stream: the key is expanded from
//! the master seed with SplitMix64 and the realization index selects the
//! ChaCha stream id. ChaCha is counter based, so stream `i` never depends on
//! how many numbers any other stream consumed or on which thread ran it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RealizationStream {
    rng: ChaCha8Rng,
    index: u64,
    master_seed: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RealizationStream {
    pub fn new(master_seed: u64, index: u64) -> Self {
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        Self { rng, index, master_seed }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Compact identifier of this stream, for error reports.
    pub fn seed_tag(&self) -> u64 {
        let mut s = self.master_seed ^ self.index.rotate_left(32);
        splitmix64(&mut s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` from the 53 high bits of one 64-bit draw.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-half_width, half_width]`.
    pub fn symmetric(&mut self, half_width: f64) -> f64 {
        half_width * (2.0 * self.uniform() - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_of_order() {
        let mut a = RealizationStream::new(7, 3);
        let first: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        // consume another stream in between
        let mut other = RealizationStream::new(7, 2);
        for _ in 0..100 {
            other.next_u64();
        }
        let mut b = RealizationStream::new(7, 3);
        let second: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(first, second);
        assert_ne!(first[0], RealizationStream::new(7, 4).next_u64());
        assert_ne!(first[0], RealizationStream::new(8, 3).next_u64());
    }

    #[test]
    fn uniform_range() {
        let mut s = RealizationStream::new(1, 0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
