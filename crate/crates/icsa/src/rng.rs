//! Seeded, stream-addressable randomness.
//!
//! Every stochastic operation in the crate takes an [`RngStream`] so that a
//! (seed, stream id) pair fully determines its output. Streams with distinct
//! ids drawn from the same seed are independent ChaCha streams.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh stream derived from the same seed with a different id.
    pub fn substream(&self, id: u64) -> Self {
        Self::new(self.seed, mix(self.stream, id))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// SplitMix64-style mixer; keeps derived stream ids well separated.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b)
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream id for a simulation cell.
pub fn cell_stream(scenario: u8, n: usize, p: usize, kappa: f64, method: usize, rep: usize) -> u64 {
    let mut h = mix(scenario as u64, n as u64);
    h = mix(h, p as u64);
    h = mix(h, kappa.to_bits());
    h = mix(h, method as u64);
    mix(h, rep as u64)
}
