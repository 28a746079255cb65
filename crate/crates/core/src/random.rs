//! Seeded, counter-based random streams.
//!
//! Every stochastic construction in the crate (sketch matrices, Monte-Carlo
//! probes, synthetic data, splits) draws from an [`RngState`]. A state is
//! identified by `(seed, stream_id)`; the underlying generator is ChaCha8,
//! which is counter based, so two states with different stream ids never
//! share keystream and a state can be repositioned without replaying it.
//!
//! Normal variates use the Marsaglia polar method with the pure-Rust `libm`
//! logarithm, so sequences are bit-identical across platforms. Variates are
//! produced in pairs; when an odd count is requested the spare is dropped.

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Well-known stream ids, one per independent consumer.
pub mod streams {
    pub const SKETCH_SIGNS: u64 = 0x01;
    pub const SKETCH_ROWS: u64 = 0x02;
    pub const SKETCH_DENSE: u64 = 0x03;
    pub const WIDTH_PROBE: u64 = 0x10;
    pub const WIDTH_SKETCH: u64 = 0x11;
    pub const DATA_FEATURES: u64 = 0x20;
    pub const DATA_WEIGHTS: u64 = 0x21;
    pub const DATA_NOISE: u64 = 0x22;
    pub const DATA_LABELS: u64 = 0x23;
    pub const DATA_PARAMS: u64 = 0x24;
    pub const BAYES_ESTIMATE: u64 = 0x25;
    pub const SPLIT: u64 = 0x30;
}

/// Mixes a base seed with an index (SplitMix64 finalizer) to give each
/// replicate of a Monte-Carlo loop its own seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Reposition a stream at an absolute counter (in 32-bit words).
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        let mut state = Self::new(seed, stream_id);
        state.rng.set_word_pos(counter as u128);
        state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.rng.get_word_pos() as u64
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.fill_gaussian(&mut out);
        out
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.polar_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.polar_pair().0;
        }
    }

    fn polar_pair(&mut self) -> (f64, f64) {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * libm::log(s) / s).sqrt();
                return (u * factor, v * factor);
            }
        }
    }

    /// `count` independent uniform signs, 64 per generator word.
    pub fn rademacher(&mut self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let bits = self.rng.next_u64();
            let take = (count - out.len()).min(64);
            out.extend((0..take).map(|b| if (bits >> b) & 1 == 1 { 1.0 } else { -1.0 }));
        }
        out
    }

    /// A uniformly random `m`-subset of `0..n`, sorted ascending.
    pub fn sample_without_replacement(&mut self, m: usize, n: usize) -> Result<Vec<usize>> {
        if m > n {
            return Err(Error::SubsetTooLarge { m, n });
        }
        let mut picked = index::sample(&mut self.rng, n, m).into_vec();
        picked.sort_unstable();
        Ok(picked)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Unbiased integer in `0..bound` (Lemire's method with rejection).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        loop {
            let wide = (self.rng.next_u64() as u128) * (bound as u128);
            let low = wide as u64;
            if low >= bound.wrapping_neg() % bound {
                return (wide >> 64) as u64;
            }
        }
    }
}
