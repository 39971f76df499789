//! Counter-based random streams for reproducible parallel ensembles.
//!
//! The k-th variate of stream `s` under master seed `m` is
//! `mix64(key(m, s) + k * GOLDEN)` with `key(m, s) = mix64(mix64(m) + s *
//! GOLDEN)` and `mix64` the SplitMix64 finalizer. Every draw is a pure
//! function of `(m, s, k)`: streams can be created in any order, on any
//! worker, and always yield the same sequence.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A keyed counter generator. Cloning forks an identical replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Stream `stream` of master seed `master_seed`.
    pub fn for_stream(master_seed: u64, stream: u64) -> CounterRng {
        CounterRng {
            key: mix64(mix64(master_seed).wrapping_add(stream.wrapping_mul(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        out
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Draws consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}
