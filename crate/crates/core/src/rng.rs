//! Counter-based deterministic RNG for reproducible sampling.
//!
//! Every sample index gets its own stream keyed by `(seed, index)`, so a
//! Monte Carlo run produces identical numbers whether samples are drawn
//! serially or in parallel batches. Based on the splitmix64 finalizer;
//! not cryptographic.

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

#[inline(always)]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic RNG stream identified by a seed and a stream index.
#[derive(Clone, Debug)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    /// Stream for one sample: `(seed, index)` fully determines the sequence.
    pub fn for_sample(seed: u64, index: u64) -> Self {
        let key = mix(seed ^ mix(index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)));
        Self { state: key }
    }

    /// Derive a child seed, e.g. one seed per ladder stage.
    pub fn derive_seed(seed: u64, tag: u64) -> u64 {
        mix(seed ^ mix(tag.wrapping_add(GOLDEN)))
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in [0, 1).
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline(always)]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }
}
