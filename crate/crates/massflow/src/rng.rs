//! Deterministic, splittable random streams.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by
//! `(master_seed, replicate_id, substream_id)`. The triple goes straight into
//! the 256-bit cipher key, so distinct keys give independent streams and the
//! same key reproduces the same sequence regardless of scheduling or thread
//! count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replicate_id: u64,
    pub substream_id: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, replicate_id: u64, substream_id: u64) -> Self {
        Self {
            master_seed,
            replicate_id,
            substream_id,
        }
    }
}

/// A keyed stream of standard normal deviates (and auxiliary uniforms).
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(key: StreamKey) -> Self {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&key.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&key.replicate_id.to_le_bytes());
        seed[16..24].copy_from_slice(&key.substream_id.to_le_bytes());
        seed[24..32].copy_from_slice(&0x6d61_7373_666c_6f77_u64.to_le_bytes());
        Self {
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Next standard normal deviate.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Next uniform deviate in `[0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_gaussian();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_reproduces_sequence() {
        let key = StreamKey::new(42, 7, 1);
        let mut a = GaussianStream::new(key);
        let mut b = GaussianStream::new(key);
        for _ in 0..1000 {
            assert_eq!(a.next_gaussian().to_bits(), b.next_gaussian().to_bits());
        }
    }

    #[test]
    fn distinct_replicates_are_uncorrelated() {
        // Empirical correlation of 1e5-deviate blocks from adjacent
        // replicate ids; for independent streams the CI is about
        // +/- 2/sqrt(n) ~ 0.006, well within the +/-0.02 budget.
        let n = 100_000;
        let mut a = GaussianStream::new(StreamKey::new(9, 0, 0));
        let mut b = GaussianStream::new(StreamKey::new(9, 1, 0));
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.next_gaussian();
            let y = b.next_gaussian();
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx.sqrt() * syy.sqrt());
        assert!(corr.abs() < 0.02, "corr = {corr}");
    }

    #[test]
    fn sample_mean_obeys_clt() {
        // Mean of 1e6 deviates: 3.9 sigma band is +/- 0.0039.
        let mut s = GaussianStream::new(StreamKey::new(123, 0, 0));
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += s.next_gaussian();
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 0.004, "mean = {mean}");
    }

    #[test]
    fn substreams_differ() {
        let mut a = GaussianStream::new(StreamKey::new(5, 3, 0));
        let mut b = GaussianStream::new(StreamKey::new(5, 3, 1));
        let same = (0..100)
            .filter(|_| a.next_gaussian().to_bits() == b.next_gaussian().to_bits())
            .count();
        assert_eq!(same, 0);
    }
}
