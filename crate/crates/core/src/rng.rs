//! Seedable, platform-independent random streams.
//!
//! Every generator draws from ChaCha8 keyed by `(seed, tag)` with a separate
//! stream per item index, so per-point generation is independent of the
//! order (and thread) in which points are produced.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent child seed, e.g. one per trial or per noisy copy.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k.wrapping_add(0x5EED)))
}

/// Stream tags keep unrelated consumers of one seed apart.
pub(crate) mod tags {
    pub const FIRST_CENTER: u64 = 1;
    pub const LATENT_A: u64 = 2;
    pub const LATENT_B: u64 = 3;
    pub const COEFFS_A: u64 = 4;
    pub const COEFFS_B: u64 = 5;
    pub const WEIGHTS_A: u64 = 6;
    pub const WEIGHTS_B: u64 = 7;
    pub const NOISE: u64 = 8;
    pub const HYPERCUBE: u64 = 9;
    pub const ROTATION: u64 = 10;
}

pub struct StreamRng {
    inner: ChaCha8Rng,
    spare_gaussian: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64, tag: u64, stream: u64) -> Self {
        let key = splitmix64(seed ^ splitmix64(tag));
        let mut inner = ChaCha8Rng::seed_from_u64(key);
        inner.set_stream(stream);
        Self {
            inner,
            spare_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_positive(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `0..n` (multiply-shift, `n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw, Marsaglia polar method; the second value of
    /// each accepted pair is returned on the following call.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare_gaussian = Some(v * factor);
                return u * factor;
            }
        }
    }
}
