//! Seeded, splittable randomness.
//!
//! Every random draw in the crate comes from a [`Stream`] obtained from a
//! [`RandomSource`] by name. Two sources built from the same seed yield the
//! same streams, and differently named streams are independent ChaCha keys,
//! so trials and per-user randomizers can run on any thread without
//! changing results.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};

/// Well-known substream names.
pub mod names {
    pub const ROTATION_SIGNS: &str = "rotation-signs";
    pub const MECHANISM_NOISE: &str = "mechanism-noise";
    pub const DATA_GENERATION: &str = "data-generation";
    pub const TRIAL: &str = "trial";
    pub const USER: &str = "user";
    pub const SHUFFLER: &str = "shuffler";
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A master seed plus the switch that turns mechanism noise on or off.
///
/// Turning noise off is a test hook: every mechanism then adds exactly zero
/// noise, and derived public quantities (rank errors, noise-driven clip
/// offsets) take their noiseless limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    seed: u64,
    noise: bool,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, noise: true }
    }

    /// Same seed, with all mechanism noise disabled.
    pub fn noiseless(self) -> Self {
        Self { noise: false, ..self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_enabled(&self) -> bool {
        self.noise
    }

    /// Child source for `(label, index)`, e.g. `("trial", 17)` or `("user", i)`.
    pub fn derive(&self, label: &str, index: u64) -> RandomSource {
        let seed = splitmix64(self.seed ^ splitmix64(fnv1a(label.as_bytes()) ^ splitmix64(index)));
        RandomSource { seed, noise: self.noise }
    }

    /// Named stream rooted at this source.
    pub fn stream(&self, label: &str) -> Stream {
        let key = self.derive(label, u64::MAX).seed;
        Stream { rng: ChaCha12Rng::seed_from_u64(key), noise: self.noise }
    }
}

/// A deterministic random stream handed to exactly one consumer.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha12Rng,
    noise: bool,
}

impl Stream {
    pub fn noise_enabled(&self) -> bool {
        self.noise
    }

    /// One draw of `N(0, std²)`, or exactly zero when noise is disabled.
    pub fn gaussian_noise(&mut self, std: f64) -> f64 {
        if !self.noise || std == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * std
    }

    /// Two-sided geometric draw with `P(k) ∝ p^|k|`, or zero when noise is
    /// disabled. Requires `0 <= p < 1`.
    pub fn discrete_laplace(&mut self, p: f64) -> i64 {
        if !self.noise || p == 0.0 {
            return 0;
        }
        let g = Geometric::new(1.0 - p).expect("discrete Laplace parameter outside [0, 1)");
        g.sample(&mut self.rng) as i64 - g.sample(&mut self.rng) as i64
    }

    /// Uniform random sign, independent of the noise switch.
    pub fn sign(&mut self) -> i8 {
        if self.rng.next_u32() & 1 == 0 {
            1
        } else {
            -1
        }
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
