//! Seeded, splittable random number generation.
//!
//! A SplitMix64 core: the state advances by a fixed odd increment and every
//! output is a finalizer hash of the state, so the stream is effectively
//! counter-based and bit-identical on every platform. Derived streams
//! (`derive`, `split`) give independent generators for parallel work that
//! must agree with sequential runs.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator with an explicit 64-bit seed.
///
/// A single instance is a value type and must not be shared mutably across
/// threads; derive independent streams instead.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: mix64(seed ^ GOLDEN_GAMMA), spare_normal: None }
    }

    /// Pure stream derivation: the generator for `(seed, tags...)` is a
    /// function of its arguments only. Used to key per-step and per-shard
    /// streams without threading generator state around.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut s = mix64(seed ^ GOLDEN_GAMMA);
        for &t in tags {
            s = mix64(s ^ t.wrapping_mul(GOLDEN_GAMMA) ^ 0xA0761D6478BD642F);
        }
        Self { state: s, spare_normal: None }
    }

    /// Splits off an independent child stream, advancing this generator.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one spare cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// Standard normal resampled until `|z| <= cut`.
    pub fn truncated_normal(&mut self, cut: f64) -> f64 {
        loop {
            let z = self.normal();
            if z.abs() <= cut {
                return z;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)`, in selection order.
    pub fn distinct_indices(&mut self, n: usize, k: usize) -> alloc::vec::Vec<usize> {
        assert!(k <= n);
        // Partial Fisher-Yates over a scratch index table.
        let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
