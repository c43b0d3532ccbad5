//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a [`Stream`] keyed by a user
//! seed plus a short path of integers (layer index, sample index, a domain
//! tag, ...). Streams are independent PCG generators, so the values a
//! computation sees depend only on its key and never on thread scheduling or
//! on how many other streams were consumed first. Entries inside a stream are
//! drawn in row-major order, so the entry index is the position in the stream.
//!
//! Gaussian variates use the inverse-CDF method, which keeps a one-to-one map
//! between uniforms and normals: scaling a standard draw by `σ` is the same as
//! drawing from `N(0, σ²)` with the same key.

use rand_core::Rng;
use rand_pcg::Pcg64;
use statrs::function::erf::erfc_inv;

/// Domain tags keep streams of different purposes apart.
pub mod tag {
    pub const WEIGHT_NOISE: u64 = 0x5745_4947_4854;
    pub const INIT: u64 = 0x494e_4954;
    pub const DATA: u64 = 0x4441_5441;
    pub const ANCHOR: u64 = 0x414e_4348;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_key(seed: u64, path: &[u64]) -> (u128, u128) {
    let mut a = splitmix64(seed);
    let mut b = splitmix64(seed ^ 0xD1B5_4A32_D192_ED03);
    for (i, &p) in path.iter().enumerate() {
        a = splitmix64(a ^ p.wrapping_add(i as u64));
        b = splitmix64(b.rotate_left(17) ^ p);
    }
    let state = (u128::from(a) << 64) | u128::from(splitmix64(a ^ b));
    let stream = (u128::from(b) << 64) | u128::from(splitmix64(b.wrapping_add(a)));
    (state, stream)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// A keyed random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: Pcg64,
}

impl Stream {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        let (state, stream) = mix_key(seed, path);
        Self {
            rng: Pcg64::new(state, stream),
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw by inversion.
    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let bound = bound as u64;
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = u128::from(self.rng.next_u64()) * u128::from(bound);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn normals(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.normal()).collect()
    }
}
