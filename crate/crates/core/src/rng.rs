//! Seeded randomness shared by every stochastic component.
//!
//! All generators are PCG-64 seeded from a `u64`, so runs are reproducible
//! across platforms. Normal deviates use the Box–Muller transform rather than
//! a library distribution to keep the stream fully specified here.

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

pub type SeededRng = Pcg64;

pub fn seeded(seed: u64) -> SeededRng {
    Pcg64::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (epoch, record, amplitude).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn uniform(rng: &mut SeededRng) -> f64 {
    rng.random::<f64>()
}

pub fn uniform_range(rng: &mut SeededRng, low: f64, high: f64) -> f64 {
    low + (high - low) * rng.random::<f64>()
}

/// Fills `out` with i.i.d. standard normal samples (Box–Muller, both branches used).
pub fn fill_standard_normal(rng: &mut SeededRng, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = box_muller(rng).0;
    }
}

pub fn standard_normal(rng: &mut SeededRng) -> f64 {
    box_muller(rng).0
}

fn box_muller(rng: &mut SeededRng) -> (f64, f64) {
    // u1 in (0, 1] so the log is finite
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let radius = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (radius * theta.cos(), radius * theta.sin())
}
