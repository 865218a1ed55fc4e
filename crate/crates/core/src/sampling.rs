//! Seeded random sources and the primitive noise samplers every mechanism
//! builds on.
//!
//! All samplers are deterministic transforms of uniform draws from a caller
//! owned generator, so a fixed seed reproduces output bit for bit. The
//! transforms are the classical named ones (inverse CDF for Laplace and the
//! exponential, basic Box-Muller for the normal) rather than library
//! samplers, so golden values stay stable across platforms.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// The random source used throughout the crate.
pub type SeededRng = ChaCha20Rng;

/// Build a generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derive an independent generator from a master seed and a tag path.
///
/// Used by multi-cell runners (seed, epsilon, method) so that cells are
/// reproducible in isolation and independent of execution order. Mixing is
/// SplitMix64 over the master seed and each tag.
pub fn derive_rng(master: u64, tags: &[u64]) -> SeededRng {
    let mut state = splitmix64(master);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    ChaCha20Rng::seed_from_u64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in the open interval (0, 1).
///
/// Rejects exact zeros so that log transforms stay finite.
pub fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal draw via the basic Box-Muller transform (cosine branch).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = uniform_open01(rng);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Laplace(0, scale) draw via the inverse CDF transform.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    debug_assert!(scale >= 0.0);
    let u: f64 = rng.gen::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Exponential(scale) draw via the inverse CDF transform.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    -scale * uniform_open01(rng).ln()
}

/// Gamma draw with integer shape as a sum of independent exponentials.
pub fn gamma_integer_shape<R: Rng + ?Sized>(rng: &mut R, shape: u32, scale: f64) -> f64 {
    (0..shape).map(|_| exponential(rng, scale)).sum()
}

/// Uniform direction on the unit sphere in `dim` dimensions: normalized
/// vector of independent standard normals.
pub fn uniform_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_iter((0..dim).map(|_| standard_normal(rng)));
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v / norm;
        }
    }
}
