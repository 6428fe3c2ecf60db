//! Seeded randomness. Every random draw in the crate goes through
//! [`Prng`], seeded from a single `u64`.

use rand::Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::StandardNormal;

/// xoshiro256++
pub type Prng = rand_xoshiro::Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Independent stream for item `index` of a run seeded with `seed`.
pub fn derived(seed: u64, index: u64) -> Prng {
    Prng::seed_from_u64(seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform on `[0, 1)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

pub fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw from the L2 ball of the given radius in `dim` dimensions.
pub fn in_ball<R: RngCore + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> alloc::vec::Vec<f64> {
    let mut v: alloc::vec::Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let n = crate::math::norm(&v);
    let r = radius * libm::pow(uniform(rng), 1.0 / dim as f64);
    let scale = if n > 0.0 { r / n } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= scale);
    v
}
