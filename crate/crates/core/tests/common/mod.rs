#![allow(dead_code)]

use nbody_tsp::ljf::LjfShape;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// L in [1e-2, 1e2], r_min/L in (1, 50] log-uniform, M in [1e-3, 1e3],
/// delta in [1e-2, 20].
pub fn random_shape(rng: &mut SplitMix64) -> LjfShape {
    let l = log_uniform(rng, 1e-2, 1e2);
    let ratio = log_uniform(rng, 1.0 + 1e-6, 50.0);
    let m = log_uniform(rng, 1e-3, 1e3);
    let delta = rng.random_range(1e-2..20.0);
    LjfShape::new(l, ratio * l, m, delta).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
