//! Random dimensions, parameters and samples.

use mmoe::gaussian::{GaussianDims, GaussianParams};
use mmoe::logistic::{LogisticDims, LogisticParams};
use mmoe::Sample;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).expect("valid range").sample(rng)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, lo, hi)).collect()
}

/// `K ∈ 1..=k_max`, `P, Q ∈ {1, 2}`, `D_W, D_V ∈ {0, 1}`.
pub fn gaussian_dims(rng: &mut impl Rng, k_max: usize) -> GaussianDims {
    GaussianDims {
        k: rng.random_range(1..=k_max),
        p: rng.random_range(1..=2),
        q: rng.random_range(1..=2),
        dw: rng.random_range(0..=1),
        dv: rng.random_range(0..=1),
    }
}

pub fn gaussian_params(rng: &mut impl Rng, dims: GaussianDims) -> GaussianParams {
    GaussianParams {
        dims,
        omega: uniform_vec(rng, dims.omega_len(), -3.0, 3.0),
        upsilon: uniform_vec(rng, dims.upsilon_len(), -2.0, 2.0),
        sigma2: uniform_vec(rng, dims.sigma2_len(), 0.2, 3.0),
    }
}

pub fn gaussian_sample(rng: &mut impl Rng, dims: GaussianDims) -> Sample {
    Sample::continuous(uniform_vec(rng, dims.p, -2.0, 2.0), uniform_vec(rng, dims.q, -4.0, 4.0))
}

/// `K ∈ 1..=k_max`, `M ∈ {2, 3}`, `P ∈ {1, 2}`, `D_W, D_V ∈ {0, 1}`.
pub fn logistic_dims(rng: &mut impl Rng, k_max: usize) -> LogisticDims {
    LogisticDims {
        k: rng.random_range(1..=k_max),
        m: rng.random_range(2..=3),
        p: rng.random_range(1..=2),
        dw: rng.random_range(0..=1),
        dv: rng.random_range(0..=1),
    }
}

pub fn logistic_params(rng: &mut impl Rng, dims: LogisticDims) -> LogisticParams {
    LogisticParams {
        dims,
        omega: uniform_vec(rng, dims.omega_len(), -3.0, 3.0),
        upsilon: uniform_vec(rng, dims.upsilon_len(), -3.0, 3.0),
    }
}

pub fn logistic_sample(rng: &mut impl Rng, dims: LogisticDims) -> Sample {
    Sample::class(uniform_vec(rng, dims.p, -2.0, 2.0), rng.random_range(1..=dims.m))
}
