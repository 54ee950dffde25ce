//! Seeded synthetic truths and samplers.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianDims, GaussianParams};
use crate::logistic::{self, LogisticDims, LogisticParams};
use crate::sample::{Dataset, Sample};

/// Covariate distribution for generated samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// Independent Uniform(−1, 1) coordinates.
    #[default]
    Uniform,
    /// Independent standard normal coordinates.
    Normal,
}

impl CovariateLaw {
    fn draw(&self, rng: &mut impl Rng, p: usize) -> Vec<f64> {
        match self {
            CovariateLaw::Uniform => {
                let u = Uniform::new(-1.0, 1.0).expect("valid range");
                (0..p).map(|_| u.sample(rng)).collect()
            }
            CovariateLaw::Normal => (0..p).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }
}

/// Two experts over two covariates: the gate puts weight 8 on `x₁`, and the
/// expert means are `∓2.5·x₁` with unit variances.
pub fn lowdim_truth() -> GaussianParams {
    let dims = GaussianDims { k: 2, p: 2, q: 1, dw: 1, dv: 1 };
    GaussianParams {
        dims,
        // gate block of expert 1 over x̂ = [1, x₁, 1, x₂]
        omega: vec![0.0, 8.0, 0.0, 0.0],
        // rows over r = [1, 1, x₁, x₂]
        upsilon: vec![0.0, 0.0, -2.5, 0.0, 0.0, 0.0, 2.5, 0.0],
        sigma2: vec![1.0, 1.0],
    }
}

/// Two experts over two covariates with nearly separable binary responses.
///
/// The gate puts weight 20 on `x₁`; expert 1 scores class 1 with
/// `20(x₂ − x₁)` and expert 2 with `20(x₂ + x₁)`, so the Bayes boundary is
/// `x₂ = |x₁|`.
pub fn logistic_desk_truth() -> LogisticParams {
    let dims = LogisticDims { k: 2, m: 2, p: 2, dw: 1, dv: 1 };
    LogisticParams {
        dims,
        omega: vec![0.0, 20.0, 0.0, 0.0],
        // class-1 coefficients over u = [1, 1, x₁, x₂]
        upsilon: vec![0.0, 0.0, -20.0, 20.0, 0.0, 0.0, 20.0, 20.0],
    }
}

fn seeded_uniform(seed: u64, lo: f64, hi: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Uniform::new(lo, hi).expect("valid range").sample(&mut rng)
}

/// Randomized higher-dimensional truth.
///
/// Each variance `σ²_{k,q}` is drawn from Uniform(0.5, 1.5) under seed
/// `s + kQ + q`; each expert coefficient on the first covariate is drawn
/// from Uniform(1.5, 5) under seed `2s + k(D_V+1)QP + dQP + qP + p` and
/// negated for experts after the first when `d > 0`; all other expert
/// coefficients are zero. The gate is zero except for weight 8 on `x₁¹`
/// in expert 1's block (absent when `D_W = 0`). Indices `k, q, p` count
/// from 1 in the seed formulas and `d` from 0.
pub fn highdim_truth(k: usize, dv: usize, dw: usize, p: usize, q: usize, seed: u64) -> Result<GaussianParams> {
    let dims = GaussianDims::new(k, p, q, dw, dv)?;
    let mut sigma2 = vec![0.0; dims.sigma2_len()];
    for kk in 1..=k {
        for qq in 1..=q {
            let s = seed.wrapping_add((kk * q + qq) as u64);
            sigma2[(kk - 1) * q + (qq - 1)] = seeded_uniform(s, 0.5, 1.5);
        }
    }
    let r = dims.expert_features();
    let mut upsilon = vec![0.0; dims.upsilon_len()];
    for kk in 1..=k {
        for d in 0..=dv {
            for qq in 1..=q {
                for pp in 1..=p {
                    if pp != 1 {
                        continue;
                    }
                    let offset = kk * (dv + 1) * q * p + d * q * p + qq * p + pp;
                    let s = seed.wrapping_mul(2).wrapping_add(offset as u64);
                    let mut v = seeded_uniform(s, 1.5, 5.0);
                    if kk > 1 && d > 0 {
                        v = -v;
                    }
                    let row = ((kk - 1) * q + (qq - 1)) * r;
                    upsilon[row + d * p + (pp - 1)] = v;
                }
            }
        }
    }
    let mut omega = vec![0.0; dims.omega_len()];
    if k > 1 && dw >= 1 {
        omega[1] = 8.0;
    }
    GaussianParams::new(dims, omega, upsilon, sigma2)
}

fn categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws `n` samples with their latent expert labels (1-based).
pub fn sample_gaussian(theta: &GaussianParams, n: usize, seed: u64, law: CovariateLaw) -> Result<Dataset> {
    theta.validate()?;
    if n == 0 {
        return Err(Error::arg("sample count must be positive"));
    }
    let d = theta.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = law.draw(&mut rng, d.p);
        let g = gaussian::gating_probs(theta, &x)?;
        let k = categorical(&mut rng, &g);
        let mu = theta.expert_means(&x)?;
        let y = (0..d.q)
            .map(|q| {
                let sd = theta.sigma2[k * d.q + q].sqrt();
                let noise: f64 = Normal::new(0.0, sd).expect("positive sd").sample(&mut rng);
                mu[k * d.q + q] + noise
            })
            .collect();
        samples.push(Sample::continuous(x, y));
        labels.push(k + 1);
    }
    Ok(Dataset { samples, labels: Some(labels) })
}

/// Draws `n` classification samples with latent expert labels.
pub fn sample_logistic(theta: &LogisticParams, n: usize, seed: u64, law: CovariateLaw) -> Result<Dataset> {
    theta.validate()?;
    if n == 0 {
        return Err(Error::arg("sample count must be positive"));
    }
    let d = theta.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = law.draw(&mut rng, d.p);
        let g = logistic::gating_probs(theta, &x)?;
        let k = categorical(&mut rng, &g);
        let e = logistic::expert_probs(theta.expert_coef(k), &x, &d)?;
        let y = categorical(&mut rng, &e) + 1;
        samples.push(Sample::class(x, y));
        labels.push(k + 1);
    }
    Ok(Dataset { samples, labels: Some(labels) })
}

/// Monte-Carlo accuracy of the Bayes classifier under `theta`.
pub fn bayes_accuracy(theta: &LogisticParams, n: usize, seed: u64, law: CovariateLaw) -> Result<f64> {
    let data = sample_logistic(theta, n, seed, law)?;
    let mut hits = 0usize;
    for z in &data.samples {
        if logistic::predict_class(theta, &z.x)? == z.class_y()? {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}
