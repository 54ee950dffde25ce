//! Randomized measurements shared by the unit-level suites and the acceptance gate.

use mmoe::gaussian::{self, GaussianDims, GaussianParams};
use mmoe::linalg::{self, CurvatureBoundSpec, DEFAULT_EPSILON_STAR};
use mmoe::logistic::{self, LogisticDims, LogisticParams};
use mmoe::Sample;
use nalgebra::DMatrix;
use rand::Rng;

use crate::oracle;
use crate::random::{self, uniform, uniform_vec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizationReport {
    pub draws: usize,
    /// Smallest `surrogate − nll` over the draws.
    pub min_gap: f64,
    /// Largest `|surrogate − nll|` at `θ = anchor`.
    pub max_tangent_gap: f64,
    /// Largest disagreement between the library loss and the oracle loss.
    pub max_loss_mismatch: f64,
}

impl MajorizationReport {
    fn new(draws: usize) -> Self {
        Self { draws, min_gap: f64::INFINITY, max_tangent_gap: 0.0, max_loss_mismatch: 0.0 }
    }
}

pub fn gaussian_majorization(draws: usize, seed: u64) -> MajorizationReport {
    let mut rng = random::rng(seed);
    let mut rep = MajorizationReport::new(draws);
    for _ in 0..draws {
        let dims = random::gaussian_dims(&mut rng, 4);
        let theta = random::gaussian_params(&mut rng, dims);
        let anchor = random::gaussian_params(&mut rng, dims);
        let z = random::gaussian_sample(&mut rng, dims);
        let y = z.continuous_y().unwrap();
        let nll = oracle::gaussian_nll(&theta, &z.x, y);
        let nll_anchor = oracle::gaussian_nll(&anchor, &z.x, y);
        let surr = gaussian::surrogate_loss(&theta, &z, &anchor, DEFAULT_EPSILON_STAR).unwrap();
        let tangent = gaussian::surrogate_loss(&anchor, &z, &anchor, DEFAULT_EPSILON_STAR).unwrap();
        rep.min_gap = rep.min_gap.min(surr - nll);
        rep.max_tangent_gap = rep.max_tangent_gap.max((tangent - nll_anchor).abs());
        let lib = gaussian::nll(&theta, &z).unwrap();
        rep.max_loss_mismatch = rep.max_loss_mismatch.max((lib - nll).abs());
    }
    rep
}

pub fn logistic_majorization(draws: usize, seed: u64) -> MajorizationReport {
    let mut rng = random::rng(seed);
    let mut rep = MajorizationReport::new(draws);
    for _ in 0..draws {
        let dims = random::logistic_dims(&mut rng, 4);
        let theta = random::logistic_params(&mut rng, dims);
        let anchor = random::logistic_params(&mut rng, dims);
        let z = random::logistic_sample(&mut rng, dims);
        let y = z.class_y().unwrap();
        let nll = oracle::logistic_nll(&theta, &z.x, y);
        let nll_anchor = oracle::logistic_nll(&anchor, &z.x, y);
        let surr = logistic::surrogate_loss_discrete(&theta, &z, &anchor, DEFAULT_EPSILON_STAR).unwrap();
        let tangent = logistic::surrogate_loss_discrete(&anchor, &z, &anchor, DEFAULT_EPSILON_STAR).unwrap();
        rep.min_gap = rep.min_gap.min(surr - nll);
        rep.max_tangent_gap = rep.max_tangent_gap.max((tangent - nll_anchor).abs());
        let lib = logistic::nll_discrete(&theta, &z).unwrap();
        rep.max_loss_mismatch = rep.max_loss_mismatch.max((lib - nll).abs());
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureReport {
    pub draws: usize,
    /// Largest `λ_max(∇²ḡ(ω) − B)`.
    pub max_hessian_excess: f64,
    /// Smallest `λ_min` of the corrected bound minus `diag π̂ − π̂π̂ᵀ`.
    pub min_corrected_margin: f64,
    /// Smallest `λ_min` of the classic bound minus `diag π − ππᵀ`.
    pub min_classic_margin: f64,
}

fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // exponential spacings, with occasional near-degenerate corners
    let mut w: Vec<f64> = (0..n).map(|_| -uniform(rng, 1e-12, 1.0).ln()).collect();
    if rng.random_bool(0.2) {
        let i = rng.random_range(0..n);
        w[i] *= 1e6;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

fn covariance(pi: &[f64]) -> DMatrix<f64> {
    let n = pi.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { pi[i] - pi[i] * pi[j] } else { -pi[i] * pi[j] })
}

pub fn curvature_bounds(draws: usize, seed: u64) -> CurvatureReport {
    let mut rng = random::rng(seed);
    let mut rep = CurvatureReport {
        draws,
        max_hessian_excess: f64::NEG_INFINITY,
        min_corrected_margin: f64::INFINITY,
        min_classic_margin: f64::INFINITY,
    };
    for _ in 0..draws {
        let k = rng.random_range(2..=6);
        let p = rng.random_range(1..=2);
        let degree = rng.random_range(0..=2);
        let x = uniform_vec(&mut rng, p, -2.0, 2.0);
        let x_hat = oracle::gate_features(&x, degree);
        let omega = uniform_vec(&mut rng, (k - 1) * x_hat.len(), -3.0, 3.0);
        let hess = oracle::gating_hessian(&omega, &x_hat, k);
        let spec = CurvatureBoundSpec::new(k - 1, x_hat, DEFAULT_EPSILON_STAR).unwrap();
        let b = linalg::build_b(&spec).unwrap();
        rep.max_hessian_excess = rep.max_hessian_excess.max(linalg::max_eigenvalue(&(hess - b)));

        let blocks = rng.random_range(1..=6);
        let full = simplex(&mut rng, blocks + 1);
        let sub = &full[..blocks];
        let margin = linalg::bohning_corrected_bound(blocks) - covariance(sub);
        rep.min_corrected_margin = rep.min_corrected_margin.min(linalg::min_eigenvalue(&margin));

        let n = rng.random_range(2..=6);
        let pi = simplex(&mut rng, n);
        let margin = linalg::bohning_classic_bound(n) - covariance(&pi);
        rep.min_classic_margin = rep.min_classic_margin.min(linalg::min_eigenvalue(&margin));
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub cases: usize,
    /// Largest per-coordinate gap between the closed form and the numeric minimizer.
    pub max_coordinate_error: f64,
    /// Largest first-order-condition residual at the closed form.
    pub max_foc_residual: f64,
}

fn sym_quad_residual(lin: &[f64], mat: &DMatrix<f64>, v: &[f64]) -> f64 {
    let x = nalgebra::DVector::from_column_slice(v);
    let g = (mat + mat.transpose()) * x;
    lin.iter().zip(g.iter()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max)
}

fn mean_stat(samples: &[Sample], stat: impl Fn(&Sample) -> Vec<f64>) -> Vec<f64> {
    let mut acc = stat(&samples[0]);
    for z in &samples[1..] {
        for (a, v) in acc.iter_mut().zip(stat(z)) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Well-conditioned admissible statistics: averages of `S̄` over 60 samples with one covariate.
fn gaussian_stat_case(rng: &mut impl Rng) -> (GaussianDims, Vec<f64>) {
    loop {
        let dims = GaussianDims {
            k: rng.random_range(1..=3),
            p: 1,
            q: rng.random_range(1..=2),
            dw: rng.random_range(0..=1),
            dv: rng.random_range(0..=1),
        };
        let mut anchor = random::gaussian_params(rng, dims);
        anchor.omega.iter_mut().for_each(|w| *w /= 3.0);
        let samples: Vec<Sample> = (0..60).map(|_| random::gaussian_sample(rng, dims)).collect();
        let s = mean_stat(&samples, |z| gaussian::suff_stat(&anchor, z, DEFAULT_EPSILON_STAR).unwrap());
        let blocks = gaussian::StatBlocks::split(dims, &s).unwrap();
        let ok = (0..dims.k).all(|k| {
            (0..dims.q).all(|q| {
                let m5 = linalg::mat_square(blocks.s5_seg(k, q)).unwrap();
                linalg::min_eigenvalue(&m5) > 0.02
            })
        });
        if ok && gaussian::check_admissible(dims, &s).is_ok() {
            return (dims, s);
        }
    }
}

pub fn gaussian_solve_oracle(cases: usize, seed: u64) -> SolveReport {
    let mut rng = random::rng(seed);
    let mut rep = SolveReport { cases, max_coordinate_error: 0.0, max_foc_residual: 0.0 };
    for _ in 0..cases {
        let (dims, s) = gaussian_stat_case(&mut rng);
        let theta = gaussian::solve_params(dims, &s).unwrap();
        let (g, u, kq) = (dims.omega_len(), dims.upsilon_len(), dims.sigma2_len());
        let mut quadratic = vec![true; g + u];
        quadratic.extend(std::iter::repeat_n(false, kq));
        let numeric = oracle::coordinate_descent(
            |v| oracle::gaussian_h(dims, &s, &v[..g], &v[g..g + u], &v[g + u..]),
            vec![0.0; g + u + kq],
            &quadratic,
            4000,
        );
        let mut err: f64 = 0.0;
        for (a, b) in theta.omega.iter().chain(&theta.upsilon).zip(&numeric[..g + u]) {
            err = err.max((a - b).abs());
        }
        for (a, b) in theta.sigma2.iter().zip(&numeric[g + u..]) {
            err = err.max((a - b.exp()).abs());
        }
        rep.max_coordinate_error = rep.max_coordinate_error.max(err);

        let blocks = gaussian::StatBlocks::split(dims, &s).unwrap();
        let mut foc: f64 = 0.0;
        if dims.k > 1 {
            foc = foc.max(sym_quad_residual(blocks.s1, &linalg::mat_square(blocks.s2).unwrap(), &theta.omega));
        }
        for k in 0..dims.k {
            for q in 0..dims.q {
                let m5 = linalg::mat_square(blocks.s5_seg(k, q)).unwrap();
                let row = theta.upsilon_row(k, q);
                let s4 = blocks.s4_seg(k, q);
                foc = foc.max(sym_quad_residual(s4, &m5, row));
                let x = nalgebra::DVector::from_column_slice(row);
                let quad = x.dot(&(&m5 * &x));
                let lin: f64 = s4.iter().zip(row).map(|(a, b)| a * b).sum();
                let i = k * dims.q + q;
                foc = foc.max((blocks.s6[i] * theta.sigma2[i] - (blocks.s3[i] + lin + quad)).abs());
            }
        }
        rep.max_foc_residual = rep.max_foc_residual.max(foc);
    }
    rep
}

fn logistic_stat_case(rng: &mut impl Rng) -> (LogisticDims, Vec<f64>) {
    loop {
        let dims = LogisticDims {
            k: rng.random_range(1..=3),
            m: rng.random_range(2..=3),
            p: 1,
            dw: rng.random_range(0..=1),
            dv: rng.random_range(0..=1),
        };
        let mut anchor = random::logistic_params(rng, dims);
        anchor.omega.iter_mut().for_each(|w| *w /= 3.0);
        let samples: Vec<Sample> = (0..60).map(|_| random::logistic_sample(rng, dims)).collect();
        let s = mean_stat(&samples, |z| logistic::suff_stat_discrete(&anchor, z, DEFAULT_EPSILON_STAR).unwrap());
        let blocks = logistic::StatBlocks::split(dims, &s).unwrap();
        let ok = (0..dims.k).all(|k| linalg::min_eigenvalue(&blocks.s4_block(k).unwrap()) > 1e-3);
        if ok && logistic::check_admissible_discrete(dims, &s).is_ok() {
            return (dims, s);
        }
    }
}

pub fn logistic_solve_oracle(cases: usize, seed: u64) -> SolveReport {
    let mut rng = random::rng(seed);
    let mut rep = SolveReport { cases, max_coordinate_error: 0.0, max_foc_residual: 0.0 };
    for _ in 0..cases {
        let (dims, s) = logistic_stat_case(&mut rng);
        let theta = logistic::solve_params_discrete(dims, &s).unwrap();
        let g = dims.omega_len();
        let n = g + dims.upsilon_len();
        let numeric = oracle::coordinate_descent(
            |v| oracle::logistic_h(dims, &s, &v[..g], &v[g..]),
            vec![0.0; n],
            &vec![true; n],
            20000,
        );
        let err = theta
            .omega
            .iter()
            .chain(&theta.upsilon)
            .zip(&numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rep.max_coordinate_error = rep.max_coordinate_error.max(err);

        let blocks = logistic::StatBlocks::split(dims, &s).unwrap();
        let mut foc: f64 = 0.0;
        if dims.k > 1 {
            foc = foc.max(sym_quad_residual(blocks.s1, &linalg::mat_square(blocks.s2).unwrap(), &theta.omega));
        }
        for k in 0..dims.k {
            foc = foc.max(sym_quad_residual(blocks.s3_seg(k), &blocks.s4_block(k).unwrap(), theta.expert_coef(k)));
        }
        rep.max_foc_residual = rep.max_foc_residual.max(foc);
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub points: usize,
    /// Largest `‖analytic − numeric‖₂ / max(‖numeric‖₂, 1e-8)`.
    pub max_relative_error: f64,
}

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = n.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

pub fn gaussian_gradients(points: usize, seed: u64) -> GradientReport {
    let mut rng = random::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let dims = random::gaussian_dims(&mut rng, 4);
        let theta = random::gaussian_params(&mut rng, dims);
        let z = random::gaussian_sample(&mut rng, dims);
        let y = z.continuous_y().unwrap().to_vec();
        let (g, u) = (dims.omega_len(), dims.upsilon_len());
        let f = |v: &[f64]| {
            let t = GaussianParams {
                dims,
                omega: v[..g].to_vec(),
                upsilon: v[g..g + u].to_vec(),
                sigma2: v[g + u..].iter().map(|l| l.exp()).collect(),
            };
            oracle::gaussian_nll(&t, &z.x, &y)
        };
        let mut at = [theta.omega.as_slice(), &theta.upsilon].concat();
        at.extend(theta.sigma2.iter().map(|s| s.ln()));
        let numeric = oracle::central_gradient(f, &at, 1e-5);
        let analytic = gaussian::nll_gradient(&theta, &z).unwrap();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    GradientReport { points, max_relative_error: worst }
}

pub fn logistic_gradients(points: usize, seed: u64) -> GradientReport {
    let mut rng = random::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let dims = random::logistic_dims(&mut rng, 4);
        let theta = random::logistic_params(&mut rng, dims);
        let z = random::logistic_sample(&mut rng, dims);
        let y = z.class_y().unwrap();
        let g = dims.omega_len();
        let f = |v: &[f64]| {
            let t = LogisticParams { dims, omega: v[..g].to_vec(), upsilon: v[g..].to_vec() };
            oracle::logistic_nll(&t, &z.x, y)
        };
        let at = [theta.omega.as_slice(), &theta.upsilon].concat();
        let numeric = oracle::central_gradient(f, &at, 1e-5);
        let analytic = logistic::nll_discrete_gradient(&theta, &z).unwrap();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    GradientReport { points, max_relative_error: worst }
}
