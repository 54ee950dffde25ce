//! Softmax-gated mixture of Gaussian experts with diagonal covariances.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{expert_features, gating_features};
use crate::gating;
use crate::linalg::{self, build_b, mat_square, solve_sym_psd, CurvatureBoundSpec, PSD_TOL};
use crate::mm::SurrogateFamily;
use crate::sample::Sample;

/// Variances below this are treated as a numerical failure.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianDims {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "D_W")]
    pub dw: usize,
    #[serde(rename = "D_V")]
    pub dv: usize,
}

impl GaussianDims {
    pub fn new(k: usize, p: usize, q: usize, dw: usize, dv: usize) -> Result<Self> {
        let d = Self { k, p, q, dw, dv };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::param(format!(
                "K, P and Q must be positive (K={}, P={}, Q={})",
                self.k, self.p, self.q
            )));
        }
        Ok(())
    }

    /// Length of `x̂`.
    pub fn gate_features(&self) -> usize {
        self.p * (self.dw + 1)
    }

    /// Length of `ω`.
    pub fn omega_len(&self) -> usize {
        (self.k - 1) * self.gate_features()
    }

    /// Length of `r`.
    pub fn expert_features(&self) -> usize {
        self.p * (self.dv + 1)
    }

    pub fn upsilon_len(&self) -> usize {
        self.k * self.q * self.expert_features()
    }

    pub fn sigma2_len(&self) -> usize {
        self.k * self.q
    }

    /// Length of the flattened parameter vector `[ω, Υ, σ²]`.
    pub fn param_len(&self) -> usize {
        self.omega_len() + self.upsilon_len() + self.sigma2_len()
    }

    /// Block lengths of the sufficient statistic.
    pub fn stat_blocks(&self) -> [usize; 6] {
        let g = self.omega_len();
        let r = self.expert_features();
        let kq = self.k * self.q;
        [g, g * g, kq, kq * r, kq * r * r, kq]
    }

    pub fn stat_len(&self) -> usize {
        self.stat_blocks().iter().sum()
    }
}

/// Parameters `θ = (ω, Υ, σ²)`.
///
/// `upsilon` holds rows `Υ_{k,q,:}` ordered expert-major then output;
/// `sigma2` is ordered the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub dims: GaussianDims,
    pub omega: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl GaussianParams {
    pub fn new(dims: GaussianDims, omega: Vec<f64>, upsilon: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        let theta = Self { dims, omega, upsilon, sigma2 };
        theta.validate()?;
        Ok(theta)
    }

    /// All-zero coefficients with unit variances.
    pub fn standard(dims: GaussianDims) -> Self {
        Self {
            dims,
            omega: vec![0.0; dims.omega_len()],
            upsilon: vec![0.0; dims.upsilon_len()],
            sigma2: vec![1.0; dims.sigma2_len()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        d.validate()?;
        let check = |name: &str, v: &[f64], n: usize| -> Result<()> {
            if v.len() != n {
                return Err(Error::shape(format!("{name} has length {}, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        check("omega", &self.omega, d.omega_len())?;
        check("upsilon", &self.upsilon, d.upsilon_len())?;
        check("sigma2", &self.sigma2, d.sigma2_len())?;
        if let Some(v) = self.sigma2.iter().find(|&&v| v <= 0.0) {
            return Err(Error::param(format!("variance {v} is not positive")));
        }
        Ok(())
    }

    pub fn upsilon_row(&self, k: usize, q: usize) -> &[f64] {
        let r = self.dims.expert_features();
        let start = (k * self.dims.q + q) * r;
        &self.upsilon[start..start + r]
    }

    pub fn sigma2_at(&self, k: usize, q: usize) -> f64 {
        self.sigma2[k * self.dims.q + q]
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.p {
            return Err(Error::shape(format!("x has length {}, expected P={}", x.len(), self.dims.p)));
        }
        Ok(())
    }

    fn check_y<'a>(&self, sample: &'a Sample) -> Result<&'a [f64]> {
        self.check_x(&sample.x)?;
        let y = sample.continuous_y()?;
        if y.len() != self.dims.q {
            return Err(Error::shape(format!("y has length {}, expected Q={}", y.len(), self.dims.q)));
        }
        Ok(y)
    }

    /// Gating scores `w_k(x)`, length `K` with the reference score last.
    pub fn gating_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        gating::logits(&self.omega, &gating_features(x, self.dims.dw), self.dims.k)
    }

    /// Expert means `μ_{k,q}(x)`, expert-major.
    pub fn expert_means(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let r = expert_features(x, self.dims.dv);
        Ok(self
            .upsilon
            .chunks(r.len())
            .map(|row| row.iter().zip(&r).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Flattened `[ω, Υ, σ²]`, the layout used for averaging.
    pub fn to_flat(&self) -> Vec<f64> {
        [self.omega.as_slice(), &self.upsilon, &self.sigma2].concat()
    }

    pub fn from_flat(dims: GaussianDims, v: &[f64]) -> Result<Self> {
        if v.len() != dims.param_len() {
            return Err(Error::shape(format!("flat vector has length {}, expected {}", v.len(), dims.param_len())));
        }
        let (a, rest) = v.split_at(dims.omega_len());
        let (b, c) = rest.split_at(dims.upsilon_len());
        Self::new(dims, a.to_vec(), b.to_vec(), c.to_vec())
    }

    /// Flattened `[ω, Υ, log σ²]`, the unconstrained layout used by gradient baselines.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut v = [self.omega.as_slice(), &self.upsilon].concat();
        v.extend(self.sigma2.iter().map(|s| s.ln()));
        v
    }

    pub fn from_unconstrained(dims: GaussianDims, v: &[f64]) -> Result<Self> {
        if v.len() != dims.param_len() {
            return Err(Error::shape(format!("flat vector has length {}, expected {}", v.len(), dims.param_len())));
        }
        let (a, rest) = v.split_at(dims.omega_len());
        let (b, c) = rest.split_at(dims.upsilon_len());
        Self::new(dims, a.to_vec(), b.to_vec(), c.iter().map(|l| l.exp()).collect())
    }

    /// Moves every intercept coefficient onto the first covariate's slot.
    ///
    /// `x̂` and `r` carry one constant entry per covariate, so only the sum of
    /// those coefficients is identified. Comparisons in parameter space go
    /// through this canonical form.
    pub fn canonical_intercepts(&self) -> Self {
        let mut out = self.clone();
        let d = self.dims;
        let g = d.gate_features();
        for block in out.omega.chunks_mut(g.max(1)) {
            let total: f64 = (0..d.p).map(|p| block[p * (d.dw + 1)]).sum();
            for p in 0..d.p {
                block[p * (d.dw + 1)] = 0.0;
            }
            block[0] = total;
        }
        let r = d.expert_features();
        for row in out.upsilon.chunks_mut(r) {
            let total: f64 = row[..d.p].iter().sum();
            row[..d.p].iter_mut().for_each(|v| *v = 0.0);
            row[0] = total;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    /// Parses and validates a JSON parameter document.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let theta: Self = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        theta.validate()?;
        Ok(theta)
    }
}

fn log_normal(y: f64, mu: f64, sigma2: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma2).ln() - (y - mu) * (y - mu) / (2.0 * sigma2)
}

/// Mixture weights `g_k(x)`.
pub fn gating_probs(theta: &GaussianParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(gating::probs_from_logits(&theta.gating_logits(x)?))
}

/// `log g_k(x) + Σ_q log N(y_q; μ_{k,q}(x), σ²_{k,q})` for each expert.
fn joint_log_terms(theta: &GaussianParams, sample: &Sample) -> Result<Vec<f64>> {
    let y = theta.check_y(sample)?;
    if let Some(v) = theta.sigma2.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::param(format!("variance {v} is not positive")));
    }
    let log_g = gating::log_probs_from_logits(&theta.gating_logits(&sample.x)?);
    let mu = theta.expert_means(&sample.x)?;
    let q = theta.dims.q;
    Ok((0..theta.dims.k)
        .map(|k| {
            log_g[k]
                + (0..q)
                    .map(|j| log_normal(y[j], mu[k * q + j], theta.sigma2[k * q + j]))
                    .sum::<f64>()
        })
        .collect())
}

/// Negative log predictive density `−log Σ_k g_k N_k`.
pub fn nll(theta: &GaussianParams, sample: &Sample) -> Result<f64> {
    Ok(-gating::log_sum_exp(&joint_log_terms(theta, sample)?))
}

/// Log-responsibilities `log τ_k`.
pub fn log_responsibilities(theta: &GaussianParams, sample: &Sample) -> Result<Vec<f64>> {
    Ok(gating::log_probs_from_logits(&joint_log_terms(theta, sample)?))
}

/// Posterior expert probabilities `τ_k`.
pub fn responsibilities(theta: &GaussianParams, sample: &Sample) -> Result<Vec<f64>> {
    Ok(log_responsibilities(theta, sample)?.into_iter().map(f64::exp).collect())
}

/// Conditional mean `Σ_k g_k(x) μ_k(x)`.
pub fn regression_mean(theta: &GaussianParams, x: &[f64]) -> Result<Vec<f64>> {
    let g = gating_probs(theta, x)?;
    let mu = theta.expert_means(x)?;
    let q = theta.dims.q;
    Ok((0..q).map(|j| (0..theta.dims.k).map(|k| g[k] * mu[k * q + j]).sum()).collect())
}

fn entropy_term(log_tau: &[f64]) -> f64 {
    log_tau
        .iter()
        .filter(|l| l.is_finite())
        .map(|&l| l.exp() * l)
        .sum()
}

fn curvature_bound(dims: &GaussianDims, x_hat: &[f64], epsilon_star: f64) -> Result<DMatrix<f64>> {
    build_b(&CurvatureBoundSpec::new(dims.k - 1, x_hat.to_vec(), epsilon_star)?)
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += m[(i, j)] * v[i];
        }
        acc += col * v[j];
    }
    acc
}

/// Majorizer of `nll(θ, z)` built around `anchor`; equal to it at `θ = anchor`.
pub fn surrogate_loss(theta: &GaussianParams, sample: &Sample, anchor: &GaussianParams, epsilon_star: f64) -> Result<f64> {
    theta.validate()?;
    if theta.dims != anchor.dims {
        return Err(Error::shape("theta and anchor have different dimensions"));
    }
    let dims = theta.dims;
    let y = theta.check_y(sample)?;
    let log_tau = log_responsibilities(anchor, sample)?;
    let tau: Vec<f64> = log_tau.iter().map(|l| l.exp()).collect();
    let mut value = entropy_term(&log_tau);

    if dims.k > 1 {
        let x_hat = gating_features(&sample.x, dims.dw);
        let k = dims.k;
        let gbar_n = gating::log_partition(&anchor.omega, &x_hat, k)?;
        let grad_n = gating::log_partition_grad(&anchor.omega, &x_hat, k)?;
        let w = gating::logits(&theta.omega, &x_hat, k)?;
        let b = curvature_bound(&dims, &x_hat, epsilon_star)?;
        let diff: Vec<f64> = theta.omega.iter().zip(&anchor.omega).map(|(a, b)| a - b).collect();
        let lin: f64 = diff.iter().zip(&grad_n).map(|(d, g)| d * g).sum();
        let fit: f64 = tau.iter().zip(&w).map(|(t, w)| t * w).sum();
        value += gbar_n + lin + 0.5 * quad_form(&b, &diff) - fit;
    }

    let mu = theta.expert_means(&sample.x)?;
    let q = dims.q;
    for k in 0..dims.k {
        if tau[k] == 0.0 {
            continue;
        }
        let lp: f64 = (0..q)
            .map(|j| log_normal(y[j], mu[k * q + j], theta.sigma2[k * q + j]))
            .sum();
        value -= tau[k] * lp;
    }
    Ok(value)
}

/// Sufficient statistic of the surrogate at `(anchor, z)`.
pub fn suff_stat(anchor: &GaussianParams, sample: &Sample, epsilon_star: f64) -> Result<Vec<f64>> {
    let dims = anchor.dims;
    let y = anchor.check_y(sample)?;
    let tau = responsibilities(anchor, sample)?;
    let [l1, l2, _, _, _, _] = dims.stat_blocks();
    let mut out = Vec::with_capacity(dims.stat_len());

    if dims.k > 1 {
        let x_hat = gating_features(&sample.x, dims.dw);
        let b = curvature_bound(&dims, &x_hat, epsilon_star)?;
        let xi = crate::features::weighted_gating_features(&tau, &x_hat);
        let grad = gating::log_partition_grad(&anchor.omega, &x_hat, dims.k)?;
        let b_omega = &b * nalgebra::DVector::from_column_slice(&anchor.omega);
        for i in 0..l1 {
            out.push(-xi[i] + grad[i] - b_omega[i]);
        }
        out.extend(b.iter().map(|v| 0.5 * v));
    }
    debug_assert_eq!(out.len(), l1 + l2);

    let r = expert_features(&sample.x, dims.dv);
    let q = dims.q;
    for &t in &tau {
        out.extend(y.iter().map(|v| t * v * v));
    }
    for &t in &tau {
        for &yq in y {
            out.extend(r.iter().map(|rj| -2.0 * t * yq * rj));
        }
    }
    for &t in &tau {
        for _ in 0..q {
            for &ri in &r {
                out.extend(r.iter().map(|rj| t * rj * ri));
            }
        }
    }
    for &t in &tau {
        out.extend(std::iter::repeat_n(t, q));
    }
    debug_assert_eq!(out.len(), dims.stat_len());
    Ok(out)
}

/// Read-only view of the six blocks of a Gaussian statistic.
#[derive(Debug, Clone, Copy)]
pub struct StatBlocks<'a> {
    pub dims: GaussianDims,
    pub s1: &'a [f64],
    pub s2: &'a [f64],
    pub s3: &'a [f64],
    pub s4: &'a [f64],
    pub s5: &'a [f64],
    pub s6: &'a [f64],
}

impl<'a> StatBlocks<'a> {
    pub fn split(dims: GaussianDims, s: &'a [f64]) -> Result<Self> {
        if s.len() != dims.stat_len() {
            return Err(Error::shape(format!("statistic has length {}, expected {}", s.len(), dims.stat_len())));
        }
        let [l1, l2, l3, l4, l5, _] = dims.stat_blocks();
        let (s1, rest) = s.split_at(l1);
        let (s2, rest) = rest.split_at(l2);
        let (s3, rest) = rest.split_at(l3);
        let (s4, rest) = rest.split_at(l4);
        let (s5, s6) = rest.split_at(l5);
        Ok(Self { dims, s1, s2, s3, s4, s5, s6 })
    }

    /// `s4_{k:q}`.
    pub fn s4_seg(&self, k: usize, q: usize) -> &'a [f64] {
        let r = self.dims.expert_features();
        let i = (k * self.dims.q + q) * r;
        &self.s4[i..i + r]
    }

    /// `s5_{k:q}`.
    pub fn s5_seg(&self, k: usize, q: usize) -> &'a [f64] {
        let r2 = self.dims.expert_features().pow(2);
        let i = (k * self.dims.q + q) * r2;
        &self.s5[i..i + r2]
    }
}

/// Checks membership in the admissible statistic set.
pub fn check_admissible(dims: GaussianDims, s: &[f64]) -> Result<()> {
    let blocks = StatBlocks::split(dims, s)?;
    let fail = |message: String| Err(Error::Invariant { iteration: 0, message });
    if s.iter().any(|v| !v.is_finite()) {
        return fail("statistic has non-finite entries".into());
    }
    if dims.k > 1 {
        let m2 = mat_square(blocks.s2)?;
        let lo = linalg::min_eigenvalue(&m2);
        if !(lo > 0.0) {
            return fail(format!("mat(s2) is not positive definite (min eigenvalue {lo:e})"));
        }
    }
    for k in 0..dims.k {
        for q in 0..dims.q {
            let m5 = mat_square(blocks.s5_seg(k, q))?;
            let lo = linalg::min_eigenvalue(&m5);
            let hi = linalg::max_eigenvalue(&m5);
            if lo < -PSD_TOL * hi.max(1.0) {
                return fail(format!("mat(s5) block ({k},{q}) is not positive semi-definite"));
            }
            if !(blocks.s6[k * dims.q + q] > 0.0) {
                return fail(format!("s6 entry ({k},{q}) is not positive"));
            }
        }
    }
    Ok(())
}

/// `θ̄(s)`: the closed-form minimizer of `⟨s, φ(θ)⟩`.
pub fn solve_params(dims: GaussianDims, s: &[f64]) -> Result<GaussianParams> {
    let blocks = StatBlocks::split(dims, s)?;
    let omega = if dims.k > 1 {
        let m2 = mat_square(blocks.s2)? * 2.0;
        let rhs: Vec<f64> = blocks.s1.iter().map(|v| -v).collect();
        solve_sym_psd(&m2, &rhs, "s2")?.iter().cloned().collect()
    } else {
        Vec::new()
    };
    let mut upsilon = Vec::with_capacity(dims.upsilon_len());
    let mut sigma2 = Vec::with_capacity(dims.sigma2_len());
    for k in 0..dims.k {
        for q in 0..dims.q {
            let m5 = mat_square(blocks.s5_seg(k, q))?;
            let s4 = blocks.s4_seg(k, q);
            let rhs: Vec<f64> = s4.iter().map(|v| -v).collect();
            let row = solve_sym_psd(&(&m5 * 2.0), &rhs, &format!("s5[{k},{q}]"))?;
            let row: Vec<f64> = row.iter().cloned().collect();
            let s6 = blocks.s6[k * dims.q + q];
            let num = blocks.s3[k * dims.q + q]
                + s4.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>()
                + quad_form(&m5, &row);
            let v = num / s6;
            if !v.is_finite() || v < SIGMA2_FLOOR {
                return Err(Error::Numeric {
                    iteration: 0,
                    message: format!("variance ({k},{q}) solved to {v:e}"),
                });
            }
            upsilon.extend(row);
            sigma2.push(v);
        }
    }
    GaussianParams::new(dims, omega, upsilon, sigma2)
}

/// `φ(θ) = [ω, vec(ωωᵀ), 1/σ², Υ/σ², vec(ΥᵀΥ)/σ², log σ²]`, so that the
/// surrogate equals a constant plus `⟨S̄, φ(θ)⟩` (up to a factor ½ on the
/// expert blocks).
pub fn phi(theta: &GaussianParams) -> Vec<f64> {
    let d = theta.dims;
    let mut out = Vec::with_capacity(d.stat_len());
    out.extend_from_slice(&theta.omega);
    for &a in &theta.omega {
        out.extend(theta.omega.iter().map(|b| a * b));
    }
    out.extend(theta.sigma2.iter().map(|s| 1.0 / s));
    for k in 0..d.k {
        for q in 0..d.q {
            let s = theta.sigma2_at(k, q);
            out.extend(theta.upsilon_row(k, q).iter().map(|u| u / s));
        }
    }
    for k in 0..d.k {
        for q in 0..d.q {
            let s = theta.sigma2_at(k, q);
            let row = theta.upsilon_row(k, q);
            for &a in row {
                out.extend(row.iter().map(|b| b * a / s));
            }
        }
    }
    out.extend(theta.sigma2.iter().map(|s| s.ln()));
    out
}

/// Initial statistic `s₀` with `s₂ = ½ vec(I)`, `s₄ = 1 ⊗ ŝ`, `s₅ = 1 ⊗ vec(ŝŝᵀ + I)`
/// and `s₁ = 0`, `s₃ = s₆ = 1`; it solves to `ω = 0`.
pub fn canonical_initial_stats(dims: GaussianDims, s_hat: &[f64]) -> Result<Vec<f64>> {
    let r = dims.expert_features();
    if s_hat.len() != r {
        return Err(Error::shape(format!("s_hat has length {}, expected {r}", s_hat.len())));
    }
    let g = dims.omega_len();
    let kq = dims.k * dims.q;
    let mut out = vec![0.0; g];
    for i in 0..g {
        for j in 0..g {
            out.push(if i == j { 0.5 } else { 0.0 });
        }
    }
    out.extend(std::iter::repeat_n(1.0, kq));
    for _ in 0..kq {
        out.extend_from_slice(s_hat);
    }
    for _ in 0..kq {
        for i in 0..r {
            for j in 0..r {
                out.push(s_hat[j] * s_hat[i] + if i == j { 1.0 } else { 0.0 });
            }
        }
    }
    out.extend(std::iter::repeat_n(1.0, kq));
    Ok(out)
}

/// Gradient of [`nll`] with respect to `[ω, Υ, log σ²]`.
pub fn nll_gradient(theta: &GaussianParams, sample: &Sample) -> Result<Vec<f64>> {
    let d = theta.dims;
    let y = theta.check_y(sample)?;
    let tau = responsibilities(theta, sample)?;
    let g = gating_probs(theta, &sample.x)?;
    let x_hat = gating_features(&sample.x, d.dw);
    let r = expert_features(&sample.x, d.dv);
    let mu = theta.expert_means(&sample.x)?;
    let mut out = Vec::with_capacity(d.param_len());
    for k in 0..d.k - 1 {
        out.extend(x_hat.iter().map(|v| (g[k] - tau[k]) * v));
    }
    for k in 0..d.k {
        for q in 0..d.q {
            let i = k * d.q + q;
            let c = -tau[k] * (y[q] - mu[i]) / theta.sigma2[i];
            out.extend(r.iter().map(|v| c * v));
        }
    }
    for k in 0..d.k {
        for q in 0..d.q {
            let i = k * d.q + q;
            let e = y[q] - mu[i];
            out.push(tau[k] * 0.5 * (1.0 - e * e / theta.sigma2[i]));
        }
    }
    Ok(out)
}

/// The Gaussian MoE surrogate family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFamily {
    pub dims: GaussianDims,
    pub epsilon_star: f64,
}

impl GaussianFamily {
    pub fn new(dims: GaussianDims, epsilon_star: f64) -> Result<Self> {
        dims.validate()?;
        if !(epsilon_star > 0.0 && epsilon_star.is_finite()) {
            return Err(Error::param(format!("epsilon_star must be positive, got {epsilon_star}")));
        }
        Ok(Self { dims, epsilon_star })
    }
}

impl SurrogateFamily for GaussianFamily {
    type Params = GaussianParams;

    fn stat_len(&self) -> usize {
        self.dims.stat_len()
    }

    fn suff_stat(&self, theta: &GaussianParams, sample: &Sample) -> Result<Vec<f64>> {
        suff_stat(theta, sample, self.epsilon_star)
    }

    fn solve(&self, s: &[f64]) -> Result<GaussianParams> {
        solve_params(self.dims, s)
    }

    fn check_admissible(&self, s: &[f64]) -> Result<()> {
        check_admissible(self.dims, s)
    }

    fn loss(&self, theta: &GaussianParams, sample: &Sample) -> Result<f64> {
        nll(theta, sample)
    }

    fn surrogate_loss(&self, theta: &GaussianParams, sample: &Sample, anchor: &GaussianParams) -> Result<f64> {
        surrogate_loss(theta, sample, anchor, self.epsilon_star)
    }

    /// Scaled so that `h(s; θ) = ⟨s, φ(θ)⟩` has the same minimizer as the
    /// surrogate: the expert blocks of the surrogate carry a factor ½.
    fn phi(&self, theta: &GaussianParams) -> Vec<f64> {
        phi(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(k: usize, p: usize, q: usize, dw: usize, dv: usize) -> GaussianDims {
        GaussianDims::new(k, p, q, dw, dv).unwrap()
    }

    fn lowdim_truth() -> GaussianParams {
        GaussianParams::new(
            dims(2, 2, 1, 1, 1),
            vec![0.0, 8.0, 0.0, 0.0],
            vec![0.0, 0.0, -2.5, 0.0, 0.0, 0.0, 2.5, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_nll() {
        let t = GaussianParams::standard(dims(1, 1, 1, 0, 0));
        let v = nll(&t, &Sample::continuous(vec![0.3], vec![0.0])).unwrap();
        assert!((v - 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!((v - 0.9189385).abs() < 1e-7);
    }

    #[test]
    fn identical_experts_collapse() {
        let d2 = dims(2, 1, 1, 1, 1);
        let t2 = GaussianParams::new(d2, vec![0.7, -1.3], vec![0.4, 1.1, 0.4, 1.1], vec![0.6, 0.6]).unwrap();
        let t1 = GaussianParams::new(dims(1, 1, 1, 1, 1), vec![], vec![0.4, 1.1], vec![0.6]).unwrap();
        let z = Sample::continuous(vec![0.35], vec![-0.2]);
        assert!((nll(&t2, &z).unwrap() - nll(&t1, &z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_direct_density_sum() {
        let t = lowdim_truth();
        let z = Sample::continuous(vec![1.0, 1.0], vec![-2.5]);
        let g1 = 1.0 / (1.0 + (-8.0f64).exp());
        let dens = |mu: f64| (-(-2.5 - mu).powi(2) / 2.0).exp() / (2.0 * PI).sqrt();
        let direct = -(g1 * dens(-2.5) + (1.0 - g1) * dens(2.5)).ln();
        assert!((nll(&t, &z).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn responsibilities_examples() {
        let t = GaussianParams::standard(dims(1, 1, 1, 0, 0));
        assert_eq!(responsibilities(&t, &Sample::continuous(vec![1.0], vec![2.0])).unwrap(), vec![1.0]);

        let t = lowdim_truth();
        let tau = responsibilities(&t, &Sample::continuous(vec![0.9, 0.0], vec![-2.25])).unwrap();
        assert!(tau[0] > 0.99);
        assert!((tau.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_mean_examples() {
        let t = lowdim_truth();
        let m = regression_mean(&t, &[0.5, -0.3]).unwrap();
        let g1 = 1.0 / (1.0 + (-4.0f64).exp());
        assert!((m[0] - (g1 * -1.25 + (1.0 - g1) * 1.25)).abs() < 1e-12);

        let sym = GaussianParams::new(dims(2, 1, 1, 0, 0), vec![0.0], vec![1.5, -1.5], vec![1.0, 1.0]).unwrap();
        assert!(regression_mean(&sym, &[0.2]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn surrogate_is_tangent() {
        let t = lowdim_truth();
        for (x, y) in [([0.3, -0.4], 0.7), ([-0.9, 0.2], 2.1), ([0.0, 0.0], -0.1)] {
            let z = Sample::continuous(x.to_vec(), vec![y]);
            let a = surrogate_loss(&t, &z, &t, 1e-6).unwrap();
            assert!((a - nll(&t, &z).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn single_expert_surrogate_is_nll() {
        let t = GaussianParams::new(dims(1, 2, 2, 0, 1), vec![], vec![0.1, 0.2, 0.3, 0.4, -0.1, 0.5, 0.0, 0.2], vec![0.5, 2.0]).unwrap();
        let anchor = GaussianParams::standard(t.dims);
        let z = Sample::continuous(vec![0.4, -0.7], vec![1.0, -1.0]);
        assert!((surrogate_loss(&t, &z, &anchor, 1e-6).unwrap() - nll(&t, &z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn stat_shapes() {
        let d = dims(3, 2, 2, 1, 2);
        let t = GaussianParams::standard(d);
        let s = suff_stat(&t, &Sample::continuous(vec![0.5, 0.1], vec![1.0, 2.0]), 1e-6).unwrap();
        let [l1, l2, l3, l4, l5, l6] = d.stat_blocks();
        assert_eq!(l1, 2 * 2 * 2);
        assert_eq!(l2, l1 * l1);
        assert_eq!(l3, 6);
        assert_eq!(l4, 3 * 2 * 2 * 3);
        assert_eq!(l5, 6 * 36);
        assert_eq!(l6, 6);
        assert_eq!(s.len(), d.stat_len());
    }

    #[test]
    fn single_expert_stat() {
        let d = dims(1, 1, 2, 0, 0);
        let s = suff_stat(&GaussianParams::standard(d), &Sample::continuous(vec![3.0], vec![2.0, -1.0]), 1e-6).unwrap();
        let b = StatBlocks::split(d, &s).unwrap();
        assert!(b.s1.is_empty() && b.s2.is_empty());
        assert_eq!(b.s3, &[4.0, 1.0]);
        assert_eq!(b.s6, &[1.0, 1.0]);
    }

    #[test]
    fn zero_covariate_stat() {
        let d = dims(3, 2, 1, 1, 1);
        let s = suff_stat(&GaussianParams::standard(d), &Sample::continuous(vec![0.0, 0.0], vec![0.5]), 1e-6).unwrap();
        let b = StatBlocks::split(d, &s).unwrap();
        let x_hat = [1.0, 0.0, 1.0, 0.0];
        let m = mat_square(b.s2).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let (bi, fi, bj, fj) = (i / 4, i % 4, j / 4, j % 4);
                let c = if bi == bj { 0.75 } else { 0.0 } - 1.0 / 4.0;
                let e = if i == j { 1e-6 } else { 0.0 };
                assert!((m[(i, j)] - 0.5 * (c * x_hat[fi] * x_hat[fj] + e)).abs() < 1e-15);
            }
        }
        assert_eq!(&b.s4_seg(0, 0)[2..], &[0.0, 0.0]);
    }

    #[test]
    fn solve_examples() {
        let d = dims(2, 1, 1, 0, 0);
        let mut s = canonical_initial_stats(d, &[0.0]).unwrap();
        s[0] = 0.75;
        let t = solve_params(d, &s).unwrap();
        assert!((t.omega[0] + 0.75).abs() < 1e-14);
        assert_eq!(t.upsilon, vec![0.0, 0.0]);
        assert_eq!(t.sigma2, vec![1.0, 1.0]);
    }

    #[test]
    fn surrogate_decomposes_over_phi() {
        // surrogate(θ) − ⟨S̄_gate, φ_gate(θ)⟩ − ½⟨S̄_exp, φ_exp(θ)⟩ does not depend on θ
        let d = dims(3, 2, 2, 1, 1);
        let anchor = GaussianParams::new(
            d,
            (0..8).map(|i| 0.1 * i as f64 - 0.3).collect(),
            (0..24).map(|i| (i as f64 * 0.37).sin()).collect(),
            vec![0.5, 1.5, 0.8, 1.1, 2.0, 0.9],
        )
        .unwrap();
        let z = Sample::continuous(vec![0.4, -0.6], vec![0.3, -1.2]);
        let sbar = suff_stat(&anchor, &z, 1e-6).unwrap();
        let gate_len = d.stat_blocks()[0] + d.stat_blocks()[1];
        let split = |theta: &GaussianParams| {
            let p = phi(theta);
            let gate: f64 = sbar[..gate_len].iter().zip(&p[..gate_len]).map(|(a, b)| a * b).sum();
            let exp: f64 = sbar[gate_len..].iter().zip(&p[gate_len..]).map(|(a, b)| a * b).sum();
            surrogate_loss(theta, &z, &anchor, 1e-6).unwrap() - gate - 0.5 * exp
        };
        let c0 = split(&anchor);
        let mut other = anchor.clone();
        other.omega.iter_mut().for_each(|v| *v += 0.2);
        other.upsilon.iter_mut().for_each(|v| *v *= -0.5);
        other.sigma2.iter_mut().for_each(|v| *v *= 1.7);
        assert!((split(&other) - c0).abs() < 1e-10);
    }

    #[test]
    fn gradient_zero_cases() {
        let t = GaussianParams::new(dims(1, 1, 1, 0, 1), vec![], vec![0.5, 2.0], vec![1.0]).unwrap();
        let g = nll_gradient(&t, &Sample::continuous(vec![0.25], vec![1.0])).unwrap();
        assert!(g[0].abs() < 1e-15 && g[1].abs() < 1e-15);

        let t = GaussianParams::new(dims(2, 1, 1, 0, 0), vec![0.0], vec![1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = nll_gradient(&t, &Sample::continuous(vec![0.25], vec![0.0])).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_rejects() {
        let t = lowdim_truth();
        let back = GaussianParams::from_json_slice(t.to_json().as_bytes()).unwrap();
        assert_eq!(back, t);
        let bad = t.to_json().replace("\"sigma2\": [\n    1.0", "\"sigma2\": [\n    -1.0");
        assert!(GaussianParams::from_json_slice(bad.as_bytes()).is_err());
        assert!(GaussianParams::from_json_slice(b"{}").is_err());
    }

    #[test]
    fn canonical_intercepts_sums_constant_slots() {
        let t = lowdim_truth();
        let mut shifted = t.clone();
        shifted.upsilon[0] += 0.3;
        shifted.upsilon[1] -= 0.3;
        shifted.omega[0] += 1.0;
        shifted.omega[2] -= 1.0;
        let x = [0.3, -0.8];
        assert!((regression_mean(&t, &x).unwrap()[0] - regression_mean(&shifted, &x).unwrap()[0]).abs() < 1e-12);
        let a = t.canonical_intercepts();
        let b = shifted.canonical_intercepts();
        for (u, v) in a.to_flat().iter().zip(b.to_flat()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
