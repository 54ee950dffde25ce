//! Softmax-gated mixture of multinomial-logistic experts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{expert_features, gating_features, weighted_gating_features};
use crate::gating;
use crate::linalg::{build_b, mat_of, mat_square, min_eigenvalue, max_eigenvalue, solve_sym_psd, CurvatureBoundSpec, PSD_TOL};
use crate::mm::SurrogateFamily;
use crate::sample::Sample;

/// Model dimensions; classes are labelled `1..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogisticDims {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "D_W")]
    pub dw: usize,
    #[serde(rename = "D_V")]
    pub dv: usize,
}

impl LogisticDims {
    pub fn new(k: usize, m: usize, p: usize, dw: usize, dv: usize) -> Result<Self> {
        let d = Self { k, m, p, dw, dv };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.p == 0 {
            return Err(Error::param(format!("K and P must be positive (K={}, P={})", self.k, self.p)));
        }
        if self.m < 2 {
            return Err(Error::param(format!("M must be at least 2, got {}", self.m)));
        }
        Ok(())
    }

    pub fn gate_features(&self) -> usize {
        self.p * (self.dw + 1)
    }

    pub fn omega_len(&self) -> usize {
        (self.k - 1) * self.gate_features()
    }

    /// Length of the expert feature vector `u`.
    pub fn expert_features(&self) -> usize {
        self.p * (self.dv + 1)
    }

    /// `ι = (M−1)·P·(D_V+1)`, the free coefficient count per expert.
    pub fn iota(&self) -> usize {
        (self.m - 1) * self.expert_features()
    }

    pub fn upsilon_len(&self) -> usize {
        self.k * self.iota()
    }

    pub fn param_len(&self) -> usize {
        self.omega_len() + self.upsilon_len()
    }

    pub fn stat_blocks(&self) -> [usize; 4] {
        let g = self.omega_len();
        let i = self.iota();
        [g, g * g, self.k * i, self.k * i * i]
    }

    pub fn stat_len(&self) -> usize {
        self.stat_blocks().iter().sum()
    }
}

/// Parameters `θ = (ω, c_1, …, c_K)`.
///
/// Each `c_k` is class-major over the first `M−1` classes, with the expert
/// feature layout inside each class block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub dims: LogisticDims,
    pub omega: Vec<f64>,
    pub upsilon: Vec<f64>,
}

impl LogisticParams {
    pub fn new(dims: LogisticDims, omega: Vec<f64>, upsilon: Vec<f64>) -> Result<Self> {
        let t = Self { dims, omega, upsilon };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(dims: LogisticDims) -> Self {
        Self {
            dims,
            omega: vec![0.0; dims.omega_len()],
            upsilon: vec![0.0; dims.upsilon_len()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        for (name, v, n) in [
            ("omega", &self.omega, self.dims.omega_len()),
            ("upsilon", &self.upsilon, self.dims.upsilon_len()),
        ] {
            if v.len() != n {
                return Err(Error::shape(format!("{name} has length {}, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// `c_k`.
    pub fn expert_coef(&self, k: usize) -> &[f64] {
        let i = self.dims.iota();
        &self.upsilon[k * i..(k + 1) * i]
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.p {
            return Err(Error::shape(format!("x has length {}, expected P={}", x.len(), self.dims.p)));
        }
        Ok(())
    }

    fn check_y(&self, sample: &Sample) -> Result<usize> {
        self.check_x(&sample.x)?;
        let y = sample.class_y()?;
        if y == 0 || y > self.dims.m {
            return Err(Error::arg(format!("class {y} outside 1..={}", self.dims.m)));
        }
        Ok(y)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [self.omega.as_slice(), &self.upsilon].concat()
    }

    pub fn from_flat(dims: LogisticDims, v: &[f64]) -> Result<Self> {
        if v.len() != dims.param_len() {
            return Err(Error::shape(format!("flat vector has length {}, expected {}", v.len(), dims.param_len())));
        }
        let (a, b) = v.split_at(dims.omega_len());
        Self::new(dims, a.to_vec(), b.to_vec())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let t: Self = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

/// Class probabilities of one expert, class `M` as reference.
pub fn expert_probs(coef: &[f64], x: &[f64], dims: &LogisticDims) -> Result<Vec<f64>> {
    let u = expert_features(x, dims.dv);
    Ok(gating::probs_from_logits(&gating::logits(coef, &u, dims.m)?))
}

fn expert_log_probs(coef: &[f64], u: &[f64], m: usize) -> Result<Vec<f64>> {
    Ok(gating::log_probs_from_logits(&gating::logits(coef, u, m)?))
}

/// Mixture weights `g_k(x)`.
pub fn gating_probs(theta: &LogisticParams, x: &[f64]) -> Result<Vec<f64>> {
    theta.check_x(x)?;
    let l = gating::logits(&theta.omega, &gating_features(x, theta.dims.dw), theta.dims.k)?;
    Ok(gating::probs_from_logits(&l))
}

/// Predictive class distribution `Σ_k g_k(x) e_k(·; x)`.
pub fn class_probs(theta: &LogisticParams, x: &[f64]) -> Result<Vec<f64>> {
    let g = gating_probs(theta, x)?;
    let mut out = vec![0.0; theta.dims.m];
    for (k, gk) in g.iter().enumerate() {
        let e = expert_probs(theta.expert_coef(k), x, &theta.dims)?;
        for (o, ek) in out.iter_mut().zip(e) {
            *o += gk * ek;
        }
    }
    Ok(out)
}

/// Most probable class (1-based; ties go to the smaller label).
pub fn predict_class(theta: &LogisticParams, x: &[f64]) -> Result<usize> {
    let p = class_probs(theta, x)?;
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

fn joint_log_terms(theta: &LogisticParams, sample: &Sample) -> Result<Vec<f64>> {
    let y = theta.check_y(sample)?;
    let d = theta.dims;
    let lg = gating::log_probs_from_logits(&gating::logits(&theta.omega, &gating_features(&sample.x, d.dw), d.k)?);
    let u = expert_features(&sample.x, d.dv);
    (0..d.k)
        .map(|k| Ok(lg[k] + expert_log_probs(theta.expert_coef(k), &u, d.m)?[y - 1]))
        .collect()
}

/// `−log Σ_k g_k(x) e_k(y; x)`.
pub fn nll_discrete(theta: &LogisticParams, sample: &Sample) -> Result<f64> {
    Ok(-gating::log_sum_exp(&joint_log_terms(theta, sample)?))
}

pub fn log_responsibilities_discrete(theta: &LogisticParams, sample: &Sample) -> Result<Vec<f64>> {
    Ok(gating::log_probs_from_logits(&joint_log_terms(theta, sample)?))
}

pub fn responsibilities_discrete(theta: &LogisticParams, sample: &Sample) -> Result<Vec<f64>> {
    Ok(log_responsibilities_discrete(theta, sample)?.into_iter().map(f64::exp).collect())
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let x = DVector::from_column_slice(v);
    x.dot(&(m * &x))
}

fn bound(blocks: usize, features: &[f64], epsilon_star: f64) -> Result<DMatrix<f64>> {
    build_b(&CurvatureBoundSpec::new(blocks, features.to_vec(), epsilon_star)?)
}

/// Majorizer of [`nll_discrete`] built around `anchor`.
pub fn surrogate_loss_discrete(theta: &LogisticParams, sample: &Sample, anchor: &LogisticParams, epsilon_star: f64) -> Result<f64> {
    theta.validate()?;
    if theta.dims != anchor.dims {
        return Err(Error::shape("theta and anchor have different dimensions"));
    }
    let d = theta.dims;
    let y = theta.check_y(sample)?;
    let log_tau = log_responsibilities_discrete(anchor, sample)?;
    let tau: Vec<f64> = log_tau.iter().map(|l| l.exp()).collect();
    let mut value: f64 = log_tau.iter().filter(|l| l.is_finite()).map(|&l| l.exp() * l).sum();

    if d.k > 1 {
        let x_hat = gating_features(&sample.x, d.dw);
        let gbar_n = gating::log_partition(&anchor.omega, &x_hat, d.k)?;
        let grad_n = gating::log_partition_grad(&anchor.omega, &x_hat, d.k)?;
        let w = gating::logits(&theta.omega, &x_hat, d.k)?;
        let b = bound(d.k - 1, &x_hat, epsilon_star)?;
        let diff: Vec<f64> = theta.omega.iter().zip(&anchor.omega).map(|(a, b)| a - b).collect();
        let lin: f64 = diff.iter().zip(&grad_n).map(|(a, b)| a * b).sum();
        let fit: f64 = tau.iter().zip(&w).map(|(t, w)| t * w).sum();
        value += gbar_n + lin + 0.5 * quad_form(&b, &diff) - fit;
    }

    let u = expert_features(&sample.x, d.dv);
    let bm = bound(d.m - 1, &u, epsilon_star)?;
    for k in 0..d.k {
        if tau[k] == 0.0 {
            continue;
        }
        let c = theta.expert_coef(k);
        let cn = anchor.expert_coef(k);
        let ebar_n = gating::log_partition(cn, &u, d.m)?;
        let grad = gating::log_partition_grad(cn, &u, d.m)?;
        let diff: Vec<f64> = c.iter().zip(cn).map(|(a, b)| a - b).collect();
        let lin: f64 = diff.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let v_y = gating::logits(c, &u, d.m)?[y - 1];
        value += tau[k] * (ebar_n + lin + 0.5 * quad_form(&bm, &diff) - v_y);
    }
    Ok(value)
}

/// Sufficient statistic of the discrete surrogate at `(anchor, z)`.
pub fn suff_stat_discrete(anchor: &LogisticParams, sample: &Sample, epsilon_star: f64) -> Result<Vec<f64>> {
    let d = anchor.dims;
    let y = anchor.check_y(sample)?;
    let tau = responsibilities_discrete(anchor, sample)?;
    let mut out = Vec::with_capacity(d.stat_len());

    if d.k > 1 {
        let x_hat = gating_features(&sample.x, d.dw);
        let b = bound(d.k - 1, &x_hat, epsilon_star)?;
        let xi = weighted_gating_features(&tau, &x_hat);
        let grad = gating::log_partition_grad(&anchor.omega, &x_hat, d.k)?;
        let b_omega = &b * DVector::from_column_slice(&anchor.omega);
        for i in 0..d.omega_len() {
            out.push(-xi[i] + grad[i] - b_omega[i]);
        }
        out.extend(b.iter().map(|v| 0.5 * v));
    }

    let u = expert_features(&sample.x, d.dv);
    let f = u.len();
    let iota = d.iota();
    let bm = bound(d.m - 1, &u, epsilon_star)?;
    for k in 0..d.k {
        let cn = anchor.expert_coef(k);
        let grad = gating::log_partition_grad(cn, &u, d.m)?;
        let bc = &bm * DVector::from_column_slice(cn);
        for i in 0..iota {
            let class = i / f + 1;
            let indicator = if class == y { tau[k] * u[i % f] } else { 0.0 };
            out.push(-indicator + tau[k] * (grad[i] - bc[i]));
        }
    }
    // vec of the stacked (Kι)×ι matrix τ ⊗ B_M, column-major
    for j in 0..iota {
        for &t in &tau {
            for i in 0..iota {
                out.push(0.5 * t * bm[(i, j)]);
            }
        }
    }
    debug_assert_eq!(out.len(), d.stat_len());
    Ok(out)
}

/// Read-only view of the four blocks of a logistic statistic.
#[derive(Debug, Clone, Copy)]
pub struct StatBlocks<'a> {
    pub dims: LogisticDims,
    pub s1: &'a [f64],
    pub s2: &'a [f64],
    pub s3: &'a [f64],
    pub s4: &'a [f64],
}

impl<'a> StatBlocks<'a> {
    pub fn split(dims: LogisticDims, s: &'a [f64]) -> Result<Self> {
        if s.len() != dims.stat_len() {
            return Err(Error::shape(format!("statistic has length {}, expected {}", s.len(), dims.stat_len())));
        }
        let [l1, l2, l3, _] = dims.stat_blocks();
        let (s1, rest) = s.split_at(l1);
        let (s2, rest) = rest.split_at(l2);
        let (s3, s4) = rest.split_at(l3);
        Ok(Self { dims, s1, s2, s3, s4 })
    }

    pub fn s3_seg(&self, k: usize) -> &'a [f64] {
        let i = self.dims.iota();
        &self.s3[k * i..(k + 1) * i]
    }

    /// Expert `k`'s curvature block of `mat_ι(s4)`.
    pub fn s4_block(&self, k: usize) -> Result<DMatrix<f64>> {
        let i = self.dims.iota();
        let stacked = mat_of(self.s4, self.dims.k * i, i)?;
        Ok(stacked.view((k * i, 0), (i, i)).into_owned())
    }
}

pub fn check_admissible_discrete(dims: LogisticDims, s: &[f64]) -> Result<()> {
    let blocks = StatBlocks::split(dims, s)?;
    let fail = |message: String| Err(Error::Invariant { iteration: 0, message });
    if s.iter().any(|v| !v.is_finite()) {
        return fail("statistic has non-finite entries".into());
    }
    if dims.k > 1 {
        let lo = min_eigenvalue(&mat_square(blocks.s2)?);
        if !(lo > 0.0) {
            return fail(format!("mat(s2) is not positive definite (min eigenvalue {lo:e})"));
        }
    }
    for k in 0..dims.k {
        let b = blocks.s4_block(k)?;
        if min_eigenvalue(&b) < -PSD_TOL * max_eigenvalue(&b).max(1.0) {
            return fail(format!("curvature block of expert {k} is not positive semi-definite"));
        }
    }
    Ok(())
}

/// `θ̄(s)` for the discrete family.
pub fn solve_params_discrete(dims: LogisticDims, s: &[f64]) -> Result<LogisticParams> {
    let blocks = StatBlocks::split(dims, s)?;
    let omega = if dims.k > 1 {
        let m2 = mat_square(blocks.s2)?;
        let a = &m2 + m2.transpose();
        let rhs: Vec<f64> = blocks.s1.iter().map(|v| -v).collect();
        solve_sym_psd(&a, &rhs, "s2")?.iter().cloned().collect()
    } else {
        Vec::new()
    };
    let mut upsilon = Vec::with_capacity(dims.upsilon_len());
    for k in 0..dims.k {
        let b = blocks.s4_block(k)?;
        let a = &b + b.transpose();
        let rhs: Vec<f64> = blocks.s3_seg(k).iter().map(|v| -v).collect();
        let c = solve_sym_psd(&a, &rhs, &format!("s4[expert {k}]"))?;
        upsilon.extend(c.iter());
    }
    LogisticParams::new(dims, omega, upsilon)
}

/// `φ(θ) = [ω, vec(ωωᵀ), υ, vec(bdiag_ι(υυᵀ))]`, the last block laid out like `s4`.
pub fn phi_discrete(theta: &LogisticParams) -> Vec<f64> {
    let d = theta.dims;
    let iota = d.iota();
    let mut out = Vec::with_capacity(d.stat_len());
    out.extend_from_slice(&theta.omega);
    for &a in &theta.omega {
        out.extend(theta.omega.iter().map(|b| a * b));
    }
    out.extend_from_slice(&theta.upsilon);
    for j in 0..iota {
        for k in 0..d.k {
            let c = theta.expert_coef(k);
            out.extend(c.iter().map(|ci| ci * c[j]));
        }
    }
    out
}

/// Initial statistic solving to `θ = 0`: `s₂ = ½vec(I)`, every `s₄` block `½I`.
pub fn canonical_initial_stats_discrete(dims: LogisticDims) -> Vec<f64> {
    let g = dims.omega_len();
    let iota = dims.iota();
    let mut out = vec![0.0; g];
    for i in 0..g {
        for j in 0..g {
            out.push(if i == j { 0.5 } else { 0.0 });
        }
    }
    out.extend(std::iter::repeat_n(0.0, dims.k * iota));
    for j in 0..iota {
        for _ in 0..dims.k {
            for i in 0..iota {
                out.push(if i == j { 0.5 } else { 0.0 });
            }
        }
    }
    out
}

/// Gradient of [`nll_discrete`] with respect to `[ω, υ]`.
pub fn nll_discrete_gradient(theta: &LogisticParams, sample: &Sample) -> Result<Vec<f64>> {
    let d = theta.dims;
    let y = theta.check_y(sample)?;
    let tau = responsibilities_discrete(theta, sample)?;
    let g = gating_probs(theta, &sample.x)?;
    let x_hat = gating_features(&sample.x, d.dw);
    let u = expert_features(&sample.x, d.dv);
    let mut out = Vec::with_capacity(d.param_len());
    for k in 0..d.k - 1 {
        out.extend(x_hat.iter().map(|v| (g[k] - tau[k]) * v));
    }
    for k in 0..d.k {
        let e = expert_log_probs(theta.expert_coef(k), &u, d.m)?;
        for m in 0..d.m - 1 {
            let ind = if m + 1 == y { 1.0 } else { 0.0 };
            let c = tau[k] * (e[m].exp() - ind);
            out.extend(u.iter().map(|v| c * v));
        }
    }
    Ok(out)
}

/// The multinomial-logistic MoE surrogate family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFamily {
    pub dims: LogisticDims,
    pub epsilon_star: f64,
}

impl LogisticFamily {
    pub fn new(dims: LogisticDims, epsilon_star: f64) -> Result<Self> {
        dims.validate()?;
        if !(epsilon_star > 0.0 && epsilon_star.is_finite()) {
            return Err(Error::param(format!("epsilon_star must be positive, got {epsilon_star}")));
        }
        Ok(Self { dims, epsilon_star })
    }
}

impl SurrogateFamily for LogisticFamily {
    type Params = LogisticParams;

    fn stat_len(&self) -> usize {
        self.dims.stat_len()
    }

    fn suff_stat(&self, theta: &LogisticParams, sample: &Sample) -> Result<Vec<f64>> {
        suff_stat_discrete(theta, sample, self.epsilon_star)
    }

    fn solve(&self, s: &[f64]) -> Result<LogisticParams> {
        solve_params_discrete(self.dims, s)
    }

    fn check_admissible(&self, s: &[f64]) -> Result<()> {
        check_admissible_discrete(self.dims, s)
    }

    fn loss(&self, theta: &LogisticParams, sample: &Sample) -> Result<f64> {
        nll_discrete(theta, sample)
    }

    fn surrogate_loss(&self, theta: &LogisticParams, sample: &Sample, anchor: &LogisticParams) -> Result<f64> {
        surrogate_loss_discrete(theta, sample, anchor, self.epsilon_star)
    }

    fn phi(&self, theta: &LogisticParams) -> Vec<f64> {
        phi_discrete(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::bdiag_extract;

    fn dims(k: usize, m: usize, p: usize, dw: usize, dv: usize) -> LogisticDims {
        LogisticDims::new(k, m, p, dw, dv).unwrap()
    }

    fn example() -> LogisticParams {
        let d = dims(3, 3, 2, 1, 1);
        LogisticParams::new(
            d,
            (0..d.omega_len()).map(|i| (i as f64 * 0.7).cos()).collect(),
            (0..d.upsilon_len()).map(|i| (i as f64 * 0.31).sin() * 1.5).collect(),
        )
        .unwrap()
    }

    #[test]
    fn expert_prob_examples() {
        let d = dims(1, 4, 1, 0, 1);
        for p in expert_probs(&vec![0.0; d.iota()], &[0.3], &d).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let d2 = dims(1, 2, 1, 0, 0);
        assert_eq!(expert_probs(&[0.0], &[5.0], &d2).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn nll_examples() {
        let d = dims(1, 2, 1, 0, 0);
        let t = LogisticParams::zeros(d);
        let v = nll_discrete(&t, &Sample::class(vec![0.4], 1)).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(nll_discrete(&t, &Sample::class(vec![0.4], 3)).is_err());
        assert!(nll_discrete(&t, &Sample::class(vec![0.4], 0)).is_err());
    }

    #[test]
    fn nll_matches_naive_sum() {
        let t = example();
        let x = [0.6, -0.25];
        let g = gating_probs(&t, &x).unwrap();
        for y in 1..=3 {
            let mut total = 0.0;
            for k in 0..3 {
                total += g[k] * expert_probs(t.expert_coef(k), &x, &t.dims).unwrap()[y - 1];
            }
            let v = nll_discrete(&t, &Sample::class(x.to_vec(), y)).unwrap();
            assert!((v + total.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn tangency() {
        let t = example();
        for y in 1..=3 {
            let z = Sample::class(vec![-0.3, 0.8], y);
            let a = surrogate_loss_discrete(&t, &z, &t, 1e-6).unwrap();
            assert!((a - nll_discrete(&t, &z).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_class_has_no_indicator() {
        let d = dims(2, 2, 1, 0, 0);
        let t = LogisticParams::zeros(d);
        let z = Sample::class(vec![0.5], 2);
        let s = suff_stat_discrete(&t, &z, 1e-6).unwrap();
        let b = StatBlocks::split(d, &s).unwrap();
        // c = 0, e = ½, so ∇ē − B c = ½ u with u = [1]
        for k in 0..2 {
            assert!((b.s3_seg(k)[0] - 0.5 * 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_small_instance() {
        // K=2, M=2, P=1, D_V=0, D_W=1
        let d = dims(2, 2, 1, 1, 0);
        let t = LogisticParams::new(d, vec![0.2, -0.4], vec![0.3, -0.6]).unwrap();
        let x = 0.5;
        let z = Sample::class(vec![x], 1);
        let s = suff_stat_discrete(&t, &z, 1e-6).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let w = 0.2 + -0.4 * x;
        let g1 = sig(w);
        let e = [sig(0.3), sig(-0.6)];
        let joint = [g1 * e[0], (1.0 - g1) * e[1]];
        let tau = [joint[0] / (joint[0] + joint[1]), joint[1] / (joint[0] + joint[1])];
        let x_hat = [1.0, x];
        let bgate = |i: usize, j: usize| 0.25 * x_hat[i] * x_hat[j] + if i == j { 1e-6 } else { 0.0 };
        let om = [0.2, -0.4];
        let mut expect = Vec::new();
        for i in 0..2 {
            let bo = bgate(i, 0) * om[0] + bgate(i, 1) * om[1];
            expect.push(-tau[0] * x_hat[i] + g1 * x_hat[i] - bo);
        }
        for j in 0..2 {
            for i in 0..2 {
                expect.push(0.5 * bgate(i, j));
            }
        }
        let bm = 0.25 + 1e-6;
        let c = [0.3, -0.6];
        for k in 0..2 {
            expect.push(-tau[k] + tau[k] * (e[k] - bm * c[k]));
        }
        for k in 0..2 {
            expect.push(0.5 * tau[k] * bm);
        }
        assert_eq!(s.len(), expect.len());
        for (a, b) in s.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn solve_examples() {
        let d = dims(2, 3, 1, 0, 1);
        let mut s = canonical_initial_stats_discrete(d);
        let t = solve_params_discrete(d, &s).unwrap();
        assert!(t.omega.iter().all(|v| *v == 0.0));
        let off = d.stat_blocks()[0] + d.stat_blocks()[1];
        for i in 0..d.stat_blocks()[2] {
            s[off + i] = 0.1 * i as f64 - 0.2;
        }
        let t = solve_params_discrete(d, &s).unwrap();
        for i in 0..d.upsilon_len() {
            assert!((t.upsilon[i] + s[off + i]).abs() < 1e-14);
        }
    }

    #[test]
    fn s4_layout_matches_stacked_blocks() {
        let t = example();
        let s = suff_stat_discrete(&t, &Sample::class(vec![0.1, 0.9], 2), 1e-6).unwrap();
        let b = StatBlocks::split(t.dims, &s).unwrap();
        let iota = t.dims.iota();
        let full = crate::linalg::bdiag_inverse(&mat_of(b.s4, t.dims.k * iota, iota).unwrap(), iota).unwrap();
        let back = bdiag_extract(&full, iota).unwrap();
        assert_eq!(back.as_slice(), b.s4);
        for k in 0..t.dims.k {
            assert!(min_eigenvalue(&b.s4_block(k).unwrap()) > 0.0);
        }
    }

    #[test]
    fn surrogate_decomposes_over_phi() {
        let anchor = example();
        let z = Sample::class(vec![0.2, -0.7], 2);
        let sbar = suff_stat_discrete(&anchor, &z, 1e-6).unwrap();
        let offset = |t: &LogisticParams| {
            let p = phi_discrete(t);
            surrogate_loss_discrete(t, &z, &anchor, 1e-6).unwrap() - sbar.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>()
        };
        let c0 = offset(&anchor);
        let mut other = anchor.clone();
        other.omega.iter_mut().for_each(|v| *v -= 0.3);
        other.upsilon.iter_mut().for_each(|v| *v *= 0.4);
        assert!((offset(&other) - c0).abs() < 1e-10);
    }

    #[test]
    fn uniform_gating_gradient_vanishes() {
        let d = dims(2, 2, 1, 0, 0);
        let t = LogisticParams::zeros(d);
        let g = nll_discrete_gradient(&t, &Sample::class(vec![0.3], 1)).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let t = example();
        assert_eq!(LogisticParams::from_json_slice(t.to_json().as_bytes()).unwrap(), t);
        assert!(LogisticParams::from_json_slice(br#"{"dims":{"K":1,"M":1,"P":1,"D_W":0,"D_V":0},"omega":[],"upsilon":[]}"#).is_err());
    }
}
