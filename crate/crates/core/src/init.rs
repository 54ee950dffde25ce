//! Initializers: perturbed truth, k-means with per-cluster least squares,
//! a multinomial-logistic warm start for the gate, and the warm-up statistic.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{expert_features, gating_features};
use crate::gating;
use crate::gaussian::{GaussianDims, GaussianParams};
use crate::linalg::{build_b, solve_sym_psd, CurvatureBoundSpec};
use crate::logistic::{LogisticDims, LogisticParams};
use crate::mm::SurrogateFamily;
use crate::sample::Sample;

/// Smallest variance a least-squares fit may report.
const MIN_INIT_VARIANCE: f64 = 1e-6;

/// Adds `scale·N(0,1)` noise to every coordinate; variance draws that would
/// not stay positive are redrawn.
pub fn perturbed_truth_init(truth: &GaussianParams, noise_scale: f64, seed: u64) -> Result<GaussianParams> {
    truth.validate()?;
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::param(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = truth.clone();
    let mut noise = || -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        noise_scale * z
    };
    for v in out.omega.iter_mut().chain(out.upsilon.iter_mut()) {
        *v += noise();
    }
    for v in out.sigma2.iter_mut() {
        let base = *v;
        let mut cand = base + noise();
        while cand <= 0.0 {
            cand = base + noise();
        }
        *v = cand;
    }
    Ok(out)
}

/// Adds `scale·N(0,1)` noise to every logistic coefficient.
pub fn perturbed_logistic_init(truth: &LogisticParams, noise_scale: f64, seed: u64) -> Result<LogisticParams> {
    truth.validate()?;
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::param(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = truth.clone();
    for v in out.omega.iter_mut().chain(out.upsilon.iter_mut()) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += noise_scale * z;
    }
    Ok(out)
}

/// Random logistic parameters with `scale·N(0,1)` entries; breaks the
/// symmetry between otherwise identical experts.
pub fn random_logistic_init(dims: LogisticDims, scale: f64, seed: u64) -> Result<LogisticParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect()
    };
    let omega = draw(dims.omega_len());
    let upsilon = draw(dims.upsilon_len());
    LogisticParams::new(dims, omega, upsilon)
}

/// Lloyd's algorithm result.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per point, in `0..K`.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub distortion: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> Option<Clustering> {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = sq_dist(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        if !changed {
            break;
        }
    }
    let distortion = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    Some(Clustering { assignment, centroids, distortion })
}

/// Best-of-`restarts` Lloyd clustering from random data-point centroids.
///
/// A restart that empties a cluster is re-seeded; after repeated failures
/// an error is returned.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    if k == 0 || points.len() < k {
        return Err(Error::arg(format!("k-means needs at least K={k} points, got {}", points.len())));
    }
    if restarts == 0 {
        return Err(Error::arg("restarts must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    let mut done = 0;
    let mut attempts = 0;
    while done < restarts {
        attempts += 1;
        if attempts > 20 * restarts {
            break;
        }
        let idx = sample_indices(&mut rng, points.len(), k);
        let centroids = idx.iter().map(|i| points[i].clone()).collect();
        let Some(run) = lloyd(points, centroids, 300) else {
            continue;
        };
        done += 1;
        if best.as_ref().is_none_or(|b| run.distortion < b.distortion) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::arg("k-means could not produce non-empty clusters"))
}

/// Concatenated `(x, y)` vectors, each coordinate standardized over the batch.
pub fn standardized_joint(batch: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(batch.len());
    for z in batch {
        let mut v = z.x.clone();
        v.extend_from_slice(z.continuous_y()?);
        rows.push(v);
    }
    let dim = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    for j in 0..dim {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in rows.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }
    Ok(rows)
}

/// Least-squares coefficients and residual variances of `y` on `r` features.
fn least_squares(batch: &[&Sample], dims: &GaussianDims) -> Result<(Vec<f64>, Vec<f64>)> {
    let rlen = dims.expert_features();
    let mut gram = DMatrix::<f64>::zeros(rlen, rlen);
    let mut rhs = vec![vec![0.0; rlen]; dims.q];
    let feats: Vec<Vec<f64>> = batch.iter().map(|z| expert_features(&z.x, dims.dv)).collect();
    for (z, r) in batch.iter().zip(&feats) {
        let rv = DVector::from_column_slice(r);
        gram += &rv * rv.transpose();
        let y = z.continuous_y()?;
        for q in 0..dims.q {
            for j in 0..rlen {
                rhs[q][j] += y[q] * r[j];
            }
        }
    }
    let mut coef = Vec::with_capacity(dims.q * rlen);
    let mut var = Vec::with_capacity(dims.q);
    for q in 0..dims.q {
        let c: Vec<f64> = solve_sym_psd(&gram, &rhs[q], "least squares")?.iter().cloned().collect();
        let rss: f64 = batch
            .iter()
            .zip(&feats)
            .map(|(z, r)| {
                let fit: f64 = r.iter().zip(&c).map(|(a, b)| a * b).sum();
                (z.continuous_y().map(|y| y[q]).unwrap_or(0.0) - fit).powi(2)
            })
            .sum();
        var.push((rss / batch.len() as f64).max(MIN_INIT_VARIANCE));
        coef.extend(c);
    }
    Ok((coef, var))
}

/// How the gate is initialized after clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateInit {
    #[default]
    Zero,
    /// Multinomial-logistic fit of the cluster labels.
    WarmStart,
}

/// Clusters the standardized joint `(x, y)` vectors, fits each cluster's
/// expert by least squares and sets the gate per `gate`.
pub fn kmeans_init(
    batch: &[Sample],
    dims: GaussianDims,
    restarts: usize,
    seed: u64,
    gate: GateInit,
    epsilon_star: f64,
) -> Result<GaussianParams> {
    dims.validate()?;
    if batch.len() < dims.k {
        return Err(Error::arg(format!("batch of {} is smaller than K={}", batch.len(), dims.k)));
    }
    let points = standardized_joint(batch)?;
    let clusters = kmeans(&points, dims.k, restarts, seed)?;
    let mut upsilon = Vec::with_capacity(dims.upsilon_len());
    let mut sigma2 = Vec::with_capacity(dims.sigma2_len());
    for c in 0..dims.k {
        let members: Vec<&Sample> = batch
            .iter()
            .zip(&clusters.assignment)
            .filter(|(_, &a)| a == c)
            .map(|(z, _)| z)
            .collect();
        let (coef, var) = least_squares(&members, &dims)?;
        upsilon.extend(coef);
        sigma2.extend(var);
    }
    let omega = match gate {
        GateInit::Zero => vec![0.0; dims.omega_len()],
        GateInit::WarmStart if dims.k > 1 => {
            let labels: Vec<usize> = clusters.assignment.iter().map(|a| a + 1).collect();
            let xs: Vec<Vec<f64>> = batch.iter().map(|z| z.x.clone()).collect();
            warm_start_omega(&xs, &labels, dims.k, dims.dw, epsilon_star, 100)?.omega
        }
        GateInit::WarmStart => Vec::new(),
    };
    GaussianParams::new(dims, omega, upsilon, sigma2)
}

/// Gate coefficients from a multinomial-logistic fit, with the NLL after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub omega: Vec<f64>,
    pub nll_history: Vec<f64>,
}

fn label_nll(omega: &[f64], feats: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (f, &l) in feats.iter().zip(labels) {
        let lp = gating::log_probs_from_logits(&gating::logits(omega, f, k)?);
        total -= lp[l - 1];
    }
    Ok(total / feats.len() as f64)
}

/// Fits class labels `1..=K` on gating features by quadratic-bound MM
/// steps `ω ← ω − (Σ B_i)⁻¹ Σ (∇ḡ_i − ξ_i)`, class `K` as reference.
pub fn warm_start_omega(
    xs: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    dw: usize,
    epsilon_star: f64,
    iterations: usize,
) -> Result<WarmStart> {
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::arg("covariates and labels must be non-empty and of equal length"));
    }
    if labels.iter().any(|&l| l == 0 || l > k) {
        return Err(Error::arg(format!("labels must lie in 1..={k}")));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::arg("warm start needs at least two distinct labels"));
    }
    let feats: Vec<Vec<f64>> = xs.iter().map(|x| gating_features(x, dw)).collect();
    let f = feats[0].len();
    let dim = (k - 1) * f;
    let mut curvature = DMatrix::<f64>::zeros(dim, dim);
    for x_hat in &feats {
        curvature += build_b(&CurvatureBoundSpec::new(k - 1, x_hat.clone(), epsilon_star)?)?;
    }
    let mut omega = vec![0.0; dim];
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut grad = vec![0.0; dim];
        for (x_hat, &l) in feats.iter().zip(labels) {
            let g = gating::log_partition_grad(&omega, x_hat, k)?;
            for (i, gi) in g.iter().enumerate() {
                grad[i] += gi;
            }
            if l < k {
                for (j, v) in x_hat.iter().enumerate() {
                    grad[(l - 1) * f + j] -= v;
                }
            }
        }
        let step = solve_sym_psd(&curvature, &grad, "warm start")?;
        for (w, s) in omega.iter_mut().zip(step.iter()) {
            *w -= s;
        }
        history.push(label_nll(&omega, &feats, labels, k)?);
    }
    Ok(WarmStart { omega, nll_history: history })
}

/// Mean of `S̄(θ_init; z)` over the warm-up batch, checked for admissibility.
pub fn warmup_s0<F: SurrogateFamily>(family: &F, theta_init: &F::Params, warmup: &[Sample]) -> Result<Vec<f64>> {
    if warmup.is_empty() {
        return Err(Error::arg("warm-up batch is empty"));
    }
    let mut acc = vec![0.0; family.stat_len()];
    for z in warmup {
        for (a, v) in acc.iter_mut().zip(family.suff_stat(theta_init, z)?) {
            *a += v;
        }
    }
    let n = warmup.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    family.check_admissible(&acc)?;
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::lowdim_truth;

    #[test]
    fn zero_scale_returns_truth() {
        let t = lowdim_truth();
        assert_eq!(perturbed_truth_init(&t, 0.0, 4).unwrap(), t);
        let a = perturbed_truth_init(&t, 0.005, 4).unwrap();
        assert_eq!(a, perturbed_truth_init(&t, 0.005, 4).unwrap());
        assert_ne!(a, t);
        assert!(a.to_flat().iter().zip(t.to_flat()).all(|(x, y)| (x - y).abs() < 0.05));
    }

    #[test]
    fn separated_clusters() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let e = i as f64 * 0.01;
            pts.push(vec![-5.0 + e, 0.0]);
            pts.push(vec![5.0 - e, 1.0]);
        }
        let c = kmeans(&pts, 2, 5, 1).unwrap();
        for i in 0..20 {
            assert_eq!(c.assignment[2 * i], c.assignment[0]);
            assert_eq!(c.assignment[2 * i + 1], c.assignment[1]);
        }
        assert_ne!(c.assignment[0], c.assignment[1]);
    }

    #[test]
    fn warm_start_uninformative_is_zero() {
        let xs = vec![vec![0.5], vec![0.5], vec![-0.5], vec![-0.5]];
        let labels = vec![1, 2, 1, 2];
        let w = warm_start_omega(&xs, &labels, 2, 1, 1e-6, 50).unwrap();
        assert!(w.omega.iter().all(|v| v.abs() < 1e-8));
        assert!(warm_start_omega(&xs, &[1, 1, 1, 1], 2, 1, 1e-6, 5).is_err());
    }

    #[test]
    fn warm_start_slope_sign_and_descent() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![-1.0 + i as f64 / 20.0]).collect();
        let labels: Vec<usize> = xs.iter().map(|x| if x[0] > 0.0 { 1 } else { 2 }).collect();
        let w = warm_start_omega(&xs, &labels, 2, 1, 1e-6, 60).unwrap();
        assert!(w.omega[1] > 0.0);
        for pair in w.nll_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }
}
