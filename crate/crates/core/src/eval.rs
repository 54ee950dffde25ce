//! Error metrics, Polyak averaging and regression-function error protocols.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianParams};
use crate::mm::SurrogateFamily;
use crate::sample::Sample;

/// How NRMSE is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NrmseNorm {
    /// Divide by `max(t) − min(t)`.
    #[default]
    Range,
    /// Divide by `|mean(t)|`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// `None` when every truth entry is zero.
    pub mape: Option<f64>,
    /// `None` only from the lenient parameter-space variant.
    pub nrmse: Option<f64>,
    /// Truth entries equal to zero, left out of MAPE.
    pub mape_skipped: usize,
}

/// MSE, MAPE and NRMSE over flattened sequences.
pub fn metrics(pred: &[f64], truth: &[f64], norm: NrmseNorm) -> Result<Metrics> {
    let m = metrics_lenient(pred, truth, norm)?;
    if m.nrmse.is_none() {
        return Err(Error::arg("NRMSE is undefined for a constant (or zero-mean) truth"));
    }
    Ok(m)
}

/// As [`metrics`], but reports an undefined NRMSE as `None`.
pub fn metrics_lenient(pred: &[f64], truth: &[f64], norm: NrmseNorm) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::arg(format!("prediction length {} differs from truth length {}", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::arg("metrics need at least one value"));
    }
    let n = pred.len() as f64;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mut ape = 0.0;
    let mut used = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if *t != 0.0 {
            ape += ((p - t) / t).abs();
            used += 1;
        }
    }
    let mape = (used > 0).then(|| ape / used as f64);
    let scale = match norm {
        NrmseNorm::Range => {
            let hi = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = truth.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        }
        NrmseNorm::Mean => (truth.iter().sum::<f64>() / n).abs(),
    };
    Ok(Metrics {
        mse,
        mape,
        nrmse: (scale > 0.0).then(|| mse.sqrt() / scale),
        mape_skipped: truth.len() - used,
    })
}

/// Running arithmetic mean of iterates from `N₀` on.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyakAverager {
    pub start_iteration: usize,
    count: usize,
    mean: Vec<f64>,
}

impl PolyakAverager {
    pub fn new(start_iteration: usize) -> Self {
        Self { start_iteration, count: 0, mean: Vec::new() }
    }

    /// Folds in `θ_n`; iterations before `N₀` are rejected.
    pub fn update(&mut self, iteration: usize, theta: &[f64]) -> Result<()> {
        if iteration < self.start_iteration {
            return Err(Error::State(format!(
                "averaging starts at iteration {}, got {iteration}",
                self.start_iteration
            )));
        }
        if self.count == 0 {
            self.mean = vec![0.0; theta.len()];
        } else if theta.len() != self.mean.len() {
            return Err(Error::shape("averaged vectors change length"));
        }
        self.count += 1;
        let a = 1.0 / self.count as f64;
        for (m, t) in self.mean.iter_mut().zip(theta) {
            *m += a * (t - *m);
        }
        Ok(())
    }

    /// Like [`update`](Self::update) but silently ignores iterations before `N₀`.
    pub fn observe(&mut self, iteration: usize, theta: &[f64]) -> Result<()> {
        if iteration < self.start_iteration {
            return Ok(());
        }
        self.update(iteration, theta)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The average, or `None` before the first update.
    pub fn mean(&self) -> Option<&[f64]> {
        (self.count > 0).then_some(self.mean.as_slice())
    }
}

/// Mean per-sample loss.
pub fn empirical_nll<F: SurrogateFamily>(family: &F, theta: &F::Params, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("dataset is empty"));
    }
    let mut total = 0.0;
    for z in data {
        total += family.loss(theta, z)?;
    }
    Ok(total / data.len() as f64)
}

/// Regular grid on `[lo, hi]^P` with `per_axis` points per axis.
pub fn covariate_grid(p: usize, per_axis: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if per_axis <= 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..per_axis).map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64).collect()
    };
    let mut out = vec![Vec::new()];
    for _ in 0..p {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Compares the fitted and true regression functions at the given covariates.
pub fn estimation_error(estimate: &GaussianParams, truth: &GaussianParams, points: &[Vec<f64>], norm: NrmseNorm) -> Result<Metrics> {
    let mut pred = Vec::new();
    let mut target = Vec::new();
    for x in points {
        pred.extend(gaussian::regression_mean(estimate, x)?);
        target.extend(gaussian::regression_mean(truth, x)?);
    }
    metrics(&pred, &target, norm)
}

/// Compares the fitted regression function to held-out responses.
pub fn prediction_error(estimate: &GaussianParams, test: &[Sample], norm: NrmseNorm) -> Result<Metrics> {
    let mut pred = Vec::new();
    let mut target = Vec::new();
    for z in test {
        pred.extend(gaussian::regression_mean(estimate, &z.x)?);
        target.extend_from_slice(z.continuous_y()?);
    }
    metrics(&pred, &target, norm)
}

/// Per-block parameter-space errors, after moving intercepts to a canonical slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub omega: Metrics,
    pub upsilon: Metrics,
    pub sigma2: Metrics,
}

/// Empty blocks (the gate of a single expert) report zero error.
pub fn parameter_errors(estimate: &GaussianParams, truth: &GaussianParams) -> Result<ParamErrors> {
    if estimate.dims != truth.dims {
        return Err(Error::shape("estimate and truth have different dimensions"));
    }
    let e = estimate.canonical_intercepts();
    let t = truth.canonical_intercepts();
    let block = |a: &[f64], b: &[f64]| -> Metrics {
        metrics_lenient(a, b, NrmseNorm::Range).unwrap_or(Metrics {
            mse: 0.0,
            mape: None,
            nrmse: None,
            mape_skipped: 0,
        })
    };
    Ok(ParamErrors {
        omega: block(&e.omega, &t.omega),
        upsilon: block(&e.upsilon, &t.upsilon),
        sigma2: block(&e.sigma2, &t.sigma2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let m = metrics(&[1.0, 2.0], &[1.0, 2.0], NrmseNorm::Range).unwrap();
        assert_eq!((m.mse, m.mape, m.nrmse), (0.0, Some(0.0), Some(0.0)));
        let m = metrics(&[2.0, 3.0], &[1.0, 2.0], NrmseNorm::Range).unwrap();
        assert!((m.mse - 1.0).abs() < 1e-15);
        assert!((m.mape.unwrap() - 0.75).abs() < 1e-15);
        assert!((m.nrmse.unwrap() - 1.0).abs() < 1e-15);
        assert!(metrics(&[1.0], &[1.0, 2.0], NrmseNorm::Range).is_err());
        assert!(metrics(&[1.0, 1.0], &[3.0, 3.0], NrmseNorm::Range).is_err());
        let m = metrics(&[1.0, 1.0], &[0.0, 2.0], NrmseNorm::Range).unwrap();
        assert_eq!(m.mape_skipped, 1);
        assert!((m.mape.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polyak_means() {
        let mut p = PolyakAverager::new(100);
        assert!(p.update(99, &[1.0]).is_err());
        assert!(p.mean().is_none());
        p.update(100, &[3.0, 1.0]).unwrap();
        assert_eq!(p.mean().unwrap(), &[3.0, 1.0]);
        p.update(101, &[5.0, -1.0]).unwrap();
        assert_eq!(p.mean().unwrap(), &[4.0, 0.0]);
    }

    #[test]
    fn grid_shape() {
        let g = covariate_grid(2, 3, -1.0, 1.0);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }
}
