//! Constrained softmax shared by the gating network and the logistic experts.
//!
//! The last of `K` blocks is pinned to zero, so a coefficient vector holds
//! `K−1` blocks of equal length laid out block-major.

use crate::error::{Error, Result};

/// Stable `log Σ exp(a_i)`; `−∞` for an empty slice.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Scores `w_k = ω_kᵀ x̂` for `k < K` followed by the reference score `0`.
pub fn logits(coef: &[f64], features: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::param("number of blocks must be positive"));
    }
    let f = features.len();
    if coef.len() != (k - 1) * f {
        return Err(Error::shape(format!(
            "coefficient vector has length {}, expected {}",
            coef.len(),
            (k - 1) * f
        )));
    }
    let mut out: Vec<f64> = coef
        .chunks(f.max(1))
        .take(k - 1)
        .map(|block| block.iter().zip(features).map(|(a, b)| a * b).sum())
        .collect();
    out.resize(k - 1, 0.0);
    out.push(0.0);
    Ok(out)
}

/// Log-probabilities `log g_k = w_k − ḡ`.
pub fn log_probs_from_logits(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|w| w - lse).collect()
}

/// Probabilities from scores; entries sum to one.
pub fn probs_from_logits(logits: &[f64]) -> Vec<f64> {
    log_probs_from_logits(logits).into_iter().map(f64::exp).collect()
}

/// `ḡ(ω) = log(1 + Σ_{k<K} exp w_k)`.
pub fn log_partition(coef: &[f64], features: &[f64], k: usize) -> Result<f64> {
    Ok(log_sum_exp(&logits(coef, features, k)?))
}

/// `∇ḡ(ω) = ĝ ⊗ x̂`, with `ĝ` the first `K−1` probabilities.
pub fn log_partition_grad(coef: &[f64], features: &[f64], k: usize) -> Result<Vec<f64>> {
    let p = probs_from_logits(&logits(coef, features, k)?);
    Ok(crate::linalg::kron_vec(&p[..k - 1], features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_edge_cases() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn zero_coefficients_are_uniform() {
        let l = logits(&[0.0; 6], &[1.0, 0.3, -0.2], 3).unwrap();
        for p in probs_from_logits(&l) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_value_for_two_blocks() {
        let l = logits(&[8.0], &[1.0], 2).unwrap();
        let p = probs_from_logits(&l);
        let s = 1.0 / (1.0 + (-8.0f64).exp());
        assert!((p[0] - s).abs() < 1e-15);
        assert!((p[0] - 0.999665).abs() < 1e-6);
        assert!((p[1] - 0.000335).abs() < 1e-6);
    }

    #[test]
    fn shift_changes_probabilities() {
        // adding a constant to every stored block is not a symmetry once the reference block is pinned
        let x = [1.0, 0.5];
        let p0 = probs_from_logits(&logits(&[0.2, 0.1, -0.3, 0.4], &x, 3).unwrap());
        let p1 = probs_from_logits(&logits(&[1.2, 0.1, 0.7, 0.4], &x, 3).unwrap());
        assert!((p0[0] - p1[0]).abs() > 1e-3);
        // explicit unconstrained softmax with a zero last block agrees
        let w = [0.2 + 0.05, -0.3 + 0.2, 0.0];
        let z: f64 = w.iter().map(|v: &f64| v.exp()).sum();
        for (a, b) in p0.iter().zip(w.iter()) {
            assert!((a - b.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let coef = [0.3, -0.7, 1.1, 0.2];
        let x = [1.0, -0.4];
        let g = log_partition_grad(&coef, &x, 3).unwrap();
        let h = 1e-6;
        for i in 0..coef.len() {
            let mut a = coef;
            let mut b = coef;
            a[i] += h;
            b[i] -= h;
            let fd = (log_partition(&a, &x, 3).unwrap() - log_partition(&b, &x, 3).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(logits(&[1.0], &[1.0, 2.0], 2).is_err());
        assert!(logits(&[], &[1.0], 0).is_err());
        assert_eq!(logits(&[], &[1.0], 1).unwrap(), vec![0.0]);
    }
}
