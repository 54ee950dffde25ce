//! Polynomial feature maps shared by both model families.

/// Gating features `x̂ = [x₁⁰..x₁^D, …, x_P⁰..x_P^D]` (covariate-major, degree fastest).
pub fn gating_features(x: &[f64], degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * (degree + 1));
    for &xp in x {
        let mut pow = 1.0;
        for _ in 0..=degree {
            out.push(pow);
            pow *= xp;
        }
    }
    out
}

/// Expert-mean features `r = vec([x⁰, x, …, x^D])` (degree-major, covariate fastest).
pub fn expert_features(x: &[f64], degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * (degree + 1));
    let mut pows = vec![1.0; x.len()];
    for _ in 0..=degree {
        out.extend_from_slice(&pows);
        for (p, &xp) in pows.iter_mut().zip(x) {
            *p *= xp;
        }
    }
    out
}

/// `ξ = τ_{1:K−1} ⊗ x̂`, the responsibility-weighted gating features.
pub fn weighted_gating_features(tau: &[f64], x_hat: &[f64]) -> Vec<f64> {
    let k1 = tau.len().saturating_sub(1);
    crate::linalg::kron_vec(&tau[..k1], x_hat)
}
