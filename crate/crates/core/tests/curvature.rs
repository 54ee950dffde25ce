use mmoe::linalg;
use mmoe_testkit::{checks, oracle};

#[test]
fn bounds_dominate_over_random_draws() {
    let rep = checks::curvature_bounds(1000, 21);
    assert!(rep.max_hessian_excess <= 1e-10, "{rep:?}");
    assert!(rep.min_corrected_margin >= -1e-12, "{rep:?}");
    assert!(rep.min_classic_margin >= -1e-12, "{rep:?}");
}

#[test]
fn oracle_hessian_matches_gradient_differences() {
    let x_hat = oracle::gate_features(&[0.7, -1.3], 1);
    let omega = [0.4, -1.0, 0.3, 0.8, -0.2, 0.5, 1.1, -0.6];
    let hess = oracle::gating_hessian(&omega, &x_hat, 3);
    for i in 0..omega.len() {
        let grad = |w: &[f64]| {
            let z = oracle::lse(&oracle::scores(w, &x_hat, 3));
            let probe = |j: usize| {
                let mut v = w.to_vec();
                v[j] += 1e-6;
                (oracle::lse(&oracle::scores(&v, &x_hat, 3)) - z) / 1e-6
            };
            probe(i)
        };
        let col = oracle::central_gradient(grad, &omega, 1e-4);
        for j in 0..omega.len() {
            assert!((col[j] - hess[(i, j)]).abs() < 1e-4, "({i},{j}): {} vs {}", col[j], hess[(i, j)]);
        }
    }
}

#[test]
fn classic_bound_is_tight_at_uniform() {
    let n = 4;
    let pi = vec![0.25; n];
    let cov = nalgebra::DMatrix::from_fn(n, n, |i, j| if i == j { pi[i] - pi[i] * pi[j] } else { -pi[i] * pi[j] });
    let gap = linalg::bohning_classic_bound(n) - cov;
    assert!(linalg::min_eigenvalue(&gap).abs() < 1e-12);
}
