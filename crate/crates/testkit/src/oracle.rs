//! Straight-line reference formulas and numeric minimizers.

use mmoe::gaussian::{GaussianDims, GaussianParams};
use mmoe::logistic::{LogisticDims, LogisticParams};
use nalgebra::DMatrix;

pub fn lse(a: &[f64]) -> f64 {
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Gating features: entry `p(D+1) + d` is `x_p^d`.
pub fn gate_features(x: &[f64], degree: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() * (degree + 1)];
    for (p, xp) in x.iter().enumerate() {
        for d in 0..=degree {
            out[p * (degree + 1) + d] = xp.powi(d as i32);
        }
    }
    out
}

/// Expert features: entry `dP + p` is `x_p^d`.
pub fn expert_features(x: &[f64], degree: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n * (degree + 1)];
    for d in 0..=degree {
        for (p, xp) in x.iter().enumerate() {
            out[d * n + p] = xp.powi(d as i32);
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax scores with the reference block last.
pub fn scores(coef: &[f64], features: &[f64], blocks: usize) -> Vec<f64> {
    let f = features.len();
    let mut w: Vec<f64> = (0..blocks - 1).map(|k| dot(&coef[k * f..(k + 1) * f], features)).collect();
    w.push(0.0);
    w
}

pub fn gaussian_nll(theta: &GaussianParams, x: &[f64], y: &[f64]) -> f64 {
    let d = theta.dims;
    let w = scores(&theta.omega, &gate_features(x, d.dw), d.k);
    let z = lse(&w);
    let r = expert_features(x, d.dv);
    let nr = r.len();
    let terms: Vec<f64> = (0..d.k)
        .map(|k| {
            let mut t = w[k] - z;
            for q in 0..d.q {
                let i = k * d.q + q;
                let mu = dot(&theta.upsilon[i * nr..(i + 1) * nr], &r);
                let s2 = theta.sigma2[i];
                t += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (y[q] - mu).powi(2) / (2.0 * s2);
            }
            t
        })
        .collect();
    -lse(&terms)
}

pub fn logistic_nll(theta: &LogisticParams, x: &[f64], y: usize) -> f64 {
    let d = theta.dims;
    let w = scores(&theta.omega, &gate_features(x, d.dw), d.k);
    let z = lse(&w);
    let u = expert_features(x, d.dv);
    let iota = (d.m - 1) * u.len();
    let terms: Vec<f64> = (0..d.k)
        .map(|k| {
            let v = scores(&theta.upsilon[k * iota..(k + 1) * iota], &u, d.m);
            w[k] - z + v[y - 1] - lse(&v)
        })
        .collect();
    -lse(&terms)
}

/// `∇²ḡ(ω) = (diag ĝ − ĝĝᵀ) ⊗ x̂x̂ᵀ` over the free blocks.
pub fn gating_hessian(omega: &[f64], x_hat: &[f64], blocks: usize) -> DMatrix<f64> {
    let w = scores(omega, x_hat, blocks);
    let z = lse(&w);
    let g: Vec<f64> = w.iter().map(|v| (v - z).exp()).collect();
    let f = x_hat.len();
    let n = (blocks - 1) * f;
    DMatrix::from_fn(n, n, |a, b| {
        let (k, i) = (a / f, a % f);
        let (l, j) = (b / f, b % f);
        let c = if k == l { g[k] - g[k] * g[l] } else { -g[k] * g[l] };
        c * x_hat[i] * x_hat[j]
    })
}

/// `h(s; θ)` for the Gaussian family, with `σ²` given on the log scale.
pub fn gaussian_h(dims: GaussianDims, s: &[f64], omega: &[f64], upsilon: &[f64], log_sigma2: &[f64]) -> f64 {
    let g = dims.omega_len();
    let kq = dims.k * dims.q;
    let r = dims.expert_features();
    let (s1, rest) = s.split_at(g);
    let (s2, rest) = rest.split_at(g * g);
    let (s3, rest) = rest.split_at(kq);
    let (s4, rest) = rest.split_at(kq * r);
    let (s5, s6) = rest.split_at(kq * r * r);
    let mut h = dot(s1, omega);
    for i in 0..g {
        for j in 0..g {
            h += s2[j * g + i] * omega[i] * omega[j];
        }
    }
    for i in 0..kq {
        let ups = &upsilon[i * r..(i + 1) * r];
        let var = log_sigma2[i].exp();
        let mut quad = 0.0;
        for a in 0..r {
            for b in 0..r {
                quad += s5[i * r * r + a * r + b] * ups[a] * ups[b];
            }
        }
        h += 0.5 * ((s3[i] + dot(&s4[i * r..(i + 1) * r], ups) + quad) / var + s6[i] * log_sigma2[i]);
    }
    h
}

/// `h(s; θ)` for the logistic family.
pub fn logistic_h(dims: LogisticDims, s: &[f64], omega: &[f64], upsilon: &[f64]) -> f64 {
    let g = dims.omega_len();
    let iota = (dims.m - 1) * dims.p * (dims.dv + 1);
    let rows = dims.k * iota;
    let (s1, rest) = s.split_at(g);
    let (s2, rest) = rest.split_at(g * g);
    let (s3, s4) = rest.split_at(rows);
    let mut h = dot(s1, omega) + dot(s3, upsilon);
    for i in 0..g {
        for j in 0..g {
            h += s2[j * g + i] * omega[i] * omega[j];
        }
    }
    for k in 0..dims.k {
        let c = &upsilon[k * iota..(k + 1) * iota];
        for i in 0..iota {
            for j in 0..iota {
                h += s4[j * rows + k * iota + i] * c[i] * c[j];
            }
        }
    }
    h
}

/// Golden-section search for a unimodal `f` on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iterations {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic coordinate descent.
///
/// Coordinates flagged in `quadratic` take exact parabolic steps through
/// three points; the rest take a golden-section step on `[-30, 30]`.
pub fn coordinate_descent(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, quadratic: &[bool], max_sweeps: usize) -> Vec<f64> {
    let mut x = x0;
    for _ in 0..max_sweeps {
        let mut moved: f64 = 0.0;
        for i in 0..x.len() {
            let old = x[i];
            if quadratic[i] {
                let mut probe = x.clone();
                let f0 = f(&probe);
                probe[i] = old + 1.0;
                let fp = f(&probe);
                probe[i] = old - 1.0;
                let fm = f(&probe);
                let curv = 0.5 * (fp + fm - 2.0 * f0);
                if curv > 0.0 {
                    x[i] = old - 0.25 * (fp - fm) / curv;
                }
                moved = moved.max((x[i] - old).abs());
            } else {
                let mut probe = x.clone();
                let mut line = |t: f64| {
                    probe[i] = t;
                    f(&probe)
                };
                let mut t = golden_section(&mut line, -30.0, 30.0, 120);
                // Newton polish on central differences
                for _ in 0..4 {
                    let (h1, h2) = (1e-4, 1e-3);
                    let d1 = (line(t + h1) - line(t - h1)) / (2.0 * h1);
                    let d2 = (line(t + h2) + line(t - h2) - 2.0 * line(t)) / (h2 * h2);
                    if d2 > 0.0 {
                        t -= d1 / d2;
                    }
                }
                x[i] = t;
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    x
}

/// Central differences with step `h`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
