//! Streaming gradient baselines: SGD, Adam, AdamW, RMSProp and a Sophia-style
//! clipped diagonal second-order method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianFamily, GaussianParams};
use crate::logistic::{self, LogisticFamily, LogisticParams};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Adam,
    AdamW,
    RmsProp,
    Sophia,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sgd, Method::Adam, Method::AdamW, Method::RmsProp, Method::Sophia];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Adam => "adam",
            Method::AdamW => "adamw",
            Method::RmsProp => "rmsprop",
            Method::Sophia => "sophia",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::arg(format!("unknown optimizer '{s}'")))
    }
}

/// Hyperparameters of one baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub hessian_update_period: usize,
}

impl OptimizerConfig {
    /// Defaults: `lr = 0.01` for the Adam family and Sophia, `0.05` for SGD and RMSProp.
    pub fn default_for(method: Method) -> Self {
        let base = Self {
            method,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            rho: 1.0,
            hessian_update_period: 10,
        };
        match method {
            Method::Sgd => Self { learning_rate: 0.05, beta1: 0.0, beta2: 0.0, ..base },
            Method::Adam => base,
            Method::AdamW => Self { weight_decay: 0.01, ..base },
            Method::RmsProp => Self { learning_rate: 0.05, beta1: 0.0, beta2: 0.99, ..base },
            Method::Sophia => Self { beta1: 0.965, beta2: 0.99, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(format!("{name} = {b} not in [0,1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::param(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::param(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::param(format!("rho must be positive, got {}", self.rho)));
        }
        if self.hessian_update_period == 0 {
            return Err(Error::param("hessian_update_period must be positive"));
        }
        Ok(())
    }
}

/// Moment buffers carried between steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        Self { step: 0, m: vec![0.0; dim], v: vec![0.0; dim] }
    }
}

/// Applies one update of `config.method` in place.
pub fn optimizer_step(state: &mut OptimizerState, theta: &mut [f64], grad: &[f64], config: &OptimizerConfig) -> Result<()> {
    if grad.len() != theta.len() || state.m.len() != theta.len() || state.v.len() != theta.len() {
        return Err(Error::shape(format!(
            "optimizer dimensions disagree: theta {}, grad {}, state {}",
            theta.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric { iteration: t, message: "gradient is not finite".into() });
    }
    let c = config;
    match c.method {
        Method::Sgd => {
            for (th, g) in theta.iter_mut().zip(grad) {
                *th -= c.learning_rate * g;
            }
        }
        Method::Adam | Method::AdamW => {
            let bc1 = 1.0 - c.beta1.powi(t as i32);
            let bc2 = 1.0 - c.beta2.powi(t as i32);
            let decay = if c.method == Method::AdamW { c.weight_decay } else { 0.0 };
            for i in 0..theta.len() {
                state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
                state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                let mh = state.m[i] / bc1;
                let vh = state.v[i] / bc2;
                theta[i] -= c.learning_rate * (mh / (vh.sqrt() + c.eps) + decay * theta[i]);
            }
        }
        Method::RmsProp => {
            for i in 0..theta.len() {
                state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                theta[i] -= c.learning_rate * grad[i] / (state.v[i].sqrt() + c.eps);
            }
        }
        Method::Sophia => {
            let refresh = (t - 1).is_multiple_of(c.hessian_update_period);
            for i in 0..theta.len() {
                state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
                if refresh {
                    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                }
                let ratio = state.m[i] / state.v[i].max(c.eps);
                theta[i] -= c.learning_rate * (ratio.clamp(-c.rho, c.rho) + c.weight_decay * theta[i]);
            }
        }
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric { iteration: t, message: format!("parameter {i} diverged") });
    }
    Ok(())
}

/// A model whose per-sample loss can be differentiated in a flat parameterization.
pub trait GradientModel {
    type Params: Clone;

    fn flatten(&self, theta: &Self::Params) -> Vec<f64>;
    fn unflatten(&self, v: &[f64]) -> Result<Self::Params>;
    fn gradient(&self, theta: &Self::Params, sample: &Sample) -> Result<Vec<f64>>;
}

impl GradientModel for GaussianFamily {
    type Params = GaussianParams;

    /// `[ω, Υ, log σ²]`.
    fn flatten(&self, theta: &GaussianParams) -> Vec<f64> {
        theta.to_unconstrained()
    }

    fn unflatten(&self, v: &[f64]) -> Result<GaussianParams> {
        GaussianParams::from_unconstrained(self.dims, v)
    }

    fn gradient(&self, theta: &GaussianParams, sample: &Sample) -> Result<Vec<f64>> {
        gaussian::nll_gradient(theta, sample)
    }
}

impl GradientModel for LogisticFamily {
    type Params = LogisticParams;

    fn flatten(&self, theta: &LogisticParams) -> Vec<f64> {
        theta.to_flat()
    }

    fn unflatten(&self, v: &[f64]) -> Result<LogisticParams> {
        LogisticParams::from_flat(self.dims, v)
    }

    fn gradient(&self, theta: &LogisticParams, sample: &Sample) -> Result<Vec<f64>> {
        logistic::nll_discrete_gradient(theta, sample)
    }
}

/// One pass of per-sample gradient steps; `hook(n, θ_n)` runs after every step.
pub fn run_baseline<'a, M, I, H>(model: &M, samples: I, config: &OptimizerConfig, init: &M::Params, mut hook: H) -> Result<M::Params>
where
    M: GradientModel,
    I: IntoIterator<Item = &'a Sample>,
    H: FnMut(usize, &M::Params),
{
    config.validate()?;
    let mut flat = model.flatten(init);
    let mut state = OptimizerState::new(flat.len());
    let mut theta = init.clone();
    for sample in samples {
        let g = model.gradient(&theta, sample)?;
        optimizer_step(&mut state, &mut flat, &g, config)?;
        theta = model.unflatten(&flat).map_err(|e| match e {
            Error::Parameter(message) => Error::Numeric { iteration: state.step, message },
            other => other,
        })?;
        hook(state.step, &theta);
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianDims;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for method in Method::ALL {
            let cfg = OptimizerConfig { weight_decay: 0.0, ..OptimizerConfig::default_for(method) };
            let mut st = OptimizerState::new(3);
            let mut th = vec![1.0, -2.0, 0.5];
            for _ in 0..5 {
                optimizer_step(&mut st, &mut th, &[0.0; 3], &cfg).unwrap();
            }
            assert_eq!(th, vec![1.0, -2.0, 0.5], "{method:?}");
        }
    }

    #[test]
    fn sgd_definition() {
        let cfg = OptimizerConfig { learning_rate: 0.1, ..OptimizerConfig::default_for(Method::Sgd) };
        let mut st = OptimizerState::new(2);
        let mut th = vec![1.0, 1.0];
        optimizer_step(&mut st, &mut th, &[2.0, -4.0], &cfg).unwrap();
        assert!((th[0] - 0.8).abs() < 1e-15 && (th[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_by_hand() {
        let cfg = OptimizerConfig::default_for(Method::Adam);
        let mut st = OptimizerState::new(1);
        let mut th = vec![0.0];
        let g = 0.3;
        optimizer_step(&mut st, &mut th, &[g], &cfg).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps)
        let expect = -0.01 * g / (g.abs() + 1e-8);
        assert!((th[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn adaptive_methods_reduce_to_sgd() {
        let big = 1e8;
        let g = [0.4, -1.5];
        for method in [Method::Adam, Method::RmsProp] {
            let cfg = OptimizerConfig {
                method,
                learning_rate: 0.05 * big,
                beta1: 0.0,
                beta2: 0.0,
                eps: big,
                weight_decay: 0.0,
                rho: 1.0,
                hessian_update_period: 1,
            };
            let mut st = OptimizerState::new(2);
            let mut th = vec![0.0, 0.0];
            optimizer_step(&mut st, &mut th, &g, &cfg).unwrap();
            for i in 0..2 {
                assert!((th[i] + 0.05 * g[i]).abs() < 1e-8, "{method:?}");
            }
        }
    }

    #[test]
    fn sophia_clips() {
        let cfg = OptimizerConfig::default_for(Method::Sophia);
        let mut st = OptimizerState::new(1);
        let mut th = vec![0.0];
        optimizer_step(&mut st, &mut th, &[1e-3], &cfg).unwrap();
        assert!((th[0] + cfg.learning_rate * cfg.rho).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_errors() {
        let cfg = OptimizerConfig::default_for(Method::Adam);
        let mut st = OptimizerState::new(1);
        let mut th = vec![0.0];
        assert!(matches!(
            optimizer_step(&mut st, &mut th, &[f64::NAN], &cfg),
            Err(Error::Numeric { iteration: 1, .. })
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lbfgs".parse::<Method>().is_err());
    }

    #[test]
    fn sgd_recovers_sample_mean() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(1.7, 1.0).unwrap();
        let data: Vec<Sample> = (0..2000).map(|_| Sample::continuous(vec![0.0], vec![normal.sample(&mut rng)])).collect();
        let mean = data.iter().map(|z| z.continuous_y().unwrap()[0]).sum::<f64>() / data.len() as f64;
        // only the mean coordinate moves; the variance stays at 1
        let mut theta = GaussianParams::standard(GaussianDims::new(1, 1, 1, 0, 0).unwrap());
        let cfg = OptimizerConfig::default_for(Method::Sgd);
        let mut st = OptimizerState::new(1);
        // a constant step leaves O(√lr) jitter in the last iterate, so the tail is averaged
        let mut tail = crate::eval::PolyakAverager::new(1000);
        for (n, z) in data.iter().enumerate() {
            let g = gaussian::nll_gradient(&theta, z).unwrap();
            optimizer_step(&mut st, &mut theta.upsilon, &g[..1], &cfg).unwrap();
            tail.observe(n + 1, &theta.upsilon).unwrap();
        }
        let est = tail.mean().unwrap()[0];
        assert!((est - mean).abs() < 0.1, "{est} vs {mean}");
    }
}
