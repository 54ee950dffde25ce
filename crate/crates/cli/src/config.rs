//! The experiment configuration document.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mmoe::baselines::{Method, OptimizerConfig};
use mmoe::datagen::CovariateLaw;
use mmoe::eval::NrmseNorm;
use mmoe::init::GateInit;
use mmoe::linalg::DEFAULT_EPSILON_STAR;
use mmoe::StepSchedule;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{config, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Gaussian,
    Logistic,
}

/// Fitted-model dimensions; `Q` applies to Gaussian models and `M` to logistic ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q", default = "one")]
    pub q: usize,
    #[serde(rename = "M", default = "two")]
    pub m: usize,
    #[serde(rename = "D_W")]
    pub dw: usize,
    #[serde(rename = "D_V")]
    pub dv: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn default_n() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// The two-expert, two-covariate Gaussian truth.
    Lowdim {
        #[serde(default = "default_n")]
        n: usize,
    },
    /// The randomized higher-dimensional Gaussian truth.
    Highdim {
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "P")]
        p: usize,
        #[serde(rename = "Q")]
        q: usize,
        #[serde(rename = "D_W")]
        dw: usize,
        #[serde(rename = "D_V")]
        dv: usize,
        #[serde(default)]
        truth_seed: u64,
        #[serde(default = "default_n")]
        n: usize,
    },
    /// The separable two-expert binary logistic truth.
    LogisticDesk {
        #[serde(default = "default_n")]
        n: usize,
    },
    /// Gaussian truth read from a parameter JSON file.
    GaussianTruth {
        path: PathBuf,
        #[serde(default = "default_n")]
        n: usize,
    },
    /// Logistic truth read from a parameter JSON file.
    LogisticTruth {
        path: PathBuf,
        #[serde(default = "default_n")]
        n: usize,
    },
    /// A dataset CSV; no truth is known.
    Csv {
        path: PathBuf,
        /// Rescale covariates and continuous responses by training-set mean and deviation.
        #[serde(default)]
        standardize: bool,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Lowdim { n: default_n() }
    }
}

impl DataSource {
    pub fn model(&self) -> Option<ModelKind> {
        match self {
            DataSource::Lowdim { .. } | DataSource::Highdim { .. } | DataSource::GaussianTruth { .. } => Some(ModelKind::Gaussian),
            DataSource::LogisticDesk { .. } | DataSource::LogisticTruth { .. } => Some(ModelKind::Logistic),
            DataSource::Csv { .. } => None,
        }
    }
}

/// The estimator run by the fit command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Mm,
    Sgd,
    Adam,
    AdamW,
    RmsProp,
    Sophia,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self.method() {
            None => "mm",
            Some(m) => m.name(),
        }
    }

    /// The gradient baseline, or `None` for MM.
    pub fn method(&self) -> Option<Method> {
        match self {
            Estimator::Mm => None,
            Estimator::Sgd => Some(Method::Sgd),
            Estimator::Adam => Some(Method::Adam),
            Estimator::AdamW => Some(Method::AdamW),
            Estimator::RmsProp => Some(Method::RmsProp),
            Estimator::Sophia => Some(Method::Sophia),
        }
    }

    pub fn from_method(m: Method) -> Self {
        match m {
            Method::Sgd => Estimator::Sgd,
            Method::Adam => Estimator::Adam,
            Method::AdamW => Estimator::AdamW,
            Method::RmsProp => Estimator::RmsProp,
            Method::Sophia => Estimator::Sophia,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub gamma0: f64,
    pub alpha: f64,
    /// `None` shifts the schedule by the warm-up size.
    pub offset: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = StepSchedule::default();
        Self { gamma0: s.gamma0, alpha: s.alpha, offset: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Truth plus Gaussian noise.
    #[default]
    Perturbed,
    /// K-means on the warm-up batch with a zero gate.
    Kmeans,
    /// K-means on the warm-up batch with a logistic fit of the cluster labels as gate.
    WarmStart,
    /// Random coefficients (logistic models only).
    Random,
}

impl InitMode {
    pub fn gate(&self) -> GateInit {
        match self {
            InitMode::WarmStart => GateInit::WarmStart,
            _ => GateInit::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub mode: InitMode,
    pub noise_scale: f64,
    pub random_scale: f64,
    pub kmeans_restarts: usize,
    pub warmup: usize,
    pub replay_warmup: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            mode: InitMode::Perturbed,
            noise_scale: 0.005,
            random_scale: 1.0,
            kmeans_restarts: 10,
            warmup: 85,
            replay_warmup: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub nll_stride: usize,
    pub snapshot_stride: usize,
    pub holdout_size: usize,
    pub bayes_samples: usize,
    pub grid_per_axis: usize,
    pub monte_carlo_points: usize,
    pub nrmse_norm: NrmseNorm,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            nll_stride: 25,
            snapshot_stride: 100,
            holdout_size: 2000,
            bayes_samples: 100_000,
            grid_per_axis: 21,
            monte_carlo_points: 2000,
            nrmse_norm: NrmseNorm::Range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub dims: Option<DimsConfig>,
    pub estimator: Estimator,
    pub schedule: ScheduleConfig,
    pub epsilon_star: f64,
    pub init: InitConfig,
    pub iterations: Option<usize>,
    pub polyak_start: usize,
    pub seeds: Vec<u64>,
    pub optimizers: Vec<Method>,
    pub optimizer_overrides: BTreeMap<Method, OptimizerConfig>,
    pub data: DataSource,
    pub covariate_law: CovariateLaw,
    pub split: f64,
    pub output_dir: PathBuf,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gaussian,
            dims: None,
            estimator: Estimator::Mm,
            schedule: ScheduleConfig::default(),
            epsilon_star: DEFAULT_EPSILON_STAR,
            init: InitConfig::default(),
            iterations: None,
            polyak_start: 100,
            seeds: vec![0],
            optimizers: Method::ALL.to_vec(),
            optimizer_overrides: BTreeMap::new(),
            data: DataSource::default(),
            covariate_law: CovariateLaw::Uniform,
            split: 0.8,
            output_dir: PathBuf::from("out"),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON config document.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(bytes).map_err(|e| HarnessError::Parse {
            what: "experiment config",
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(config(format!("split {} not in (0,1)", self.split)));
        }
        if self.seeds.is_empty() {
            return Err(config("seeds must be non-empty"));
        }
        if !(self.epsilon_star > 0.0 && self.epsilon_star.is_finite()) {
            return Err(config("epsilon_star must be positive"));
        }
        self.step_schedule()?;
        if let Some(d) = self.dims {
            if d.k == 0 || d.p == 0 || d.q == 0 {
                return Err(config("K, P and Q must be positive"));
            }
            if d.m < 2 {
                return Err(config("M must be at least 2"));
            }
        }
        if let Some(m) = self.data.model() {
            if m != self.model {
                return Err(config(format!("data source generates {m:?} data but model is {:?}", self.model)));
            }
        }
        match &self.data {
            DataSource::Lowdim { n } | DataSource::LogisticDesk { n } | DataSource::GaussianTruth { n, .. } | DataSource::LogisticTruth { n, .. } if *n < 2 => {
                return Err(config("generated sample count must be at least 2"));
            }
            DataSource::Highdim { k, p, q, n, .. } if *k == 0 || *p == 0 || *q == 0 || *n < 2 => {
                return Err(config("highdim K, P, Q must be positive and n at least 2"));
            }
            _ => {}
        }
        let i = &self.init;
        if i.warmup == 0 {
            return Err(config("warm-up size must be positive"));
        }
        if !(i.noise_scale >= 0.0 && i.noise_scale.is_finite()) || !(i.random_scale >= 0.0 && i.random_scale.is_finite()) {
            return Err(config("init scales must be nonnegative"));
        }
        if i.kmeans_restarts == 0 {
            return Err(config("kmeans_restarts must be positive"));
        }
        match (self.model, i.mode) {
            (ModelKind::Logistic, InitMode::Kmeans | InitMode::WarmStart) => {
                return Err(config("k-means initialization needs continuous responses"));
            }
            (ModelKind::Gaussian, InitMode::Random) => {
                return Err(config("random initialization is only defined for logistic models"));
            }
            _ => {}
        }
        let e = &self.eval;
        if e.nll_stride == 0 || e.snapshot_stride == 0 || e.holdout_size == 0 || e.bayes_samples == 0 || e.monte_carlo_points == 0 {
            return Err(config("evaluation strides and sample counts must be positive"));
        }
        for cfg in self.optimizer_overrides.values() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// The MM step schedule, with the offset resolved.
    pub fn step_schedule(&self) -> Result<StepSchedule> {
        let s = StepSchedule::new(self.schedule.gamma0, self.schedule.alpha)?;
        Ok(s.with_offset(self.schedule.offset.unwrap_or(self.init.warmup)))
    }

    pub fn optimizer(&self, method: Method) -> OptimizerConfig {
        self.optimizer_overrides
            .get(&method)
            .copied()
            .unwrap_or_else(|| OptimizerConfig::default_for(method))
    }
}

const DESCRIPTIONS: &[(&str, &str)] = &[
    ("model", "Model family: \"gaussian\" or \"logistic\"."),
    ("dims", "Fitted-model dimensions {K, P, Q, M, D_W, D_V}; null takes them from the generating truth."),
    ("estimator", "Estimator run by the fit command: \"mm\" or a baseline name."),
    ("schedule", "MM step sizes gamma_n = gamma0 * (n + offset)^(-alpha)."),
    ("schedule.gamma0", "Initial step size, in (0, 1)."),
    ("schedule.alpha", "Decay exponent, in (1/2, 1]."),
    ("schedule.offset", "Iteration shift; null uses the warm-up size."),
    ("epsilon_star", "Ridge added to every curvature bound."),
    ("init", "Initialization of the MM statistic and of the baselines."),
    ("init.mode", "\"perturbed\", \"kmeans\", \"warm_start\" or \"random\"."),
    ("init.noise_scale", "Standard deviation of the noise added to the truth in perturbed mode."),
    ("init.random_scale", "Standard deviation of random logistic coefficients."),
    ("init.kmeans_restarts", "Random restarts of Lloyd's algorithm."),
    ("init.warmup", "Leading training samples used to build the initial statistic."),
    ("init.replay_warmup", "Feed the warm-up samples into the stream as well."),
    ("iterations", "Stream length; null uses every available training sample once."),
    ("polyak_start", "First iteration included in the Polyak average."),
    ("seeds", "Run seeds; each drives data, initialization and holdout draws."),
    ("optimizers", "Gradient baselines run by the benchmark command."),
    ("optimizer_overrides", "Per-method optimizer settings replacing the defaults."),
    ("data", "Data source, tagged by \"kind\": lowdim, highdim, logistic_desk, gaussian_truth, logistic_truth or csv."),
    ("covariate_law", "Covariate distribution for generated data: \"uniform\" on [-1, 1] or \"normal\"."),
    ("split", "Training fraction of the dataset; the rest is the test set."),
    ("output_dir", "Directory for written artifacts when --out is not given."),
    ("eval", "Evaluation settings."),
    ("eval.nll_stride", "Iterations between recorded training NLL values."),
    ("eval.snapshot_stride", "Iterations between recorded parameter snapshots."),
    ("eval.holdout_size", "Fresh samples used for the stationarity residual of generated data."),
    ("eval.bayes_samples", "Monte-Carlo draws for the Bayes accuracy of a logistic truth."),
    ("eval.grid_per_axis", "Grid points per covariate for the estimation error when P <= 2."),
    ("eval.monte_carlo_points", "Covariate draws for the estimation error when P > 2 or covariates are normal."),
    ("eval.nrmse_norm", "NRMSE normalization: \"range\" or \"mean\"."),
];

const NULLABLE: &[(&str, &str)] = &[("dims", "object"), ("schedule.offset", "integer"), ("iterations", "integer")];

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() || n.is_i64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn describe(prefix: &str, default: &Value) -> Value {
    let mut node = Map::new();
    if let Some((_, d)) = DESCRIPTIONS.iter().find(|(k, _)| *k == prefix) {
        node.insert("description".into(), json!(d));
    }
    node.insert("default".into(), default.clone());
    match default {
        Value::Object(fields) if !prefix.is_empty() && prefix != "data" && prefix != "optimizer_overrides" => {
            node.insert("type".into(), json!("object"));
            let props: Map<String, Value> = fields
                .iter()
                .map(|(k, v)| (k.clone(), describe(&format!("{prefix}.{k}"), v)))
                .collect();
            node.insert("properties".into(), Value::Object(props));
        }
        other => {
            let ty = match NULLABLE.iter().find(|(k, _)| *k == prefix) {
                Some((_, t)) => json!([t, "null"]),
                None => json!(type_name(other)),
            };
            node.insert("type".into(), ty);
        }
    }
    Value::Object(node)
}

/// A JSON schema of the config with every default inline.
pub fn schema() -> Value {
    let defaults = serde_json::to_value(ExperimentConfig::default()).expect("config serializes");
    let fields = defaults.as_object().expect("config is an object");
    let props: Map<String, Value> = fields.iter().map(|(k, v)| (k.clone(), describe(k, v))).collect();
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ExperimentConfig",
        "type": "object",
        "properties": props,
    })
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(ExperimentConfig::from_json_slice(b"{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.data = DataSource::Highdim { k: 2, p: 10, q: 1, dw: 1, dv: 1, truth_seed: 4, n: 500 };
        cfg.seeds = vec![3, 1];
        cfg.optimizer_overrides.insert(Method::Adam, OptimizerConfig::default_for(Method::Adam));
        let back = ExperimentConfig::from_json_slice(cfg.to_json().as_bytes()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        for bad in [
            r#"{"split": 1.0}"#,
            r#"{"seeds": []}"#,
            r#"{"model": "logistic"}"#,
            r#"{"schedule": {"alpha": 0.4}}"#,
            r#"{"unknown": 1}"#,
            r#"{"init": {"mode": "random"}}"#,
            r#"{"data": {"kind": "csv"}}"#,
            r#"{"eval": {"nll_stride": 0}}"#,
        ] {
            assert!(ExperimentConfig::from_json_slice(bad.as_bytes()).is_err(), "{bad}");
        }
    }

    #[test]
    fn offset_defaults_to_warmup() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.step_schedule().unwrap().offset, 85);
    }

    #[test]
    fn schema_documents_defaults() {
        let s = schema();
        let warm = &s["properties"]["init"]["properties"]["warmup"];
        assert_eq!(warm["default"], json!(85));
        assert!(warm["description"].as_str().unwrap().contains("initial statistic"));
        for (path, _) in DESCRIPTIONS {
            let mut node = &s;
            for part in path.split('.') {
                node = &node["properties"][part];
            }
            assert!(node.get("description").is_some(), "{path}");
        }
    }
}
