//! Report documents and their long-format CSV exports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Estimator, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::pipeline::{EstimatorRun, Evaluation, ModelParams, RunData, Snapshot, TracePoint};

pub const FORMAT_VERSION: u32 = 1;

/// Git-style blob hash of the canonical config JSON.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let body = serde_json::to_vec(cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(&body);
    hex::encode(h.finalize())
}

fn parse_err(what: &'static str) -> impl Fn(String) -> HarnessError {
    move |message| HarnessError::Parse { what, message }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetrics {
    #[serde(rename = "final")]
    pub final_params: Evaluation,
    pub polyak: Option<Evaluation>,
}

/// The result of one fit command run on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub estimator: Estimator,
    pub train_size: usize,
    pub test_size: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub polyak_start: usize,
    pub initial: ModelParams,
    #[serde(rename = "final")]
    pub final_params: ModelParams,
    pub polyak: Option<ModelParams>,
    pub truth: Option<ModelParams>,
    pub truth_nll_train: Option<f64>,
    pub bayes_accuracy: Option<f64>,
    pub stationarity_residual: Option<f64>,
    pub metrics: FitMetrics,
    pub trace: Vec<TracePoint>,
    pub snapshots: Vec<Snapshot>,
}

impl FitReport {
    pub fn new(cfg: &ExperimentConfig, seed: u64, data: &RunData, run: EstimatorRun, bayes_accuracy: Option<f64>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config_hash: config_hash(cfg),
            seed,
            estimator: run.estimator,
            train_size: data.train.len(),
            test_size: data.test.len(),
            warmup: cfg.init.warmup,
            iterations: run.iterations,
            polyak_start: cfg.polyak_start,
            initial: run.initial,
            final_params: run.final_params,
            polyak: run.polyak,
            truth: data.truth.clone(),
            truth_nll_train: run.truth_nll_train,
            bayes_accuracy,
            stationarity_residual: run.stationarity_residual,
            metrics: FitMetrics { final_params: run.final_eval, polyak: run.polyak_eval },
            trace: run.trace,
            snapshots: run.snapshots,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Parses a report and checks its internal consistency.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let bad = parse_err("fit report");
        let r: Self = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        if r.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", r.format_version)));
        }
        for p in [Some(&r.initial), Some(&r.final_params), r.polyak.as_ref(), r.truth.as_ref()].into_iter().flatten() {
            p.validate().map_err(|e| bad(e.to_string()))?;
        }
        let len = r.final_params.to_flat().len();
        if r.initial.to_flat().len() != len || r.polyak.as_ref().is_some_and(|p| p.to_flat().len() != len) {
            return Err(bad("parameter blocks differ in length".into()));
        }
        if r.snapshots.iter().any(|s| s.params.len() != len) {
            return Err(bad("snapshot length differs from the parameter length".into()));
        }
        let sorted = |its: Vec<usize>| its.windows(2).all(|w| w[0] < w[1]);
        if !sorted(r.trace.iter().map(|t| t.iteration).collect()) || !sorted(r.snapshots.iter().map(|s| s.iteration).collect()) {
            return Err(bad("trace and snapshot iterations must increase".into()));
        }
        if r.trace.iter().any(|t| t.iteration > r.iterations) {
            return Err(bad("trace extends past the iteration count".into()));
        }
        Ok(r)
    }

    /// Lowest NLL seen in the trace or attained by the truth.
    pub fn best_nll(&self) -> Option<f64> {
        self.trace
            .iter()
            .flat_map(|t| [Some(t.nll), t.nll_polyak])
            .chain([self.truth_nll_train])
            .flatten()
            .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.min(v))))
    }
}

/// Flattens an evaluation into `(metric, value)` pairs.
pub fn evaluation_entries(prefix: &str, e: &Evaluation) -> Vec<(String, f64)> {
    let mut out = vec![(format!("{prefix}nll_train"), e.nll_train), (format!("{prefix}nll_test"), e.nll_test)];
    let blocks = [
        ("estimation", e.estimation.as_ref()),
        ("prediction_train", e.prediction_train.as_ref()),
        ("prediction_test", e.prediction_test.as_ref()),
    ];
    for (name, m) in blocks {
        if let Some(m) = m {
            out.push((format!("{prefix}{name}.mse"), m.mse));
            if let Some(v) = m.mape {
                out.push((format!("{prefix}{name}.mape"), v));
            }
            if let Some(v) = m.nrmse {
                out.push((format!("{prefix}{name}.nrmse"), v));
            }
        }
    }
    if let Some(p) = &e.parameters {
        for (name, m) in [("omega", &p.omega), ("upsilon", &p.upsilon), ("sigma2", &p.sigma2)] {
            out.push((format!("{prefix}parameters.{name}.mse"), m.mse));
        }
    }
    for (name, v) in [("accuracy_train", e.accuracy_train), ("accuracy_test", e.accuracy_test)] {
        if let Some(v) = v {
            out.push((format!("{prefix}{name}"), v));
        }
    }
    out
}

/// One metric of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkRow {
    pub seed: u64,
    pub method: String,
    pub protocol: String,
    pub metric: String,
    pub value: f64,
}

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateRow {
    pub method: String,
    pub protocol: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    /// Monte-Carlo Bayes accuracy per seed for logistic truths.
    pub bayes_accuracy: BTreeMap<u64, f64>,
    pub rows: Vec<BenchmarkRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Per-seed rows for the headline parameter (Polyak average when available) of each run.
pub fn benchmark_rows(seed: u64, runs: &[EstimatorRun]) -> Vec<BenchmarkRow> {
    let mut rows = Vec::new();
    for run in runs {
        let (_, e) = run.headline();
        let mut push = |protocol: &str, metric: &str, value: f64| {
            rows.push(BenchmarkRow {
                seed,
                method: run.estimator.name().into(),
                protocol: protocol.into(),
                metric: metric.into(),
                value,
            })
        };
        for (protocol, m) in [("estimation", e.estimation.as_ref()), ("prediction", e.prediction_test.as_ref())] {
            if let Some(m) = m {
                push(protocol, "mse", m.mse);
                if let Some(v) = m.mape {
                    push(protocol, "mape", v);
                }
                if let Some(v) = m.nrmse {
                    push(protocol, "nrmse", v);
                }
            }
        }
        if let Some(a) = e.accuracy_test {
            push("classification", "accuracy", a);
        }
        push("likelihood", "nll_test", e.nll_test);
    }
    rows
}

impl BenchmarkReport {
    pub fn new(cfg: &ExperimentConfig, methods: Vec<String>, bayes_accuracy: BTreeMap<u64, f64>, rows: Vec<BenchmarkRow>) -> Self {
        let mut groups: BTreeMap<(usize, String, String), Vec<f64>> = BTreeMap::new();
        for r in &rows {
            let order = methods.iter().position(|m| *m == r.method).unwrap_or(usize::MAX);
            groups.entry((order, r.protocol.clone(), r.metric.clone())).or_default().push(r.value);
        }
        let aggregate = groups
            .into_iter()
            .map(|((order, protocol, metric), v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                AggregateRow { method: methods[order].clone(), protocol, metric, mean, std, count: v.len() }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config_hash: config_hash(cfg),
            seeds: cfg.seeds.clone(),
            methods,
            bayes_accuracy,
            rows,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| parse_err("benchmark report")(e.to_string()))
    }

    /// The value of one per-seed cell.
    pub fn value(&self, seed: u64, method: &str, protocol: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.method == method && r.protocol == protocol && r.metric == metric)
            .map(|r| r.value)
    }

    /// Per-seed rows then aggregate rows, with `seed` set to `mean` or `std` on the latter.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = Csv::new(&["seed", "method", "protocol", "metric", "value"]);
        for r in &self.rows {
            w.row([r.seed.to_string(), r.method.clone(), r.protocol.clone(), r.metric.clone(), r.value.to_string()]);
        }
        for a in &self.aggregate {
            for (tag, v) in [("mean", a.mean), ("std", a.std)] {
                w.row([tag.to_string(), a.method.clone(), a.protocol.clone(), a.metric.clone(), v.to_string()]);
            }
        }
        w.finish()
    }
}

/// Minimal CSV builder over the `csv` crate.
pub(crate) struct Csv {
    writer: csv::Writer<Vec<u8>>,
    error: Option<csv::Error>,
}

impl Csv {
    pub(crate) fn new(header: &[&str]) -> Self {
        let mut c = Self { writer: csv::Writer::from_writer(Vec::new()), error: None };
        c.row(header.iter().map(|s| s.to_string()));
        c
    }

    pub(crate) fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let rec: Vec<String> = fields.into_iter().collect();
        if let Err(e) = self.writer.write_record(&rec) {
            self.error.get_or_insert(e);
        }
    }

    pub(crate) fn finish(self) -> Result<String> {
        let csv_err = |e: String| HarnessError::Parse { what: "csv output", message: e };
        if let Some(e) = self.error {
            return Err(csv_err(e.to_string()));
        }
        let bytes = self.writer.into_inner().map_err(|e| csv_err(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| csv_err(e.to_string()))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Plot-ready exports of a set of fit reports keyed by run id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exports {
    /// `run_id, estimator, iteration, nll, nll_polyak, distance_to_best, distance_to_best_polyak`.
    pub nll: String,
    /// `run_id, estimator, iteration, parameter, value`.
    pub parameters: String,
    /// `run_id, method, metric, value`.
    pub metrics: String,
}

pub fn export(runs: &BTreeMap<String, FitReport>) -> Result<Exports> {
    let mut nll = Csv::new(&["run_id", "estimator", "iteration", "nll", "nll_polyak", "distance_to_best", "distance_to_best_polyak"]);
    let mut params = Csv::new(&["run_id", "estimator", "iteration", "parameter", "value"]);
    let mut metrics = Csv::new(&["run_id", "method", "metric", "value"]);
    for (id, r) in runs {
        let est = r.estimator.name().to_string();
        let best = r.best_nll();
        for t in &r.trace {
            let dist = |v: Option<f64>| v.zip(best).map(|(v, b)| v - b);
            nll.row([
                id.clone(),
                est.clone(),
                t.iteration.to_string(),
                t.nll.to_string(),
                opt(t.nll_polyak),
                opt(dist(Some(t.nll))),
                opt(dist(t.nll_polyak)),
            ]);
        }
        let names = r.final_params.coordinate_names();
        for s in &r.snapshots {
            for (name, v) in names.iter().zip(&s.params) {
                params.row([id.clone(), est.clone(), s.iteration.to_string(), name.clone(), v.to_string()]);
            }
        }
        let mut entries = evaluation_entries("final.", &r.metrics.final_params);
        if let Some(p) = &r.metrics.polyak {
            entries.extend(evaluation_entries("polyak.", p));
        }
        for (name, v) in [("stationarity_residual", r.stationarity_residual), ("bayes_accuracy", r.bayes_accuracy)] {
            if let Some(v) = v {
                entries.push((name.to_string(), v));
            }
        }
        for (metric, v) in entries {
            metrics.row([id.clone(), est.clone(), metric, v.to_string()]);
        }
    }
    Ok(Exports { nll: nll.finish()?, parameters: params.finish()?, metrics: metrics.finish()? })
}
