//! Data preparation, estimator runs and evaluation for one seed.

use mmoe::baselines::{run_baseline, GradientModel};
use mmoe::datagen::{self, CovariateLaw};
use mmoe::eval::{self, Metrics, ParamErrors, PolyakAverager};
use mmoe::gaussian::{GaussianDims, GaussianFamily, GaussianParams};
use mmoe::init;
use mmoe::logistic::{self, LogisticDims, LogisticFamily, LogisticParams};
use mmoe::mm::{run_stream, stationarity_residual, MmState, SurrogateFamily};
use mmoe::{csvio, Dataset, Sample, Target};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, Estimator, ExperimentConfig, InitMode, ModelKind};
use crate::error::{config, read, Result};

/// Offsets added to the run seed for draws that must not reuse the data stream.
const HOLDOUT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
const BAYES_STREAM: u64 = 0xBF58_476D_1CE4_E5B9;
/// Seed of the Monte-Carlo covariates for the estimation error; shared by all runs.
const ESTIMATION_POINTS_SEED: u64 = 0x94D0_49BB_1331_11EB;

/// Parameters of either model family, tagged by model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Gaussian(GaussianParams),
    Logistic(LogisticParams),
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Gaussian(t) => t.validate()?,
            ModelParams::Logistic(t) => t.validate()?,
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            ModelParams::Gaussian(t) => t.to_flat(),
            ModelParams::Logistic(t) => t.to_flat(),
        }
    }

    /// Names of the flat coordinates, e.g. `omega[0]`.
    pub fn coordinate_names(&self) -> Vec<String> {
        let blocks: Vec<(&str, usize)> = match self {
            ModelParams::Gaussian(t) => vec![("omega", t.omega.len()), ("upsilon", t.upsilon.len()), ("sigma2", t.sigma2.len())],
            ModelParams::Logistic(t) => vec![("omega", t.omega.len()), ("upsilon", t.upsilon.len())],
        };
        blocks
            .into_iter()
            .flat_map(|(name, n)| (0..n).map(move |i| format!("{name}[{i}]")))
            .collect()
    }

    pub fn to_json(&self) -> String {
        match self {
            ModelParams::Gaussian(t) => t.to_json(),
            ModelParams::Logistic(t) => t.to_json(),
        }
    }
}

/// Train/test split of one seed, with the generating truth when known.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: Option<ModelParams>,
}

/// Generates or loads the full dataset of `seed` before splitting.
pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Option<ModelParams>)> {
    let law = cfg.covariate_law;
    let gaussian = |t: GaussianParams, n: usize| -> Result<(Dataset, Option<ModelParams>)> {
        let d = datagen::sample_gaussian(&t, n, seed, law)?;
        Ok((d, Some(ModelParams::Gaussian(t))))
    };
    let logistic = |t: LogisticParams, n: usize| -> Result<(Dataset, Option<ModelParams>)> {
        let d = datagen::sample_logistic(&t, n, seed, law)?;
        Ok((d, Some(ModelParams::Logistic(t))))
    };
    match &cfg.data {
        DataSource::Lowdim { n } => gaussian(datagen::lowdim_truth(), *n),
        DataSource::Highdim { k, p, q, dw, dv, truth_seed, n } => {
            gaussian(datagen::highdim_truth(*k, *dv, *dw, *p, *q, *truth_seed)?, *n)
        }
        DataSource::LogisticDesk { n } => logistic(datagen::logistic_desk_truth(), *n),
        DataSource::GaussianTruth { path, n } => gaussian(GaussianParams::from_json_slice(&read(path)?)?, *n),
        DataSource::LogisticTruth { path, n } => logistic(LogisticParams::from_json_slice(&read(path)?)?, *n),
        DataSource::Csv { path, .. } => Ok((csvio::parse_dataset(&read(path)?)?, None)),
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Rescales both splits by per-column training moments.
fn standardize(train: &mut Dataset, test: &mut Dataset) {
    let Some(p) = train.covariate_dim() else { return };
    for j in 0..p {
        let (m, s) = mean_sd(train.samples.iter().map(|z| z.x[j]));
        for z in train.samples.iter_mut().chain(test.samples.iter_mut()) {
            z.x[j] = (z.x[j] - m) / s;
        }
    }
    let q = match &train.samples[0].y {
        Target::Continuous(y) => y.len(),
        Target::Class(_) => return,
    };
    for j in 0..q {
        let col = |z: &Sample| match &z.y {
            Target::Continuous(y) => y[j],
            Target::Class(_) => 0.0,
        };
        let (m, s) = mean_sd(train.samples.iter().map(col));
        for z in train.samples.iter_mut().chain(test.samples.iter_mut()) {
            if let Target::Continuous(y) = &mut z.y {
                y[j] = (y[j] - m) / s;
            }
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<RunData> {
    let (data, truth) = load_dataset(cfg, seed)?;
    let (mut train, mut test) = data.split(cfg.split)?;
    if train.is_empty() || test.is_empty() {
        return Err(config(format!("split of {} samples leaves an empty side", data.len())));
    }
    if let DataSource::Csv { standardize: true, .. } = cfg.data {
        standardize(&mut train, &mut test);
    }
    Ok(RunData { train, test, truth })
}

/// Fitted dimensions: explicit ones, else those of the truth.
pub fn gaussian_dims(cfg: &ExperimentConfig, truth: Option<&ModelParams>) -> Result<GaussianDims> {
    match (cfg.dims, truth) {
        (Some(d), _) => Ok(GaussianDims::new(d.k, d.p, d.q, d.dw, d.dv)?),
        (None, Some(ModelParams::Gaussian(t))) => Ok(t.dims),
        _ => Err(config("dims are required when the data has no Gaussian truth")),
    }
}

pub fn logistic_dims(cfg: &ExperimentConfig, truth: Option<&ModelParams>) -> Result<LogisticDims> {
    match (cfg.dims, truth) {
        (Some(d), _) => Ok(LogisticDims::new(d.k, d.m, d.p, d.dw, d.dv)?),
        (None, Some(ModelParams::Logistic(t))) => Ok(t.dims),
        _ => Err(config("dims are required when the data has no logistic truth")),
    }
}

fn check_sample_shape(data: &RunData, p: usize, q: Option<usize>, m: Option<usize>) -> Result<()> {
    for z in data.train.samples.iter().chain(&data.test.samples) {
        if z.x.len() != p {
            return Err(config(format!("data has {} covariates, model expects P={p}", z.x.len())));
        }
        match (&z.y, q, m) {
            (Target::Continuous(y), Some(q), _) if y.len() == q => {}
            (Target::Class(c), _, Some(m)) if *c <= m => {}
            (Target::Continuous(y), _, _) => {
                return Err(config(format!("continuous response of length {} does not fit the model", y.len())))
            }
            (Target::Class(c), _, _) => return Err(config(format!("class {c} does not fit the model"))),
        }
    }
    Ok(())
}

/// One recorded point of the training-NLL trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub nll: f64,
    pub nll_polyak: Option<f64>,
}

/// Flat parameters at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub params: Vec<f64>,
}

/// Metrics of one parameter value; absent entries do not apply to the model or data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub nll_train: f64,
    pub nll_test: f64,
    pub estimation: Option<Metrics>,
    pub prediction_train: Option<Metrics>,
    pub prediction_test: Option<Metrics>,
    pub parameters: Option<ParamErrors>,
    pub accuracy_train: Option<f64>,
    pub accuracy_test: Option<f64>,
}

/// Everything an estimator run produces for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub estimator: Estimator,
    pub iterations: usize,
    pub initial: ModelParams,
    pub final_params: ModelParams,
    pub polyak: Option<ModelParams>,
    pub trace: Vec<TracePoint>,
    pub snapshots: Vec<Snapshot>,
    pub final_eval: Evaluation,
    pub polyak_eval: Option<Evaluation>,
    pub stationarity_residual: Option<f64>,
    pub truth_nll_train: Option<f64>,
}

impl EstimatorRun {
    /// The Polyak average when one exists, else the last iterate.
    pub fn headline(&self) -> (&ModelParams, &Evaluation) {
        match (&self.polyak, &self.polyak_eval) {
            (Some(p), Some(e)) => (p, e),
            _ => (&self.final_params, &self.final_eval),
        }
    }
}

/// Shared evaluation inputs of one seed.
struct EvalContext<'a> {
    data: &'a RunData,
    points: Option<Vec<Vec<f64>>>,
    norm: eval::NrmseNorm,
}

/// A family the harness can initialize, fit, average and evaluate.
trait Fittable: SurrogateFamily + GradientModel<Params = <Self as SurrogateFamily>::Params> {
    fn flat(theta: &<Self as SurrogateFamily>::Params) -> Vec<f64>;
    fn unflat(&self, v: &[f64]) -> Result<<Self as SurrogateFamily>::Params>;
    fn wrap(theta: <Self as SurrogateFamily>::Params) -> ModelParams;
    fn evaluate(&self, theta: &<Self as SurrogateFamily>::Params, ctx: &EvalContext) -> Result<Evaluation>;
}

fn prediction(theta: &GaussianParams, data: &[Sample], norm: eval::NrmseNorm) -> Result<Option<Metrics>> {
    // a constant response has no defined NRMSE; report nothing rather than fail the run
    match eval::prediction_error(theta, data, norm) {
        Ok(m) => Ok(Some(m)),
        Err(mmoe::Error::Argument(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

impl Fittable for GaussianFamily {
    fn flat(theta: &GaussianParams) -> Vec<f64> {
        theta.to_flat()
    }

    fn unflat(&self, v: &[f64]) -> Result<GaussianParams> {
        Ok(GaussianParams::from_flat(self.dims, v)?)
    }

    fn wrap(theta: GaussianParams) -> ModelParams {
        ModelParams::Gaussian(theta)
    }

    fn evaluate(&self, theta: &GaussianParams, ctx: &EvalContext) -> Result<Evaluation> {
        let truth = match &ctx.data.truth {
            Some(ModelParams::Gaussian(t)) => Some(t),
            _ => None,
        };
        let estimation = match (truth, &ctx.points) {
            (Some(t), Some(points)) => Some(eval::estimation_error(theta, t, points, ctx.norm)?),
            _ => None,
        };
        let parameters = match truth {
            Some(t) if t.dims == theta.dims => Some(eval::parameter_errors(theta, t)?),
            _ => None,
        };
        Ok(Evaluation {
            nll_train: eval::empirical_nll(self, theta, &ctx.data.train.samples)?,
            nll_test: eval::empirical_nll(self, theta, &ctx.data.test.samples)?,
            estimation,
            prediction_train: prediction(theta, &ctx.data.train.samples, ctx.norm)?,
            prediction_test: prediction(theta, &ctx.data.test.samples, ctx.norm)?,
            parameters,
            accuracy_train: None,
            accuracy_test: None,
        })
    }
}

/// Fraction of samples whose most probable class is the observed one.
pub fn accuracy(theta: &LogisticParams, data: &[Sample]) -> Result<f64> {
    let mut hits = 0usize;
    for z in data {
        if logistic::predict_class(theta, &z.x)? == z.class_y()? {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

impl Fittable for LogisticFamily {
    fn flat(theta: &LogisticParams) -> Vec<f64> {
        theta.to_flat()
    }

    fn unflat(&self, v: &[f64]) -> Result<LogisticParams> {
        Ok(LogisticParams::from_flat(self.dims, v)?)
    }

    fn wrap(theta: LogisticParams) -> ModelParams {
        ModelParams::Logistic(theta)
    }

    fn evaluate(&self, theta: &LogisticParams, ctx: &EvalContext) -> Result<Evaluation> {
        Ok(Evaluation {
            nll_train: eval::empirical_nll(self, theta, &ctx.data.train.samples)?,
            nll_test: eval::empirical_nll(self, theta, &ctx.data.test.samples)?,
            accuracy_train: Some(accuracy(theta, &ctx.data.train.samples)?),
            accuracy_test: Some(accuracy(theta, &ctx.data.test.samples)?),
            ..Evaluation::default()
        })
    }
}

/// Iterations at which the training NLL is recorded.
fn trace_iterations(n: usize, stride: usize, polyak_start: usize) -> Vec<usize> {
    let mut its: Vec<usize> = (0..=n).step_by(stride).collect();
    if polyak_start <= n {
        its.push(polyak_start);
    }
    its.push(n);
    its.sort_unstable();
    its.dedup();
    its
}

/// The warm-up batch and the sample stream of a run.
fn stream_bounds(cfg: &ExperimentConfig, train: &[Sample]) -> Result<(usize, std::ops::Range<usize>)> {
    let w = cfg.init.warmup;
    if w > train.len() {
        return Err(config(format!("warm-up of {w} exceeds the {} training samples", train.len())));
    }
    let start = if cfg.init.replay_warmup { 0 } else { w };
    let available = train.len() - start;
    let n = cfg.iterations.unwrap_or(available);
    if n > available {
        return Err(config(format!("{n} iterations requested but only {available} stream samples are available")));
    }
    Ok((w, start..start + n))
}

struct Recorder<P> {
    wanted: Vec<usize>,
    next: usize,
    snapshot_stride: usize,
    averager: PolyakAverager,
    points: Vec<(usize, P, Option<Vec<f64>>)>,
    snapshots: Vec<Snapshot>,
    error: Option<mmoe::Error>,
}

impl<P: Clone> Recorder<P> {
    fn new(n: usize, cfg: &ExperimentConfig) -> Self {
        Self {
            wanted: trace_iterations(n, cfg.eval.nll_stride, cfg.polyak_start),
            next: 0,
            snapshot_stride: cfg.eval.snapshot_stride,
            averager: PolyakAverager::new(cfg.polyak_start),
            points: Vec::new(),
            snapshots: Vec::new(),
            error: None,
        }
    }

    fn record(&mut self, n: usize, theta: &P, flat: Vec<f64>) {
        if n > 0 {
            if let Err(e) = self.averager.observe(n, &flat) {
                self.error.get_or_insert(e);
            }
        }
        if n.is_multiple_of(self.snapshot_stride) {
            self.snapshots.push(Snapshot { iteration: n, params: flat });
        }
        if self.wanted.get(self.next) == Some(&n) {
            self.next += 1;
            let avg = self.averager.mean().map(<[f64]>::to_vec);
            self.points.push((n, theta.clone(), avg));
        }
    }
}

fn initial_gaussian(cfg: &ExperimentConfig, data: &RunData, dims: GaussianDims, seed: u64) -> Result<GaussianParams> {
    let batch = &data.train.samples[..cfg.init.warmup.min(data.train.len())];
    match cfg.init.mode {
        InitMode::Perturbed => match &data.truth {
            Some(ModelParams::Gaussian(t)) if t.dims == dims => Ok(init::perturbed_truth_init(t, cfg.init.noise_scale, seed)?),
            _ => Err(config("perturbed initialization needs a Gaussian truth with the fitted dimensions")),
        },
        InitMode::Kmeans | InitMode::WarmStart => Ok(init::kmeans_init(
            batch,
            dims,
            cfg.init.kmeans_restarts,
            seed,
            cfg.init.mode.gate(),
            cfg.epsilon_star,
        )?),
        InitMode::Random => Err(config("random initialization is only defined for logistic models")),
    }
}

fn initial_logistic(cfg: &ExperimentConfig, data: &RunData, dims: LogisticDims, seed: u64) -> Result<LogisticParams> {
    match cfg.init.mode {
        InitMode::Perturbed => match &data.truth {
            Some(ModelParams::Logistic(t)) if t.dims == dims => Ok(init::perturbed_logistic_init(t, cfg.init.noise_scale, seed)?),
            _ => Err(config("perturbed initialization needs a logistic truth with the fitted dimensions")),
        },
        InitMode::Random => Ok(init::random_logistic_init(dims, cfg.init.random_scale, seed)?),
        InitMode::Kmeans | InitMode::WarmStart => Err(config("k-means initialization needs continuous responses")),
    }
}

/// Fresh samples from the truth, or the test split when no truth is known.
fn holdout(cfg: &ExperimentConfig, data: &RunData, seed: u64) -> Result<Vec<Sample>> {
    let s = seed.wrapping_add(HOLDOUT_STREAM);
    let n = cfg.eval.holdout_size;
    Ok(match &data.truth {
        Some(ModelParams::Gaussian(t)) => datagen::sample_gaussian(t, n, s, cfg.covariate_law)?.samples,
        Some(ModelParams::Logistic(t)) => datagen::sample_logistic(t, n, s, cfg.covariate_law)?.samples,
        None => data.test.samples.clone(),
    })
}

/// Covariates at which fitted and true regression functions are compared.
pub fn estimation_points(cfg: &ExperimentConfig, truth: &GaussianParams) -> Result<Vec<Vec<f64>>> {
    let p = truth.dims.p;
    if p <= 2 && cfg.covariate_law == CovariateLaw::Uniform {
        return Ok(eval::covariate_grid(p, cfg.eval.grid_per_axis, -1.0, 1.0));
    }
    let draws = datagen::sample_gaussian(truth, cfg.eval.monte_carlo_points, ESTIMATION_POINTS_SEED, cfg.covariate_law)?;
    Ok(draws.samples.into_iter().map(|z| z.x).collect())
}

/// Monte-Carlo accuracy of the Bayes classifier of the logistic truth.
pub fn bayes_accuracy(cfg: &ExperimentConfig, truth: &LogisticParams, seed: u64) -> Result<f64> {
    Ok(datagen::bayes_accuracy(truth, cfg.eval.bayes_samples, seed.wrapping_add(BAYES_STREAM), cfg.covariate_law)?)
}

fn run_family<F: Fittable>(
    family: &F,
    cfg: &ExperimentConfig,
    data: &RunData,
    estimator: Estimator,
    theta0: &<F as SurrogateFamily>::Params,
    seed: u64,
    ctx: &EvalContext,
) -> Result<EstimatorRun> {
    let train = &data.train.samples;
    let (w, range) = stream_bounds(cfg, train)?;
    let stream = &train[range];
    let mut rec = Recorder::new(stream.len(), cfg);
    let (initial, last, residual) = match estimator.method() {
        None => {
            let s0 = init::warmup_s0(family, theta0, &train[..w])?;
            let state = MmState::from_stats(family, s0)?;
            let initial = state.theta.clone();
            rec.record(0, &initial, F::flat(&initial));
            let schedule = cfg.step_schedule()?;
            let out = run_stream(state, stream.iter(), &schedule, family, |n, theta, _| {
                rec.record(n, theta, F::flat(theta))
            })?;
            let residual = stationarity_residual(&out.state, &holdout(cfg, data, seed)?, family)?;
            (initial, out.state.theta, Some(residual))
        }
        Some(method) => {
            let opt = cfg.optimizer(method);
            rec.record(0, theta0, F::flat(theta0));
            let last = run_baseline(family, stream.iter(), &opt, theta0, |n, theta| rec.record(n, theta, F::flat(theta)))?;
            (theta0.clone(), last, None)
        }
    };
    if let Some(e) = rec.error {
        return Err(e.into());
    }
    let mut trace = Vec::with_capacity(rec.points.len());
    for (n, theta, avg) in &rec.points {
        let nll_polyak = match avg {
            Some(v) => Some(eval::empirical_nll(family, &family.unflat(v)?, train)?),
            None => None,
        };
        trace.push(TracePoint { iteration: *n, nll: eval::empirical_nll(family, theta, train)?, nll_polyak });
    }
    let polyak = rec.averager.mean().map(|v| family.unflat(v)).transpose()?;
    let final_eval = family.evaluate(&last, ctx)?;
    let polyak_eval = polyak.as_ref().map(|p| family.evaluate(p, ctx)).transpose()?;
    Ok(EstimatorRun {
        estimator,
        iterations: stream.len(),
        initial: F::wrap(initial),
        final_params: F::wrap(last),
        polyak: polyak.map(F::wrap),
        trace,
        snapshots: rec.snapshots,
        final_eval,
        polyak_eval,
        stationarity_residual: residual,
        truth_nll_train: None,
    })
}

/// Fits every estimator in `estimators` on one seed from a shared initialization.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, estimators: &[Estimator]) -> Result<(RunData, Vec<EstimatorRun>)> {
    let data = prepare(cfg, seed)?;
    let mut runs = Vec::with_capacity(estimators.len());
    match cfg.model {
        ModelKind::Gaussian => {
            let dims = gaussian_dims(cfg, data.truth.as_ref())?;
            check_sample_shape(&data, dims.p, Some(dims.q), None)?;
            let family = GaussianFamily::new(dims, cfg.epsilon_star)?;
            let truth = match &data.truth {
                Some(ModelParams::Gaussian(t)) => Some(t.clone()),
                _ => None,
            };
            let ctx = EvalContext {
                data: &data,
                points: truth.as_ref().map(|t| estimation_points(cfg, t)).transpose()?,
                norm: cfg.eval.nrmse_norm,
            };
            let theta0 = initial_gaussian(cfg, &data, dims, seed)?;
            let truth_nll = match &truth {
                Some(t) => Some(eval::empirical_nll(&GaussianFamily::new(t.dims, cfg.epsilon_star)?, t, &data.train.samples)?),
                None => None,
            };
            for &e in estimators {
                let mut run = run_family(&family, cfg, &data, e, &theta0, seed, &ctx)?;
                run.truth_nll_train = truth_nll;
                runs.push(run);
            }
        }
        ModelKind::Logistic => {
            let dims = logistic_dims(cfg, data.truth.as_ref())?;
            check_sample_shape(&data, dims.p, None, Some(dims.m))?;
            let family = LogisticFamily::new(dims, cfg.epsilon_star)?;
            let ctx = EvalContext { data: &data, points: None, norm: cfg.eval.nrmse_norm };
            let theta0 = initial_logistic(cfg, &data, dims, seed)?;
            let truth_nll = match &data.truth {
                Some(ModelParams::Logistic(t)) => Some(eval::empirical_nll(&LogisticFamily::new(t.dims, cfg.epsilon_star)?, t, &data.train.samples)?),
                _ => None,
            };
            for &e in estimators {
                let mut run = run_family(&family, cfg, &data, e, &theta0, seed, &ctx)?;
                run.truth_nll_train = truth_nll;
                runs.push(run);
            }
        }
    }
    Ok((data, runs))
}
