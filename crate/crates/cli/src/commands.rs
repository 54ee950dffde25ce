//! The harness subcommands. Each `cmd_*` writes its artifacts into `out`
//! and returns the paths it wrote, in a fixed order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mmoe::csvio;
use rayon::prelude::*;

use crate::config::{Estimator, ExperimentConfig};
use crate::error::{config, create_dir, read, write, HarnessError, Result};
use crate::pipeline::{self, ModelParams};
use crate::report::{self, BenchmarkReport, FitReport};

fn bayes_for(cfg: &ExperimentConfig, truth: Option<&ModelParams>, seed: u64) -> Result<Option<f64>> {
    match truth {
        Some(ModelParams::Logistic(t)) => Ok(Some(pipeline::bayes_accuracy(cfg, t, seed)?)),
        _ => Ok(None),
    }
}

fn write_config(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let path = out.join("config.json");
    write(&path, cfg.to_json())?;
    Ok(path)
}

/// Seeded datasets, each with a JSON sidecar holding the true parameters.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.data.model().is_none() {
        return Err(config("simulate needs a generator, not a CSV data source"));
    }
    create_dir(out)?;
    let generated: Vec<(u64, String, String)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (data, truth) = pipeline::load_dataset(cfg, seed)?;
            let truth = truth.expect("generators carry a truth");
            Ok((seed, csvio::write_dataset(&data)?, truth.to_json()))
        })
        .collect::<Result<_>>()?;
    let mut paths = vec![write_config(cfg, out)?];
    for (seed, csv, truth) in generated {
        let data_path = out.join(format!("data_seed{seed}.csv"));
        let truth_path = out.join(format!("truth_seed{seed}.json"));
        write(&data_path, csv)?;
        write(&truth_path, truth)?;
        paths.extend([data_path, truth_path]);
    }
    Ok(paths)
}

/// Runs the configured estimator on every seed.
pub fn fit_reports(cfg: &ExperimentConfig) -> Result<Vec<FitReport>> {
    cfg.validate()?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let (data, mut runs) = pipeline::run_seed(cfg, seed, &[cfg.estimator])?;
            let bayes = bayes_for(cfg, data.truth.as_ref(), seed)?;
            Ok(FitReport::new(cfg, seed, &data, runs.remove(0), bayes))
        })
        .collect()
}

pub fn cmd_fit(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let reports = fit_reports(cfg)?;
    create_dir(out)?;
    let mut paths = vec![write_config(cfg, out)?];
    for r in &reports {
        let path = out.join(format!("fit_report_seed{}.json", r.seed));
        write(&path, r.to_json())?;
        paths.push(path);
    }
    Ok(paths)
}

/// MM and every listed optimizer on identical seeds, splits and initializations.
pub fn benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if cfg.optimizers.is_empty() {
        return Err(config("benchmark needs at least one optimizer besides MM"));
    }
    let mut estimators = vec![Estimator::Mm];
    for &m in &cfg.optimizers {
        let e = Estimator::from_method(m);
        if !estimators.contains(&e) {
            estimators.push(e);
        }
    }
    let per_seed: Vec<(u64, Option<f64>, Vec<report::BenchmarkRow>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (data, runs) = pipeline::run_seed(cfg, seed, &estimators)?;
            let bayes = bayes_for(cfg, data.truth.as_ref(), seed)?;
            Ok((seed, bayes, report::benchmark_rows(seed, &runs)))
        })
        .collect::<Result<_>>()?;
    let mut bayes = BTreeMap::new();
    let mut rows = Vec::new();
    for (seed, b, r) in per_seed {
        if let Some(b) = b {
            bayes.insert(seed, b);
        }
        rows.extend(r);
    }
    let methods = estimators.iter().map(|e| e.name().to_string()).collect();
    Ok(BenchmarkReport::new(cfg, methods, bayes, rows))
}

pub fn cmd_benchmark(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let report = benchmark(cfg)?;
    create_dir(out)?;
    let json = out.join("benchmark.json");
    let csv = out.join("benchmark.csv");
    let config_path = write_config(cfg, out)?;
    write(&json, report.to_json())?;
    write(&csv, report.to_csv()?)?;
    Ok(vec![config_path, json, csv])
}

/// Fit reports named on the command line; directories contribute every
/// `fit_report*.json` inside them.
fn collect_reports(inputs: &[PathBuf]) -> Result<BTreeMap<String, FitReport>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = std::fs::read_dir(input).map_err(|source| HarnessError::Io { path: input.clone(), source })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.starts_with("fit_report") && name.ends_with(".json")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(config("no fit reports given"));
    }
    let mut runs = BTreeMap::new();
    for path in files {
        let parent = path.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str()).unwrap_or("");
        let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or("run");
        let id = if parent.is_empty() { stem.to_string() } else { format!("{parent}/{stem}") };
        let report = FitReport::from_json_slice(&read(&path)?)?;
        if runs.insert(id.clone(), report).is_some() {
            return Err(config(format!("run id '{id}' appears twice")));
        }
    }
    Ok(runs)
}

/// Long-format CSV exports of fit reports.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let runs = collect_reports(inputs)?;
    let exports = report::export(&runs)?;
    create_dir(out)?;
    let paths = [out.join("nll.csv"), out.join("parameters.csv"), out.join("metrics.csv")];
    for (path, body) in paths.iter().zip([&exports.nll, &exports.parameters, &exports.metrics]) {
        write(path, body)?;
    }
    Ok(paths.to_vec())
}
