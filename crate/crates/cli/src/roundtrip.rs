//! Decode-and-round-trip checks for every parser entry point.
//!
//! Each function accepts arbitrary bytes. Rejection is fine; a panic means
//! a decoder accepted input that it cannot faithfully re-encode.

use std::collections::BTreeMap;

use mmoe::{csvio, GaussianParams, LogisticParams};

use crate::config::ExperimentConfig;
use crate::report::{export, FitReport};

pub fn dataset_csv(bytes: &[u8]) {
    if let Ok(data) = csvio::parse_dataset(bytes) {
        let text = csvio::write_dataset(&data).expect("parsed dataset re-encodes");
        let again = csvio::parse_dataset(text.as_bytes()).expect("re-encoded dataset parses");
        assert_eq!(again, data);
    }
}

pub fn experiment_config(bytes: &[u8]) {
    if let Ok(cfg) = ExperimentConfig::from_json_slice(bytes) {
        let again = ExperimentConfig::from_json_slice(cfg.to_json().as_bytes()).expect("re-encoded config parses");
        assert_eq!(again, cfg);
    }
}

pub fn gaussian_params(bytes: &[u8]) {
    if let Ok(theta) = GaussianParams::from_json_slice(bytes) {
        let again = GaussianParams::from_json_slice(theta.to_json().as_bytes()).expect("re-encoded params parse");
        assert_eq!(again, theta);
    }
}

pub fn logistic_params(bytes: &[u8]) {
    if let Ok(theta) = LogisticParams::from_json_slice(bytes) {
        let again = LogisticParams::from_json_slice(theta.to_json().as_bytes()).expect("re-encoded params parse");
        assert_eq!(again, theta);
    }
}

pub fn fit_report(bytes: &[u8]) {
    if let Ok(report) = FitReport::from_json_slice(bytes) {
        let again = FitReport::from_json_slice(report.to_json().as_bytes()).expect("re-encoded report parses");
        assert_eq!(again, report);
        let runs = BTreeMap::from([("run".to_string(), report)]);
        export(&runs).expect("parsed report exports");
    }
}

pub type Target = fn(&[u8]);

/// Entry points by corpus directory name.
pub const TARGETS: &[(&str, Target)] = &[
    ("dataset_csv", dataset_csv),
    ("experiment_config", experiment_config),
    ("gaussian_params", gaussian_params),
    ("logistic_params", logistic_params),
    ("fit_report", fit_report),
];
