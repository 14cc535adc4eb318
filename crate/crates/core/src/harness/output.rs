//! Plot-ready CSV emission and parsing.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::experiment::{ExperimentError, RunRecord};
use crate::detector::{compute_metric, PmcSample};

pub const SAMPLES_HEADER: &str = "t_ns,d_misses,d_loads,metric";
pub const SUMMARY_HEADER: &str =
    "panel,scenario,packet_size,interval_ns,period_ns,samples,samples_post_warmup,median_metric,fraction_above_threshold,attack_detected,key_recovered";

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("missing or unexpected header")]
    Header,
    #[error("line {0}: malformed row")]
    Row(usize),
}

pub fn samples_to_csv(samples: &[PmcSample]) -> String {
    let mut out = String::with_capacity(32 * (samples.len() + 1));
    out.push_str(SAMPLES_HEADER);
    out.push('\n');
    for s in samples {
        out += &format!("{},{},{},{}\n", s.t, s.d_misses, s.d_loads, compute_metric(s).value);
    }
    out
}

/// Parses a sample CSV back into samples and their metric column.
pub fn parse_samples_csv(text: &str) -> Result<Vec<(PmcSample, f64)>, CsvError> {
    let mut lines = text.lines();
    if lines.next() != Some(SAMPLES_HEADER) {
        return Err(CsvError::Header);
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || CsvError::Row(n + 2);
            let mut cols = line.split(',');
            let mut next_u64 = || cols.next().and_then(|c| c.parse::<u64>().ok());
            let (t, d_misses, d_loads) = (next_u64().ok_or_else(bad)?, next_u64().ok_or_else(bad)?, next_u64().ok_or_else(bad)?);
            let metric = cols.next().and_then(|c| c.parse::<f64>().ok()).ok_or_else(bad)?;
            if cols.next().is_some() {
                return Err(bad());
            }
            Ok((PmcSample { t, d_misses, d_loads }, metric))
        })
        .collect()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

pub fn write_samples_csv(path: &Path, samples: &[PmcSample]) -> Result<(), ExperimentError> {
    write_file(path, &samples_to_csv(samples))
}

/// One line of a preset or sweep summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub panel: String,
    pub scenario: String,
    pub packet_size: u64,
    pub interval_ns: u64,
    pub period_ns: u64,
    pub samples: usize,
    pub samples_post_warmup: usize,
    pub median_metric: Option<f64>,
    pub fraction_above_threshold: Option<f64>,
    pub attack_detected: Option<bool>,
    pub key_recovered: Option<bool>,
}

impl SummaryRow {
    pub fn from_record(panel: &str, record: &RunRecord) -> Self {
        let schedule = record.config.schedule();
        SummaryRow {
            panel: panel.into(),
            scenario: record.config.scenario.to_string(),
            packet_size: schedule.packet_size,
            interval_ns: schedule.interval,
            period_ns: record.config.period_ns,
            samples: record.samples.len(),
            samples_post_warmup: record.verdict.map_or(0, |v| v.samples_post_warmup),
            median_metric: record.median_metric,
            fraction_above_threshold: record.verdict.map(|v| v.fraction_above_threshold),
            attack_detected: record.verdict.map(|v| v.attack_detected),
            key_recovered: record.success,
        }
    }

    fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.panel,
            self.scenario,
            self.packet_size,
            self.interval_ns,
            self.period_ns,
            self.samples,
            self.samples_post_warmup,
            opt(self.median_metric),
            opt(self.fraction_above_threshold),
            opt(self.attack_detected),
            opt(self.key_recovered)
        )
    }
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out += &r.to_csv();
        out.push('\n');
    }
    out
}
