//! Periodic PMC sampling of the victim and the misses-per-kilo-load detector.

use thiserror::Error;

use crate::sim::{PmcCounters, NS_PER_MS, NS_PER_US};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerConfigError {
    #[error("sampling period must be positive")]
    Period,
    #[error("threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("decision fraction must lie in [0, 1], got {0}")]
    DecisionFraction(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("no samples after the {warmup_ns} ns warm-up ({total} samples in total)")]
    NoPostWarmupSamples { warmup_ns: u64, total: usize },
}

/// Sampling periods evaluated in the experiments.
pub const PERIOD_100US: u64 = 100 * NS_PER_US;
pub const PERIOD_1MS: u64 = NS_PER_MS;
pub const PERIOD_10MS: u64 = 10 * NS_PER_MS;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub period: u64,
    /// Samples ending before this time are attributed to cold misses.
    pub warmup: u64,
    pub threshold: f64,
    /// Share of post-warm-up samples that must reach the threshold.
    pub decision_fraction: f64,
}

impl SamplerConfig {
    pub fn new(period: u64) -> Self {
        SamplerConfig { period, warmup: 50 * NS_PER_MS, threshold: 0.5, decision_fraction: 0.8 }
    }

    pub fn validate(&self) -> Result<(), SamplerConfigError> {
        if self.period == 0 {
            return Err(SamplerConfigError::Period);
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(SamplerConfigError::Threshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.decision_fraction) {
            return Err(SamplerConfigError::DecisionFraction(self.decision_fraction));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PmcSample {
    /// End of the sampled window.
    pub t: u64,
    pub d_misses: u64,
    pub d_loads: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricPoint {
    pub t: u64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub attack_detected: bool,
    pub fraction_above_threshold: f64,
    pub samples_total: usize,
    pub samples_post_warmup: usize,
}

/// Reads the victim counters once per period boundary.
#[derive(Clone, Debug)]
pub struct Sampler {
    period: u64,
    next_boundary: u64,
    last: PmcCounters,
    samples: Vec<PmcSample>,
}

impl Sampler {
    pub fn new(period: u64, start: u64, counters: PmcCounters) -> Result<Self, SamplerConfigError> {
        if period == 0 {
            return Err(SamplerConfigError::Period);
        }
        Ok(Sampler { period, next_boundary: start + period, last: counters, samples: Vec::new() })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn samples(&self) -> &[PmcSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<PmcSample> {
        self.samples
    }

    /// Emits a sample for every boundary up to and including `now`.
    pub fn advance_to(&mut self, now: u64, counters: PmcCounters) {
        while self.next_boundary <= now {
            let d = counters.delta_since(&self.last);
            self.samples.push(PmcSample { t: self.next_boundary, d_misses: d.l3_misses, d_loads: d.load_instructions });
            self.last = counters;
            self.next_boundary += self.period;
        }
    }

    /// Closes a partially elapsed period (or one holding unsampled counts).
    pub fn finish(&mut self, now: u64, counters: PmcCounters) {
        let window_start = self.next_boundary - self.period;
        if now > window_start || counters != self.last {
            let t = self.next_boundary;
            self.advance_to(t, counters);
        }
    }
}

/// L3 misses per 1000 victim load instructions; zero for an empty window.
pub fn compute_metric(sample: &PmcSample) -> MetricPoint {
    let value = if sample.d_loads == 0 { 0.0 } else { 1000.0 * sample.d_misses as f64 / sample.d_loads as f64 };
    MetricPoint { t: sample.t, value }
}

pub fn metric_series(samples: &[PmcSample]) -> Vec<MetricPoint> {
    samples.iter().map(compute_metric).collect()
}

fn post_warmup(metrics: &[MetricPoint], warmup: u64) -> impl Iterator<Item = &MetricPoint> {
    metrics.iter().filter(move |m| m.t >= warmup)
}

pub fn classify(metrics: &[MetricPoint], config: &SamplerConfig) -> Result<Verdict, DetectorError> {
    let (kept, above) = post_warmup(metrics, config.warmup)
        .fold((0usize, 0usize), |(n, a), m| (n + 1, a + usize::from(m.value >= config.threshold)));
    if kept == 0 {
        return Err(DetectorError::NoPostWarmupSamples { warmup_ns: config.warmup, total: metrics.len() });
    }
    let fraction = above as f64 / kept as f64;
    Ok(Verdict {
        attack_detected: fraction >= config.decision_fraction,
        fraction_above_threshold: fraction,
        samples_total: metrics.len(),
        samples_post_warmup: kept,
    })
}

/// Median metric over the post-warm-up samples.
pub fn median_post_warmup(metrics: &[MetricPoint], warmup: u64) -> Option<f64> {
    let mut values: Vec<f64> = post_warmup(metrics, warmup).map(|m| m.value).collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}
