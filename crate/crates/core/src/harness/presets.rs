//! Figure presets and the packet/interval/rate sweep.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ConfigError, ExperimentConfig, Scenario};
use super::experiment::{simulate, ExperimentError, RunRecord};
use super::output::{self, SummaryRow};
use crate::attack::AttackSchedule;
use crate::detector::{PERIOD_100US, PERIOD_10MS, PERIOD_1MS};
use crate::sim::{NS_PER_MS, NS_PER_US};

pub const PRESET_NAMES: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];

pub const SWEEP_PACKET_SIZES: [u64; 4] = [5_000, 500, 50, 5];
pub const SWEEP_INTERVALS: [u64; 4] = [10 * NS_PER_US, 100 * NS_PER_US, NS_PER_MS, 10 * NS_PER_MS];
pub const SWEEP_RATES: [u64; 3] = [PERIOD_100US, PERIOD_1MS, PERIOD_10MS];

/// A group of panels sharing one simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetRun {
    pub scenario: Scenario,
    /// `None` for a continuous run.
    pub packets: Option<(u64, u64)>,
    pub total: u64,
    pub periods: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub runs: Vec<PresetRun>,
}

impl Preset {
    pub fn panel_count(&self) -> usize {
        self.runs.iter().map(|r| r.periods.len()).sum()
    }
}

fn paired(packets: Option<(u64, u64)>, total: u64, periods: &[u64]) -> Vec<PresetRun> {
    let attacker = if packets.is_some() { Scenario::Fragmented } else { Scenario::Attack };
    [attacker, Scenario::NoAttack]
        .into_iter()
        .map(|scenario| PresetRun { scenario, packets, total, periods: periods.to_vec() })
        .collect()
}

pub fn preset(name: &str) -> Option<Preset> {
    let total = AttackSchedule::DEFAULT_TOTAL;
    let runs = match name {
        // fig1 plots the raw counters, fig2 the metric of the same runs
        "fig1" | "fig2" => paired(None, total, &SWEEP_RATES),
        "fig3" => paired(Some((500, 10 * NS_PER_MS)), 5_000, &[PERIOD_1MS, PERIOD_10MS]),
        "fig4" => paired(Some((50, 10 * NS_PER_MS)), total, &[PERIOD_1MS, PERIOD_10MS]),
        "fig5" => paired(Some((5, NS_PER_MS)), total, &[PERIOD_1MS, PERIOD_10MS]),
        "fig6" => vec![PresetRun {
            scenario: Scenario::Fragmented,
            packets: Some((50, 10 * NS_PER_MS)),
            total,
            periods: vec![PERIOD_1MS],
        }],
        _ => return None,
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name)?;
    Some(Preset { name, runs })
}

pub fn period_label(period: u64) -> String {
    if period.is_multiple_of(NS_PER_MS) {
        format!("{}ms", period / NS_PER_MS)
    } else if period.is_multiple_of(NS_PER_US) {
        format!("{}us", period / NS_PER_US)
    } else {
        format!("{period}ns")
    }
}

pub fn run_config(run: &PresetRun, seed: u64, noise_rate: f64) -> ExperimentConfig {
    ExperimentConfig {
        scenario: run.scenario,
        packet_size: run.packets.map(|p| p.0),
        interval_ns: run.packets.map(|p| p.1),
        total_encryptions: run.total,
        seed,
        noise_rate,
        ..ExperimentConfig::default()
    }
}

#[derive(Clone, Debug)]
pub struct PanelOutput {
    pub panel: String,
    pub path: Option<PathBuf>,
    pub record: RunRecord,
}

#[derive(Clone, Debug)]
pub struct PresetOutput {
    pub panels: Vec<PanelOutput>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every panel of a figure preset; writes one CSV per panel and a
/// summary table into `out_dir` when given.
pub fn cmd_preset(name: &str, seed: u64, noise_rate: f64, out_dir: Option<&Path>) -> Result<PresetOutput, ExperimentError> {
    let preset = preset(name).ok_or_else(|| ConfigError::Invalid(format!("unknown preset {name:?}; expected one of {PRESET_NAMES:?}")))?;
    let trials = preset
        .runs
        .par_iter()
        .map(|run| simulate(&run_config(run, seed, noise_rate), &run.periods))
        .collect::<Result<Vec<_>, _>>()?;

    let mut panels = Vec::new();
    for (run, trial) in preset.runs.iter().zip(&trials) {
        let tag = if run.scenario.has_attacker() { "attack" } else { "no-attack" };
        for &period in &run.periods {
            let panel = format!("{}_{}_{}", preset.name, tag, period_label(period));
            let record = RunRecord::from_trial(trial, period);
            let path = out_dir.map(|d| d.join(format!("{panel}.csv")));
            if let Some(p) = &path {
                output::write_samples_csv(p, &record.samples)?;
            }
            panels.push(PanelOutput { panel, path, record });
        }
    }
    let summary: Vec<SummaryRow> = panels.iter().map(|p| SummaryRow::from_record(&p.panel, &p.record)).collect();
    if let Some(d) = out_dir {
        output::write_file(&d.join(format!("{}_summary.csv", preset.name)), &output::summary_to_csv(&summary))?;
    }
    Ok(PresetOutput { panels, summary })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub packet_sizes: Vec<u64>,
    pub intervals: Vec<u64>,
    pub rates: Vec<u64>,
    pub total: u64,
    pub seed: u64,
    pub noise_rate: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            packet_sizes: SWEEP_PACKET_SIZES.to_vec(),
            intervals: SWEEP_INTERVALS.to_vec(),
            rates: SWEEP_RATES.to_vec(),
            total: AttackSchedule::DEFAULT_TOTAL,
            seed: 1,
            noise_rate: super::config::DEFAULT_NOISE_RATE,
        }
    }
}

/// Fragmented attack over the packet-size x interval grid, one summary row per
/// sampling rate. Cells run in parallel; row order follows the input lists.
pub fn cmd_sweep(spec: &SweepSpec) -> Result<Vec<SummaryRow>, ExperimentError> {
    if spec.packet_sizes.is_empty() || spec.intervals.is_empty() || spec.rates.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one packet size, interval and rate".into()).into());
    }
    let cells: Vec<(u64, u64)> =
        spec.packet_sizes.iter().flat_map(|&p| spec.intervals.iter().map(move |&i| (p, i))).collect();
    let rows = cells
        .par_iter()
        .map(|&(packet_size, interval)| {
            let cfg = ExperimentConfig {
                scenario: Scenario::Fragmented,
                packet_size: Some(packet_size),
                interval_ns: Some(interval),
                total_encryptions: spec.total,
                seed: spec.seed,
                noise_rate: spec.noise_rate,
                ..ExperimentConfig::default()
            };
            let trial = simulate(&cfg, &spec.rates)?;
            Ok(spec
                .rates
                .iter()
                .map(|&rate| {
                    let label = format!("p{packet_size}_i{}", period_label(interval));
                    SummaryRow::from_record(&label, &RunRecord::from_trial(&trial, rate))
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(rows.into_iter().flatten().collect())
}
