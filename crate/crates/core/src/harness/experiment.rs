use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use super::output;
use crate::aes::AesKey;
use crate::attack::{self, AttackError, AttackOutcome, MonitoredLines};
use crate::cache::{CacheConfig, NoiseModel};
use crate::detector::{self, MetricPoint, PmcSample, Verdict};
use crate::sim::{PmcCounters, SimConfig, SimError, Simulation, VictimConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Io { .. } => 2,
            _ => 1,
        }
    }
}

/// Everything the master seed determines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivedSeeds {
    pub key: AesKey,
    pub requests: u64,
    pub noise: u64,
}

pub fn derive_seeds(seed: u64) -> DerivedSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DerivedSeeds { key: AesKey(rng.random()), requests: rng.random(), noise: rng.random() }
}

/// Raw outcome of one simulated experiment, sampled at several periods at once.
#[derive(Clone, Debug)]
pub struct Trial {
    pub config: ExperimentConfig,
    pub true_key: AesKey,
    /// `(period_ns, samples)` in the order the periods were requested.
    pub series: Vec<(u64, Vec<PmcSample>)>,
    pub attack: Option<AttackOutcome>,
    pub final_counters: PmcCounters,
    pub end_ns: u64,
}

impl Trial {
    pub fn samples(&self, period: u64) -> Option<&[PmcSample]> {
        self.series.iter().find(|(p, _)| *p == period).map(|(_, s)| s.as_slice())
    }
}

pub fn simulation_for(config: &ExperimentConfig) -> Result<(Simulation, AesKey), ExperimentError> {
    let seeds = derive_seeds(config.seed);
    let key = config.key.unwrap_or(seeds.key);
    let sim = Simulation::new(SimConfig {
        cache: CacheConfig::default(),
        noise: NoiseModel { eviction_rate: config.noise_rate, rng_seed: seeds.noise },
        victim: VictimConfig::default(),
        key,
        request_seed: seeds.requests,
    })?;
    Ok((sim, key))
}

/// Runs the configured scenario once. Samplers are passive, so sampling at
/// several periods in one run is identical to separate runs per period.
pub fn simulate(config: &ExperimentConfig, periods: &[u64]) -> Result<Trial, ExperimentError> {
    config.validate()?;
    let (mut sim, true_key) = simulation_for(config)?;
    for &p in periods {
        sim.attach_sampler(p)?;
    }

    // Requests issued while the page merge is still pending.
    while !sim.dedup_ready() {
        sim.run_encryption();
    }

    let schedule = config.schedule();
    let attack = if config.scenario.has_attacker() {
        Some(attack::run_fragmented_attack(&schedule, &mut sim, &MonitoredLines::default())?)
    } else {
        schedule.validate()?;
        for packet in 0..schedule.packets() {
            if packet > 0 {
                sim.idle(schedule.interval);
            }
            for _ in 0..schedule.packet_size {
                sim.run_encryption();
            }
        }
        None
    };

    let final_counters = sim.snapshot_counters();
    let end_ns = sim.now();
    let samplers = sim.finish_sampling();
    let series = samplers.into_iter().map(|s| (s.period(), s.into_samples())).collect();
    Ok(Trial { config: config.clone(), true_key, series, attack, final_counters, end_ns })
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub samples: Vec<PmcSample>,
    pub metrics: Vec<MetricPoint>,
    /// `None` when the run ended inside the warm-up window.
    pub verdict: Option<Verdict>,
    pub median_metric: Option<f64>,
    pub true_key: AesKey,
    pub recovered_key: Option<AesKey>,
    pub success: Option<bool>,
    /// Victim counter totals at the end of the run.
    pub totals: PmcCounters,
}

impl RunRecord {
    pub fn from_trial(trial: &Trial, period: u64) -> Self {
        let mut config = trial.config.clone();
        config.period_ns = period;
        let samples = trial.samples(period).map(<[PmcSample]>::to_vec).unwrap_or_default();
        let metrics = detector::metric_series(&samples);
        let sampler = config.sampler();
        let verdict = detector::classify(&metrics, &sampler).ok();
        let median_metric = detector::median_post_warmup(&metrics, sampler.warmup);
        let recovered_key = trial.attack.as_ref().map(|a| a.recovered);
        let success = recovered_key.map(|k| k == trial.true_key);
        RunRecord {
            config,
            samples,
            metrics,
            verdict,
            median_metric,
            true_key: trial.true_key,
            recovered_key,
            success,
            totals: trial.final_counters,
        }
    }

    /// Human-readable `key=value` summary printed by the CLI.
    pub fn summary(&self) -> String {
        let mut out = self.config.to_text();
        out += &format!("samples={}\n", self.samples.len());
        if let Some(v) = &self.verdict {
            out += &format!(
                "samples_post_warmup={}\nfraction_above_threshold={}\nattack_detected={}\n",
                v.samples_post_warmup, v.fraction_above_threshold, v.attack_detected
            );
        }
        if let Some(m) = self.median_metric {
            out += &format!("median_metric={m}\n");
        }
        out += &format!("true_key={}\n", self.true_key.to_hex());
        if let (Some(k), Some(ok)) = (self.recovered_key, self.success) {
            out += &format!("recovered_key={}\nkey_recovered={ok}\n", k.to_hex());
        }
        out
    }
}

/// Executes one configured run and writes its sample CSV if `out` is set.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    let trial = simulate(config, &[config.period_ns])?;
    let record = RunRecord::from_trial(&trial, config.period_ns);
    if let Some(path) = &config.out {
        output::write_samples_csv(path, &record.samples)?;
    }
    Ok(record)
}
