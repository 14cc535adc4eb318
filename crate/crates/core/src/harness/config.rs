//! Experiment configuration: flat `key=value` files plus CLI overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::aes::AesKey;
use crate::attack::AttackSchedule;
use crate::detector::{SamplerConfig, PERIOD_1MS};

/// Background evictions per ms used unless a run overrides it.
pub const DEFAULT_NOISE_RATE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Attack,
    NoAttack,
    Fragmented,
}

impl Scenario {
    pub fn has_attacker(&self) -> bool {
        !matches!(self, Scenario::NoAttack)
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attack" => Ok(Scenario::Attack),
            "no-attack" => Ok(Scenario::NoAttack),
            "fragmented" => Ok(Scenario::Fragmented),
            _ => Err(ConfigError::Value { key: "scenario".into(), value: s.into() }),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Attack => "attack",
            Scenario::NoAttack => "no-attack",
            Scenario::Fragmented => "fragmented",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Packet schedule; required for `fragmented`, optional for `no-attack`.
    pub packet_size: Option<u64>,
    pub interval_ns: Option<u64>,
    pub total_encryptions: u64,
    pub period_ns: u64,
    pub warmup_ns: u64,
    pub threshold: f64,
    pub decision_fraction: f64,
    pub noise_rate: f64,
    pub seed: u64,
    /// Overrides the seed-derived victim key.
    pub key: Option<AesKey>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sampler = SamplerConfig::new(PERIOD_1MS);
        ExperimentConfig {
            scenario: Scenario::Attack,
            packet_size: None,
            interval_ns: None,
            total_encryptions: AttackSchedule::DEFAULT_TOTAL,
            period_ns: PERIOD_1MS,
            warmup_ns: sampler.warmup,
            threshold: sampler.threshold,
            decision_fraction: sampler.decision_fraction,
            noise_rate: DEFAULT_NOISE_RATE,
            seed: 1,
            key: None,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.replace('_', "").parse().map_err(|_| ConfigError::Value { key: key.into(), value: value.into() })
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim() {
            "scenario" => self.scenario = value.parse()?,
            "packet_size" => self.packet_size = Some(parse_num(key, value)?),
            "interval_ns" => self.interval_ns = Some(parse_num(key, value)?),
            "total_encryptions" => self.total_encryptions = parse_num(key, value)?,
            "period_ns" => self.period_ns = parse_num(key, value)?,
            "warmup_ns" => self.warmup_ns = parse_num(key, value)?,
            "threshold" => self.threshold = parse_num(key, value)?,
            "decision_fraction" => self.decision_fraction = parse_num(key, value)?,
            "noise_rate" => self.noise_rate = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "key" => {
                self.key = Some(AesKey::from_hex(value).ok_or_else(|| ConfigError::Value { key: key.into(), value: value.into() })?)
            }
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies a config file body. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: n + 1, text: raw.into() })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            period: self.period_ns,
            warmup: self.warmup_ns,
            threshold: self.threshold,
            decision_fraction: self.decision_fraction,
        }
    }

    /// Request schedule shared by the attacker and the no-attack baseline.
    pub fn schedule(&self) -> AttackSchedule {
        match (self.packet_size, self.interval_ns) {
            (Some(p), Some(i)) => AttackSchedule { packet_size: p, interval: i, total: self.total_encryptions },
            (Some(p), None) => AttackSchedule { packet_size: p, interval: 0, total: self.total_encryptions },
            _ => AttackSchedule::continuous(self.total_encryptions),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.scenario == Scenario::Fragmented && (self.packet_size.is_none() || self.interval_ns.is_none()) {
            return invalid("scenario=fragmented requires packet_size and interval_ns");
        }
        if self.scenario == Scenario::Attack && (self.packet_size.is_some() || self.interval_ns.is_some()) {
            return invalid("scenario=attack is continuous; use scenario=fragmented for packets");
        }
        if self.packet_size == Some(0) {
            return invalid("packet_size must be at least 1");
        }
        if self.total_encryptions == 0 {
            return invalid("total_encryptions must be at least 1");
        }
        if !(self.noise_rate.is_finite() && self.noise_rate >= 0.0) {
            return invalid("noise_rate must be a non-negative number");
        }
        self.sampler().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// `key=value` lines describing this configuration.
    pub fn to_text(&self) -> String {
        let mut out = format!("scenario={}\n", self.scenario);
        if let Some(p) = self.packet_size {
            out += &format!("packet_size={p}\n");
        }
        if let Some(i) = self.interval_ns {
            out += &format!("interval_ns={i}\n");
        }
        out += &format!(
            "total_encryptions={}\nperiod_ns={}\nwarmup_ns={}\nthreshold={}\ndecision_fraction={}\nnoise_rate={}\nseed={}\n",
            self.total_encryptions,
            self.period_ns,
            self.warmup_ns,
            self.threshold,
            self.decision_fraction,
            self.noise_rate,
            self.seed
        );
        if let Some(k) = self.key {
            out += &format!("key={}\n", k.to_hex());
        }
        out
    }
}
