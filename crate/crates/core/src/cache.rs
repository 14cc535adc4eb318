//! Shared last-level cache model: set-associative, LRU replacement,
//! `clflush`-style invalidation, fixed hit/miss latencies.
//!
//! Private cache levels are not modeled. A flush removes the line from the
//! only level there is, which is what an inclusive LLC guarantees for the
//! whole hierarchy.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CacheConfigError {
    #[error("line size {0} is not a power of two")]
    LineSize(u64),
    #[error("associativity must be at least 1")]
    Ways,
    #[error("set count must be at least 1")]
    Sets,
    #[error("miss latency ({miss} ns) must exceed hit latency ({hit} ns)")]
    Latency { hit: u64, miss: u64 },
    #[error("noise eviction rate must be finite and non-negative, got {0}")]
    NoiseRate(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheConfig {
    pub line_size: u64,
    pub ways: usize,
    pub sets: usize,
    pub hit_latency: u64,
    pub miss_latency: u64,
    pub flush_latency: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            line_size: 64,
            ways: 11,
            sets: 64,
            hit_latency: 40,
            miss_latency: 200,
            flush_latency: 100,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<(), CacheConfigError> {
        if !self.line_size.is_power_of_two() {
            return Err(CacheConfigError::LineSize(self.line_size));
        }
        if self.ways == 0 {
            return Err(CacheConfigError::Ways);
        }
        if self.sets == 0 {
            return Err(CacheConfigError::Sets);
        }
        if self.miss_latency <= self.hit_latency {
            return Err(CacheConfigError::Latency { hit: self.hit_latency, miss: self.miss_latency });
        }
        Ok(())
    }

    /// Latency cut-off used by the attacker: anything faster is a hit.
    pub fn hit_threshold(&self) -> u64 {
        (self.hit_latency + self.miss_latency) / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessKind {
    Hit,
    Miss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessOutcome {
    pub kind: AccessKind,
    pub latency: u64,
}

impl AccessOutcome {
    pub fn is_hit(&self) -> bool {
        self.kind == AccessKind::Hit
    }
}

/// Background evictions standing in for unrelated system activity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Expected evictions of victim-region lines per simulated millisecond.
    pub eviction_rate: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn quiet() -> Self {
        NoiseModel { eviction_rate: 0.0, rng_seed: 0 }
    }
}

/// Poisson eviction process realised through exponential inter-arrival
/// times, so the count over any window is Poisson(rate * window).
#[derive(Clone, Debug)]
struct NoiseProcess {
    region: Range<u64>,
    gap: Option<Exp<f64>>,
    rng: ChaCha8Rng,
    until_next: f64,
}

impl NoiseProcess {
    fn new(model: &NoiseModel, region: Range<u64>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
        let gap = (model.eviction_rate > 0.0).then(|| Exp::new(model.eviction_rate / 1e6).expect("validated rate"));
        let until_next = gap.map_or(f64::INFINITY, |g| g.sample(&mut rng));
        NoiseProcess { region, gap, rng, until_next }
    }

    /// Number of eviction events falling into the next `dt` nanoseconds.
    fn events_in(&mut self, dt: u64) -> usize {
        let Some(gap) = self.gap else { return 0 };
        let mut remaining = dt as f64;
        let mut events = 0;
        while self.until_next <= remaining {
            remaining -= self.until_next;
            self.until_next = gap.sample(&mut self.rng);
            events += 1;
        }
        self.until_next -= remaining;
        events
    }
}

#[derive(Clone, Debug)]
pub struct Cache {
    config: CacheConfig,
    // Line numbers per set, least recently used first.
    sets: Vec<Vec<u64>>,
    noise: Option<NoiseProcess>,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Result<Self, CacheConfigError> {
        config.validate()?;
        let sets = vec![Vec::with_capacity(config.ways); config.sets];
        Ok(Cache { config, sets, noise: None })
    }

    /// A cache whose noise process evicts lines of `region` (byte addresses).
    pub fn with_noise(config: CacheConfig, noise: NoiseModel, region: Range<u64>) -> Result<Self, CacheConfigError> {
        if !(noise.eviction_rate.is_finite() && noise.eviction_rate >= 0.0) {
            return Err(CacheConfigError::NoiseRate(noise.eviction_rate));
        }
        let mut cache = Cache::new(config)?;
        cache.noise = Some(NoiseProcess::new(&noise, region));
        Ok(cache)
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    fn locate(&self, addr: u64) -> (usize, u64) {
        let line = addr / self.config.line_size;
        ((line % self.config.sets as u64) as usize, line)
    }

    /// Loads `addr`, installing its line as most recently used.
    pub fn access(&mut self, addr: u64) -> AccessOutcome {
        let (set_idx, line) = self.locate(addr);
        let ways = self.config.ways;
        let set = &mut self.sets[set_idx];
        if let Some(pos) = set.iter().position(|&l| l == line) {
            set.remove(pos);
            set.push(line);
            return AccessOutcome { kind: AccessKind::Hit, latency: self.config.hit_latency };
        }
        if set.len() == ways {
            set.remove(0);
        }
        set.push(line);
        AccessOutcome { kind: AccessKind::Miss, latency: self.config.miss_latency }
    }

    /// The attacker's timed reload. Same cache effect as [`Cache::access`];
    /// the distinction matters only for who gets charged for the access.
    pub fn probe_reload(&mut self, addr: u64) -> AccessOutcome {
        self.access(addr)
    }

    /// Invalidates the line holding `addr`; returns the issuer's latency.
    pub fn flush(&mut self, addr: u64) -> u64 {
        let (set_idx, line) = self.locate(addr);
        self.sets[set_idx].retain(|&l| l != line);
        self.config.flush_latency
    }

    /// Residency check that leaves replacement state untouched.
    pub fn is_cached(&self, addr: u64) -> bool {
        let (set_idx, line) = self.locate(addr);
        self.sets[set_idx].contains(&line)
    }

    /// Resident lines, as line-aligned byte addresses, in set order then LRU order.
    pub fn resident_lines(&self) -> Vec<u64> {
        self.sets.iter().flatten().map(|&l| l * self.config.line_size).collect()
    }

    /// Ways currently occupied in each set.
    pub fn occupancy(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Lets `dt` ns of background activity pass; returns the evicted lines.
    pub fn advance_noise(&mut self, dt: u64) -> Vec<u64> {
        let Some(noise) = self.noise.as_mut() else { return Vec::new() };
        let events = noise.events_in(dt);
        if events == 0 {
            return Vec::new();
        }
        let line_size = self.config.line_size;
        let region = noise.region.clone();
        let mut evicted = Vec::with_capacity(events);
        for _ in 0..events {
            let resident: Vec<u64> = (region.start / line_size..region.end.div_ceil(line_size))
                .map(|l| l * line_size)
                .filter(|&a| self.is_cached(a))
                .collect();
            if resident.is_empty() {
                break;
            }
            let victim = resident[self.noise.as_mut().unwrap().rng.random_range(0..resident.len())];
            let (set_idx, line) = self.locate(victim);
            self.sets[set_idx].retain(|&l| l != line);
            evicted.push(victim);
        }
        evicted
    }
}
