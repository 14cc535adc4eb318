//! Single-timeline discrete-event runtime hosting the victim encryption
//! service, the shared cache and any attached PMC samplers.
//!
//! Time only moves through [`Simulation::advance`]; every advance also runs
//! the cache's background noise and lets samplers close the periods that
//! ended. Counter increments of an access land at its completion instant,
//! after samplers have seen the boundaries up to and including it, so a
//! sample covers the half-open window `[t - period, t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aes::{self, AccessEvent, AesKey, Block, RoundKeys, LOOKUPS_PER_BLOCK, TABLE_REGION_BYTES};
use crate::cache::{AccessOutcome, Cache, CacheConfig, CacheConfigError, NoiseModel};
use crate::detector::{Sampler, SamplerConfigError};

pub const NS_PER_US: u64 = 1_000;
pub const NS_PER_MS: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Cache(#[from] CacheConfigError),
    #[error(transparent)]
    Sampler(#[from] SamplerConfigError),
    #[error("table base {0:#x} is not page aligned")]
    TableBase(u64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn now(&self) -> u64 {
        self.now
    }

    fn advance(&mut self, dt: u64) -> u64 {
        self.now += dt;
        self.now
    }
}

/// Victim-attributed hardware counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PmcCounters {
    pub l3_misses: u64,
    pub load_instructions: u64,
}

impl PmcCounters {
    pub fn delta_since(&self, earlier: &PmcCounters) -> PmcCounters {
        PmcCounters {
            l3_misses: self.l3_misses - earlier.l3_misses,
            load_instructions: self.load_instructions - earlier.load_instructions,
        }
    }
}

/// Page merging becomes effective after this many victim encryptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DedupModel {
    pub threshold_encryptions: u64,
}

impl Default for DedupModel {
    fn default() -> Self {
        DedupModel { threshold_encryptions: 300 }
    }
}

/// Source of the random plaintexts submitted to the victim.
#[derive(Clone, Debug)]
pub struct RequestGenerator {
    rng: ChaCha8Rng,
}

impl RequestGenerator {
    pub fn new(rng_seed: u64) -> Self {
        RequestGenerator { rng: ChaCha8Rng::seed_from_u64(rng_seed) }
    }

    pub fn next_plaintext(&mut self) -> Block {
        Block(self.rng.random())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VictimConfig {
    /// Page-aligned address of T0; T1..T3 follow contiguously.
    pub table_base: u64,
    /// Non-table loads charged per encryption.
    pub baseline_loads_per_encryption: u64,
    /// Fixed non-memory work per encryption, in ns.
    pub compute_cost: u64,
    pub dedup: DedupModel,
}

impl Default for VictimConfig {
    fn default() -> Self {
        VictimConfig {
            table_base: 0x40_0000,
            baseline_loads_per_encryption: 3540,
            compute_cost: 2 * NS_PER_US,
            dedup: DedupModel::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VictimProcess {
    pub key: AesKey,
    pub round_keys: RoundKeys,
    pub config: VictimConfig,
    counters: PmcCounters,
    completed: u64,
    requests: RequestGenerator,
}

impl VictimProcess {
    pub fn new(key: AesKey, config: VictimConfig, request_seed: u64) -> Result<Self, SimError> {
        if !config.table_base.is_multiple_of(4096) {
            return Err(SimError::TableBase(config.table_base));
        }
        Ok(VictimProcess {
            key,
            round_keys: aes::key_expand(&key),
            config,
            counters: PmcCounters::default(),
            completed: 0,
            requests: RequestGenerator::new(request_seed),
        })
    }

    pub fn table_region(&self) -> std::ops::Range<u64> {
        self.config.table_base..self.config.table_base + TABLE_REGION_BYTES as u64
    }

    pub fn address_of(&self, event: &AccessEvent) -> u64 {
        self.config.table_base + event.region_offset() as u64
    }

    pub fn completed_encryptions(&self) -> u64 {
        self.completed
    }

    /// Loads charged per encryption: the table lookups plus the baseline.
    pub fn loads_per_encryption(&self) -> u64 {
        LOOKUPS_PER_BLOCK as u64 + self.config.baseline_loads_per_encryption
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub cache: CacheConfig,
    pub noise: NoiseModel,
    pub victim: VictimConfig,
    pub key: AesKey,
    pub request_seed: u64,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    clock: SimClock,
    cache: Cache,
    victim: VictimProcess,
    samplers: Vec<Sampler>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let victim = VictimProcess::new(config.key, config.victim, config.request_seed)?;
        if victim.config.table_base % config.cache.line_size != 0 {
            return Err(SimError::TableBase(victim.config.table_base));
        }
        let cache = Cache::with_noise(config.cache, config.noise, victim.table_region())?;
        Ok(Simulation { clock: SimClock::default(), cache, victim, samplers: Vec::new() })
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn victim(&self) -> &VictimProcess {
        &self.victim
    }

    /// Starts a periodic sampler of the victim counters; returns its index.
    pub fn attach_sampler(&mut self, period: u64) -> Result<usize, SimError> {
        let sampler = Sampler::new(period, self.clock.now(), self.victim.counters)?;
        self.samplers.push(sampler);
        Ok(self.samplers.len() - 1)
    }

    pub fn samplers(&self) -> &[Sampler] {
        &self.samplers
    }

    /// Closes every sampler's open period at its next boundary, so that the
    /// sampled deltas telescope to the final counter totals.
    pub fn finish_sampling(&mut self) -> Vec<Sampler> {
        let counters = self.victim.counters;
        let now = self.clock.now();
        let mut samplers = std::mem::take(&mut self.samplers);
        for s in &mut samplers {
            s.finish(now, counters);
        }
        samplers
    }

    fn advance(&mut self, dt: u64) {
        if dt == 0 {
            return;
        }
        self.cache.advance_noise(dt);
        let now = self.clock.advance(dt);
        let counters = self.victim.counters;
        for s in &mut self.samplers {
            s.advance_to(now, counters);
        }
    }

    /// Serves one random encryption request from the request stream.
    pub fn run_encryption(&mut self) -> (Block, u64) {
        let pt = self.victim.requests.next_plaintext();
        self.encrypt(&pt)
    }

    /// Serves an encryption request for a chosen plaintext.
    pub fn encrypt(&mut self, pt: &Block) -> (Block, u64) {
        let start = self.clock.now();
        let mut trace = [AccessEvent { table: 0, entry: 0 }; LOOKUPS_PER_BLOCK];
        let mut n = 0;
        let ct = aes::encrypt_block(pt, &self.victim.round_keys, |e| {
            trace[n] = e;
            n += 1;
        });
        debug_assert_eq!(n, LOOKUPS_PER_BLOCK);

        self.advance(self.victim.config.compute_cost);
        self.victim.counters.load_instructions += self.victim.config.baseline_loads_per_encryption;
        for event in &trace {
            let addr = self.victim.address_of(event);
            let outcome = self.cache.access(addr);
            self.advance(outcome.latency);
            self.victim.counters.load_instructions += 1;
            if !outcome.is_hit() {
                self.victim.counters.l3_misses += 1;
            }
        }
        self.victim.completed += 1;
        (ct, self.clock.now() - start)
    }

    /// Lets time pass with no victim request in flight.
    pub fn idle(&mut self, dt: u64) {
        self.advance(dt);
    }

    pub fn snapshot_counters(&self) -> PmcCounters {
        self.victim.counters
    }

    pub fn dedup_ready(&self) -> bool {
        self.victim.completed >= self.victim.config.dedup.threshold_encryptions
    }

    /// Attacker-side flush. Never charged to the victim counters.
    pub fn attacker_flush(&mut self, addr: u64) {
        let latency = self.cache.flush(addr);
        self.advance(latency);
    }

    /// Attacker-side timed reload. Never charged to the victim counters.
    pub fn attacker_probe(&mut self, addr: u64) -> AccessOutcome {
        let outcome = self.cache.probe_reload(addr);
        self.advance(outcome.latency);
        outcome
    }

    /// Untimed residency check; an oracle for tests, not an attacker primitive.
    pub fn is_cached(&self, addr: u64) -> bool {
        self.cache.is_cached(addr)
    }
}
