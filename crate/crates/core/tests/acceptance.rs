//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Run with `cargo test -p fragcache --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fragcache::aes::{self, reference::reference_encrypt, AesKey, Block};
use fragcache::attack::{self, AttackSchedule, MonitoredLines};
use fragcache::cache::{AccessKind, Cache, CacheConfig, NoiseModel};
use fragcache::detector::{PERIOD_10MS, PERIOD_1MS};
use fragcache::harness::experiment::simulate;
use fragcache::harness::presets::PRESET_NAMES;
use fragcache::harness::{cmd_preset, ExperimentConfig, RunRecord, Scenario};
use fragcache::sim::{SimConfig, Simulation, VictimConfig, NS_PER_MS};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn report(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn within(n: u32, start: Instant, budget: Duration, ok: bool, detail: String) {
    let took = start.elapsed();
    report(n, ok && took < budget, &format!("{detail} in {took:.2?} (budget {budget:?})"));
}

#[test]
fn criterion_01_aes_matches_reference() {
    let start = Instant::now();
    let key = AesKey::from_hex("000102030405060708090a0b0c0d0e0f").unwrap();
    let pt = Block::from_hex("00112233445566778899aabbccddeeff").unwrap();
    let rk = aes::key_expand(&key);
    let vector_ok = aes::encrypt_block(&pt, &rk, |_| {}).to_hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"
        && reference_encrypt(&pt, &rk).to_hex() == "69c4e0d86a7b0430d8cdb78070b4c55a";

    let mut rng = ChaCha8Rng::seed_from_u64(0xae5);
    let cases = 10_000;
    let mut mismatches = 0;
    for _ in 0..cases {
        let rk = aes::key_expand(&AesKey(rng.random()));
        let pt = Block(rng.random());
        if aes::encrypt_block(&pt, &rk, |_| {}) != reference_encrypt(&pt, &rk) {
            mismatches += 1;
        }
    }
    within(
        1,
        start,
        Duration::from_secs(5),
        vector_ok && mismatches == 0,
        format!("standard vector ok={vector_ok}, {mismatches}/{cases} random mismatches"),
    );
}

#[test]
fn criterion_02_key_schedule_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b5);
    let cases = 10_000;
    let failures = (0..cases)
        .filter(|_| {
            let k = AesKey(rng.random());
            aes::invert_key_schedule(&aes::key_expand(&k).rounds[10]) != k
        })
        .count();
    within(2, start, Duration::from_secs(1), failures == 0, format!("{failures}/{cases} round-trip failures"));
}

fn noiseless_sim(key: AesKey, request_seed: u64) -> Simulation {
    let mut sim = Simulation::new(SimConfig {
        cache: CacheConfig::default(),
        noise: NoiseModel::quiet(),
        victim: VictimConfig::default(),
        key,
        request_seed,
    })
    .unwrap();
    while !sim.dedup_ready() {
        sim.run_encryption();
    }
    sim
}

#[test]
fn criterion_03_noiseless_key_recovery() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x3ec);
    let keys: Vec<(AesKey, u64)> = (0..20).map(|_| (AesKey(rng.random()), rng.random())).collect();
    let recovered = keys
        .par_iter()
        .filter(|(key, req)| {
            let mut sim = noiseless_sim(*key, *req);
            let schedule = AttackSchedule::continuous(AttackSchedule::DEFAULT_TOTAL);
            attack::run_fragmented_attack(&schedule, &mut sim, &MonitoredLines::default()).unwrap().succeeded(key)
        })
        .count();
    within(
        3,
        start,
        Duration::from_secs(60),
        recovered == keys.len(),
        format!("{recovered}/{} keys recovered from 50000 encryptions", keys.len()),
    );
}

fn config(scenario: Scenario, seed: u64, packets: Option<(u64, u64)>) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        packet_size: packets.map(|p| p.0),
        interval_ns: packets.map(|p| p.1),
        seed,
        ..ExperimentConfig::default()
    }
}

fn records(cfg: &ExperimentConfig, periods: &[u64]) -> Vec<RunRecord> {
    let trial = simulate(cfg, periods).unwrap();
    periods.iter().map(|&p| RunRecord::from_trial(&trial, p)).collect()
}

#[test]
fn criterion_04_metric_separation() {
    let start = Instant::now();
    let periods = [PERIOD_1MS, PERIOD_10MS];
    let ratios: Vec<[f64; 2]> = SEEDS
        .par_iter()
        .map(|&seed| {
            let on = records(&config(Scenario::Attack, seed, None), &periods);
            let off = records(&config(Scenario::NoAttack, seed, None), &periods);
            let ratio = |i: usize| {
                let (a, b) = (on[i].median_metric.unwrap(), off[i].median_metric.unwrap());
                if b == 0.0 { f64::INFINITY } else { a / b }
            };
            [ratio(0), ratio(1)]
        })
        .collect();
    let worst = ratios.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    within(
        4,
        start,
        Duration::from_secs(60),
        worst >= 10.0,
        format!("minimum attack/no-attack median ratio {worst:.1} over {} seeds at 1 ms and 10 ms", SEEDS.len()),
    );
}

#[test]
fn criterion_05_fragmentation_switches_detection() {
    let start = Instant::now();
    let fractions: Vec<(f64, f64)> = SEEDS
        .par_iter()
        .map(|&seed| {
            let cfg = config(Scenario::Fragmented, seed, Some((50, 10 * NS_PER_MS)));
            let r = records(&cfg, &[PERIOD_1MS, PERIOD_10MS]);
            let f = |rec: &RunRecord| rec.verdict.unwrap().fraction_above_threshold;
            (f(&r[0]), f(&r[1]))
        })
        .collect();
    let max_1ms = fractions.iter().map(|f| f.0).fold(0.0, f64::max);
    let min_10ms = fractions.iter().map(|f| f.1).fold(1.0, f64::min);
    within(
        5,
        start,
        Duration::from_secs(120),
        max_1ms <= 0.6 && min_10ms >= 0.9,
        format!("packets of 50 every 10 ms: fraction at 1 ms <= {max_1ms:.3}, at 10 ms >= {min_10ms:.3}"),
    );
}

#[test]
fn criterion_06_degenerate_schedules_match_continuous() {
    let seed = 6;
    let total = AttackSchedule::DEFAULT_TOTAL;
    let base = simulate(&config(Scenario::Attack, seed, None), &[PERIOD_1MS]).unwrap().attack.unwrap();
    let variants = [(500, 0), (total, 10 * NS_PER_MS)];
    let mismatched: Vec<String> = variants
        .par_iter()
        .filter_map(|&(packet, interval)| {
            let out = simulate(&config(Scenario::Fragmented, seed, Some((packet, interval))), &[PERIOD_1MS])
                .unwrap()
                .attack
                .unwrap();
            let same = out.x == base.x && out.s == base.s && out.recovered == base.recovered;
            (!same).then(|| format!("packet {packet} interval {interval}"))
        })
        .collect();
    report(
        6,
        mismatched.is_empty(),
        &format!("interval 0 and single-packet schedules vs continuous, X/S/key differ for {mismatched:?}"),
    );
}

#[test]
fn criterion_07_attack_failure_regime() {
    let start = Instant::now();
    let results: Vec<(bool, bool)> = SEEDS
        .par_iter()
        .map(|&seed| {
            let slow = simulate(&config(Scenario::Fragmented, seed, Some((5, 10 * NS_PER_MS))), &[PERIOD_10MS]).unwrap();
            let failed = !slow.attack.unwrap().succeeded(&slow.true_key);
            let fast = records(&config(Scenario::Fragmented, seed, Some((5, NS_PER_MS))), &[PERIOD_10MS]);
            (failed, fast[0].verdict.unwrap().attack_detected)
        })
        .collect();
    let failures = results.iter().filter(|r| r.0).count();
    let detected = results.iter().filter(|r| r.1).count();
    within(
        7,
        start,
        Duration::from_secs(120),
        failures >= 4 && detected == SEEDS.len(),
        format!(
            "packets of 5 every 10 ms fail recovery in {failures}/{n} seeds (need >= 4); \
             packets of 5 every 1 ms detected at 10 ms sampling in {detected}/{n}",
            n = SEEDS.len()
        ),
    );
}

/// Timestamped LRU: each set keeps (line, last_use); the oldest stamp is evicted.
#[derive(Clone)]
struct StampedCache {
    sets: [Vec<(u64, u64)>; 2],
    now: u64,
}

const TOY_WAYS: usize = 2;
const TOY_LINE: u64 = 64;

impl StampedCache {
    fn new() -> Self {
        StampedCache { sets: [Vec::new(), Vec::new()], now: 0 }
    }

    fn access(&mut self, line: u64) -> AccessKind {
        self.now += 1;
        let set = &mut self.sets[(line % 2) as usize];
        if let Some(entry) = set.iter_mut().find(|e| e.0 == line) {
            entry.1 = self.now;
            return AccessKind::Hit;
        }
        if set.len() == TOY_WAYS {
            let oldest = (0..set.len()).min_by_key(|&i| set[i].1).unwrap();
            set.swap_remove(oldest);
        }
        set.push((line, self.now));
        AccessKind::Miss
    }

    fn flush(&mut self, line: u64) {
        self.sets[(line % 2) as usize].retain(|e| e.0 != line);
    }

    fn resident(&self) -> Vec<u64> {
        self.sets
            .iter()
            .flat_map(|set| {
                let mut s = set.clone();
                s.sort_by_key(|e| e.1);
                s.into_iter().map(|e| e.0 * TOY_LINE)
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum Op {
    Access(u64),
    Flush(u64),
}

const TOY_LINES: [u64; 4] = [0, 2, 4, 1];
const MAX_LEN: usize = 8;

fn toy_ops() -> Vec<Op> {
    TOY_LINES.iter().flat_map(|&l| [Op::Access(l), Op::Flush(l)]).collect()
}

/// Applies one op to both models and compares outcome and ordered residency.
fn step(c: &mut Cache, o: &mut StampedCache, op: Op, salt: u64) -> Result<(), String> {
    match op {
        Op::Access(line) => {
            // The offset within the line must not matter.
            let got = c.access(line * TOY_LINE + (salt * 13) % TOY_LINE).kind;
            let want = o.access(line);
            if got != want {
                return Err(format!("access {line}: {got:?} vs oracle {want:?}"));
            }
        }
        Op::Flush(line) => {
            c.flush(line * TOY_LINE);
            o.flush(line);
        }
    }
    if c.resident_lines() != o.resident() {
        return Err(format!("residency {:?} vs oracle {:?}", c.resident_lines(), o.resident()));
    }
    Ok(())
}

/// Checks every continuation of up to `depth` more ops; returns the number of
/// sequences whose final state was compared, excluding the starting one.
fn explore(cache: &Cache, oracle: &StampedCache, depth: usize, ops: &[Op]) -> Result<u64, String> {
    if depth == 0 {
        return Ok(0);
    }
    let mut checked = 0;
    for (i, &op) in ops.iter().enumerate() {
        let (mut c, mut o) = (cache.clone(), oracle.clone());
        step(&mut c, &mut o, op, i as u64)?;
        checked += 1 + explore(&c, &o, depth - 1, ops)?;
    }
    Ok(checked)
}

#[test]
fn criterion_08_cache_matches_brute_force_model() {
    let start = Instant::now();
    let toy = CacheConfig { ways: TOY_WAYS, sets: 2, line_size: TOY_LINE, ..CacheConfig::default() };
    let ops = toy_ops();
    let root = Cache::new(toy).unwrap();
    let oracle = StampedCache::new();
    let empty_ok = root.resident_lines().is_empty();
    // Fan out over the first op so rayon has work items.
    let result: Result<Vec<u64>, String> = ops
        .par_iter()
        .enumerate()
        .map(|(i, &op)| {
            let (mut c, mut o) = (root.clone(), oracle.clone());
            step(&mut c, &mut o, op, i as u64)?;
            Ok(1 + explore(&c, &o, MAX_LEN - 1, &ops)?)
        })
        .collect();
    let (ok, detail) = match result {
        Ok(counts) => (empty_ok, format!("{} sequences of length <= {MAX_LEN} agree", 1 + counts.iter().sum::<u64>())),
        Err(e) => (false, e),
    };
    within(8, start, Duration::from_secs(30), ok, detail);
}

fn all_presets(seed: u64, out: Option<&std::path::Path>) -> Vec<fragcache::harness::presets::PresetOutput> {
    PRESET_NAMES.iter().map(|name| cmd_preset(name, seed, fragcache::harness::config::DEFAULT_NOISE_RATE, out).unwrap()).collect()
}

#[test]
fn criterion_09_counter_telescoping() {
    let mut panels = 0;
    let mut broken = Vec::new();
    for preset in all_presets(1, None) {
        for p in &preset.panels {
            panels += 1;
            let misses: u64 = p.record.samples.iter().map(|s| s.d_misses).sum();
            let loads: u64 = p.record.samples.iter().map(|s| s.d_loads).sum();
            if misses != p.record.totals.l3_misses || loads != p.record.totals.load_instructions {
                broken.push(p.panel.clone());
            }
        }
    }
    report(9, broken.is_empty() && panels > 0, &format!("{panels} preset panels checked, mismatched: {broken:?}"));
}

#[test]
fn criterion_10_presets_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    all_presets(11, Some(a.path()));
    all_presets(11, Some(b.path()));
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    let count_b = std::fs::read_dir(b.path()).unwrap().count();
    report(
        10,
        differing.is_empty() && names.len() == count_b && !names.is_empty(),
        &format!("{} files compared across two reruns, differing: {differing:?}", names.len()),
    );
}
