//! Flush+Reload attacker against the last AES round.
//!
//! Each attack round flushes one monitored line per T-table, has the victim
//! encrypt a random block and reloads the lines. A line found absent proves
//! that none of its 16 entries fed the last round, so for every ciphertext
//! byte produced from that table the 16 key candidates `c ^ S(e)` are
//! counted against. The true last-round key byte collects the fewest counts.

use thiserror::Error;

use crate::aes::{self, AesKey, Block, TTables, ENTRY_BYTES, TABLE_BYTES, TABLE_ENTRIES};
use crate::sim::Simulation;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("victim pages are not shared yet ({completed} of {required} encryptions)")]
    NotDeduplicated { completed: u64, required: u64 },
    #[error("observation matrix has {rows} rows but the ciphertext log has {ciphertexts}")]
    LengthMismatch { rows: usize, ciphertexts: usize },
    #[error("no observations to score")]
    Empty,
    #[error("monitored line {line} out of range for table {table} ({lines} lines)")]
    LineOutOfRange { table: usize, line: u8, lines: usize },
    #[error("packet size must be at least 1")]
    PacketSize,
}

/// Line index watched in each of the four tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[derive(Default)]
pub struct MonitoredLines(pub [u8; 4]);


impl MonitoredLines {
    pub fn validate(&self, line_size: u64) -> Result<(), AttackError> {
        let lines = TABLE_BYTES / line_size as usize;
        for (table, &line) in self.0.iter().enumerate() {
            if line as usize >= lines {
                return Err(AttackError::LineOutOfRange { table, line, lines });
            }
        }
        Ok(())
    }

    /// Table entries covered by the monitored line of `table`.
    pub fn entries(&self, table: usize, line_size: u64) -> std::ops::Range<usize> {
        let per_line = line_size as usize / ENTRY_BYTES;
        let first = self.0[table] as usize * per_line;
        first..(first + per_line).min(TABLE_ENTRIES)
    }

    fn address(&self, sim: &Simulation, table: usize) -> u64 {
        let line_size = sim.cache().config().line_size;
        sim.victim().config.table_base + (table * TABLE_BYTES) as u64 + self.0[table] as u64 * line_size
    }

    pub fn addresses(&self, sim: &Simulation) -> [u64; 4] {
        std::array::from_fn(|t| self.address(sim, t))
    }
}

/// One row per attack round; bit `j` set when table `j`'s line was cached.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObservationMatrix {
    pub rows: Vec<u8>,
}

impl ObservationMatrix {
    pub fn bit(&self, round: usize, table: usize) -> bool {
        self.rows[round] >> table & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CiphertextLog {
    pub blocks: Vec<Block>,
}

/// Elimination counts per last-round-key byte (index `4 * col + row`) and candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LrkScores {
    pub counts: Vec<[u32; 256]>,
}

impl LrkScores {
    fn zeroed() -> Self {
        LrkScores { counts: vec![[0; 256]; 16] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LrkSelection {
    pub key: [u8; 16],
    /// Positions where more than one candidate shared the minimum.
    pub tied: [bool; 16],
}

impl LrkSelection {
    pub fn unique(&self) -> bool {
        !self.tied.iter().any(|&t| t)
    }
}

pub fn flush_monitored(sim: &mut Simulation, lines: &MonitoredLines) -> Result<(), AttackError> {
    if !sim.dedup_ready() {
        return Err(AttackError::NotDeduplicated {
            completed: sim.victim().completed_encryptions(),
            required: sim.victim().config.dedup.threshold_encryptions,
        });
    }
    for addr in lines.addresses(sim) {
        sim.attacker_flush(addr);
    }
    Ok(())
}

/// Flush, one victim encryption, timed reload of every monitored line.
pub fn run_attack_round(sim: &mut Simulation, lines: &MonitoredLines) -> Result<(u8, Block), AttackError> {
    flush_monitored(sim, lines)?;
    let (ct, _) = sim.run_encryption();
    let threshold = sim.cache().config().hit_threshold();
    let mut row = 0u8;
    for (table, addr) in lines.addresses(sim).into_iter().enumerate() {
        if sim.attacker_probe(addr).latency < threshold {
            row |= 1 << table;
        }
    }
    Ok((row, ct))
}

/// Non-access elimination scoring over the collected observations.
pub fn score_lrk(
    x: &ObservationMatrix,
    s: &CiphertextLog,
    tables: &TTables,
    lines: &MonitoredLines,
    line_size: u64,
) -> Result<LrkScores, AttackError> {
    if x.len() != s.blocks.len() {
        return Err(AttackError::LengthMismatch { rows: x.len(), ciphertexts: s.blocks.len() });
    }
    if x.is_empty() {
        return Err(AttackError::Empty);
    }
    lines.validate(line_size)?;

    // lane[row][k]: row lane of the k-th entry in the line of table (row + 2) % 4
    let lanes: [Vec<u8>; 4] = std::array::from_fn(|row| {
        let table = (row + 2) % 4;
        lines.entries(table, line_size).map(|e| tables.lane(table, e, row)).collect()
    });

    let mut scores = LrkScores::zeroed();
    for (t, ct) in s.blocks.iter().enumerate() {
        for row in 0..4 {
            if x.bit(t, (row + 2) % 4) {
                continue;
            }
            for col in 0..4 {
                let c = ct.get(row, col);
                let counts = &mut scores.counts[4 * col + row];
                for &lane in &lanes[row] {
                    counts[(c ^ lane) as usize] += 1;
                }
            }
        }
    }
    Ok(scores)
}

/// Per-position argmin; ties go to the lowest candidate and are flagged.
pub fn select_lrk(scores: &LrkScores) -> LrkSelection {
    let mut key = [0u8; 16];
    let mut tied = [false; 16];
    for (pos, counts) in scores.counts.iter().enumerate() {
        let min = *counts.iter().min().expect("256 candidates");
        key[pos] = counts.iter().position(|&c| c == min).unwrap() as u8;
        tied[pos] = counts.iter().filter(|&&c| c == min).count() > 1;
    }
    LrkSelection { key, tied }
}

pub fn recover_master_key(scores: &LrkScores) -> AesKey {
    aes::invert_key_schedule(&select_lrk(scores).key)
}

/// Packetised attack timing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackSchedule {
    pub packet_size: u64,
    /// Idle time between consecutive packets, in ns.
    pub interval: u64,
    pub total: u64,
}

impl AttackSchedule {
    pub const DEFAULT_TOTAL: u64 = 50_000;

    pub fn continuous(total: u64) -> Self {
        AttackSchedule { packet_size: total.max(1), interval: 0, total }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if self.packet_size == 0 {
            Err(AttackError::PacketSize)
        } else {
            Ok(())
        }
    }

    pub fn packets(&self) -> u64 {
        self.total.div_ceil(self.packet_size)
    }

    /// Encryptions actually issued once the final packet is padded to full size.
    pub fn padded_total(&self) -> u64 {
        self.packets() * self.packet_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub x: ObservationMatrix,
    pub s: CiphertextLog,
    pub selection: LrkSelection,
    pub recovered: AesKey,
}

impl AttackOutcome {
    pub fn succeeded(&self, true_key: &AesKey) -> bool {
        self.recovered == *true_key
    }
}

/// Runs the attack as packets of back-to-back rounds separated by idle time.
/// The caller is responsible for having let de-duplication complete.
pub fn run_fragmented_attack(
    schedule: &AttackSchedule,
    sim: &mut Simulation,
    lines: &MonitoredLines,
) -> Result<AttackOutcome, AttackError> {
    schedule.validate()?;
    lines.validate(sim.cache().config().line_size)?;
    let mut x = ObservationMatrix::default();
    let mut s = CiphertextLog::default();
    for packet in 0..schedule.packets() {
        if packet > 0 {
            sim.idle(schedule.interval);
        }
        for _ in 0..schedule.packet_size {
            let (row, ct) = run_attack_round(sim, lines)?;
            x.rows.push(row);
            s.blocks.push(ct);
        }
    }
    let scores = score_lrk(&x, &s, aes::ttables(), lines, sim.cache().config().line_size)?;
    let selection = select_lrk(&scores);
    let recovered = aes::invert_key_schedule(&selection.key);
    Ok(AttackOutcome { x, s, selection, recovered })
}
