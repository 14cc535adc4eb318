use fragcache::detector::{PERIOD_10MS, PERIOD_1MS};
use fragcache::harness::output::{parse_samples_csv, samples_to_csv, SummaryRow};
use fragcache::harness::presets::SweepSpec;
use fragcache::harness::{cmd_run, cmd_sweep, ExperimentConfig, Scenario};
use fragcache::sim::NS_PER_MS;

fn fragmented(seed: u64, period: u64) -> ExperimentConfig {
    ExperimentConfig {
        scenario: Scenario::Fragmented,
        packet_size: Some(50),
        interval_ns: Some(2 * NS_PER_MS),
        total_encryptions: 4_000,
        period_ns: period,
        seed,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_cell_sweep_matches_run() {
    let spec = SweepSpec {
        packet_sizes: vec![50],
        intervals: vec![2 * NS_PER_MS],
        rates: vec![PERIOD_1MS, PERIOD_10MS],
        total: 4_000,
        seed: 8,
        ..SweepSpec::default()
    };
    let rows = cmd_sweep(&spec).unwrap();
    for (row, period) in rows.iter().zip([PERIOD_1MS, PERIOD_10MS]) {
        let record = cmd_run(&fragmented(8, period)).unwrap();
        assert_eq!(*row, SummaryRow::from_record(&row.panel, &record));
    }
}

#[test]
fn csv_reproduces_record_samples() {
    let record = cmd_run(&fragmented(3, PERIOD_1MS)).unwrap();
    let parsed = parse_samples_csv(&samples_to_csv(&record.samples)).unwrap();
    assert_eq!(parsed.len(), record.samples.len());
    for ((sample, metric), point) in parsed.iter().zip(&record.metrics) {
        assert_eq!(sample.t, point.t);
        assert_eq!(*metric, point.value);
    }
    assert_eq!(parsed.into_iter().map(|p| p.0).collect::<Vec<_>>(), record.samples);
}

#[test]
fn record_totals_match_samples() {
    let record = cmd_run(&ExperimentConfig { scenario: Scenario::NoAttack, total_encryptions: 3_000, ..Default::default() }).unwrap();
    assert_eq!(record.samples.iter().map(|s| s.d_loads).sum::<u64>(), record.totals.load_instructions);
    assert_eq!(record.totals.load_instructions, (3_000 + 300) * 3_700);
}
