use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fragcache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragcache")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "scenario=sideways\n").unwrap();
    let out = fragcache(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = fragcache(&["run", "--scenario", "fragmented", "--total-encryptions", "100"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("packet_size"));
}

#[test]
fn unknown_preset_and_bad_flags_exit_1() {
    assert_eq!(fragcache(&["preset", "fig42"]).status.code(), Some(1));
    assert_eq!(fragcache(&["run", "--seed", "many"]).status.code(), Some(1));
    assert_eq!(fragcache(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let target = blocker.join("samples.csv");
    let out = fragcache(&["run", "--total-encryptions", "200", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_identical_csv_for_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        let out = fragcache(&["run", "--seed", "9", "--total-encryptions", "3000", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("key_recovered="));
    }
    let a = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(a, fs::read_to_string(&paths[1]).unwrap());
    assert_eq!(a.lines().next(), Some("t_ns,d_misses,d_loads,metric"));
    assert!(a.lines().count() > 1);
}

#[test]
fn fragmented_run_reports_detection() {
    let out = fragcache(&[
        "run",
        "--scenario",
        "fragmented",
        "--packet-size",
        "500",
        "--interval-ns",
        "10000000",
        "--total-encryptions",
        "5000",
        "--period-ns",
        "10000000",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("scenario=fragmented"));
    assert!(text.contains("attack_detected="));
    assert!(text.contains("packet_size=500"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# baseline run\nscenario=no-attack\nseed=4\ntotal_encryptions=2000\n").unwrap();
    let out = fragcache(&["run", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("scenario=no-attack"));
    assert!(text.contains("seed=5\n"));
    assert!(text.contains("total_encryptions=2000"));
    assert!(!text.contains("recovered_key"));
}

fn csvs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn fig1_preset_writes_six_panels_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = fragcache(&["preset", "fig1", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names = csvs(dir.path());
    assert_eq!(names.len(), 7, "{names:?}");
    assert!(names.contains(&"fig1_attack_100us.csv".to_string()));
    assert!(names.contains(&"fig1_no-attack_10ms.csv".to_string()));
    let summary = fs::read_to_string(dir.path().join("fig1_summary.csv")).unwrap();
    assert_eq!(summary, stdout(&out));
    assert_eq!(summary.lines().count(), 7);
}

#[test]
fn sweep_prints_one_row_per_cell_and_rate() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("sweep.csv");
    let out = fragcache(&[
        "sweep",
        "--packet-sizes",
        "50,500",
        "--intervals",
        "1000000",
        "--rates",
        "1000000,10000000",
        "--total-encryptions",
        "1000",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 1 + 2 * 2);
    assert_eq!(fs::read_to_string(&table).unwrap(), stdout(&out));
}
