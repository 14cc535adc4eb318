use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fragcache::harness::output::summary_to_csv;
use fragcache::harness::presets::{self, SweepSpec};
use fragcache::harness::{self, ConfigError, ExperimentConfig, ExperimentError};

#[derive(Parser, Debug)]
#[command(name = "fragcache", version, about = "Flush+Reload on T-table AES and a PMC detector, simulated")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key=value configuration file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (run, sweep) or directory (preset)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Background evictions per simulated ms
    #[arg(long, global = true)]
    noise_rate: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single configured experiment
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        packet_size: Option<u64>,
        #[arg(long)]
        interval_ns: Option<u64>,
        #[arg(long)]
        total_encryptions: Option<u64>,
        #[arg(long)]
        period_ns: Option<u64>,
        #[arg(long)]
        warmup_ns: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Victim key as 32 hex digits (default: derived from the seed)
        #[arg(long)]
        key: Option<String>,
    },
    /// Reproduce the panels of one figure
    Preset {
        /// fig1 .. fig6
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Fragmented attack over packet size x interval x sampling rate
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        packet_sizes: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        intervals: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<u64>>,
        #[arg(long)]
        total_encryptions: Option<u64>,
    },
}

fn base_config(common: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
        cfg.apply_text(&text)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(rate) = common.noise_rate {
        cfg.noise_rate = rate;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn set_opt<T: ToString>(cfg: &mut ExperimentConfig, key: &str, value: &Option<T>) -> Result<(), ConfigError> {
    match value {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn execute(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run { common, scenario, packet_size, interval_ns, total_encryptions, period_ns, warmup_ns, threshold, key } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg, "scenario", &scenario)?;
            set_opt(&mut cfg, "packet_size", &packet_size)?;
            set_opt(&mut cfg, "interval_ns", &interval_ns)?;
            set_opt(&mut cfg, "total_encryptions", &total_encryptions)?;
            set_opt(&mut cfg, "period_ns", &period_ns)?;
            set_opt(&mut cfg, "warmup_ns", &warmup_ns)?;
            set_opt(&mut cfg, "threshold", &threshold)?;
            set_opt(&mut cfg, "key", &key)?;
            let record = harness::cmd_run(&cfg)?;
            print!("{}", record.summary());
        }
        Command::Preset { name, common } => {
            let cfg = base_config(&common)?;
            let result = harness::cmd_preset(&name, cfg.seed, cfg.noise_rate, cfg.out.as_deref())?;
            for p in &result.panels {
                if let Some(path) = &p.path {
                    eprintln!("wrote {}", path.display());
                }
            }
            print!("{}", summary_to_csv(&result.summary));
        }
        Command::Sweep { common, packet_sizes, intervals, rates, total_encryptions } => {
            let cfg = base_config(&common)?;
            let defaults = SweepSpec::default();
            let spec = SweepSpec {
                packet_sizes: packet_sizes.unwrap_or(defaults.packet_sizes),
                intervals: intervals.unwrap_or(defaults.intervals),
                rates: rates.unwrap_or(defaults.rates),
                total: total_encryptions.unwrap_or(cfg.total_encryptions),
                seed: cfg.seed,
                noise_rate: cfg.noise_rate,
            };
            let rows = presets::cmd_sweep(&spec)?;
            let table = summary_to_csv(&rows);
            if let Some(path) = &cfg.out {
                std::fs::write(path, &table).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
