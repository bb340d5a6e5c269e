use std::io::Read as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msquid_cli::config::{ExperimentConfig, Method, Mode};
use msquid_cli::error::HarnessError;
use msquid_cli::harness::{make_datasets, parse_samples, recover_samples, run_case_study, run_recovery_bench, train_all};
use msquid_cli::metrics::{to_csv, write_metrics, MetricsRecord};

#[derive(Parser)]
#[command(name = "msquid", version, about = "Modulo-sampling recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and cache the train/val/test datasets of every cell.
    Gen(Common),
    /// Grid-search and checkpoint a network per cell.
    Train(Common),
    /// Compare the methods against the classical ADC on every cell.
    Bench(Common),
    /// Weak/strong two-band study with per-band metrics.
    Casestudy(Common),
    /// Recover a single folded record (whitespace- or comma-separated samples).
    Recover(RecoverArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; unset fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for datasets, models and results.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    of: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    of: f64,
    #[arg(long)]
    lambda: f64,
    /// Checkpoint for `--method msquid`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input file; `-` reads stdin.
    input: PathBuf,
}

impl Common {
    fn resolve(&self, default_mode: Option<Mode>) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match (&self.config, self.mode.or(default_mode)) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(Mode::TwoBand)) => ExperimentConfig::two_band(),
            (None, _) => ExperimentConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if !self.method.is_empty() {
            cfg.methods = self.method.clone();
        }
        if !self.of.is_empty() {
            cfg.oversampling = self.of.clone();
        }
        if !self.snr.is_empty() {
            cfg.snr_db = self.snr.clone();
        }
        if !self.lambda.is_empty() {
            cfg.lambda = self.lambda.clone();
        }
        if let Some(b) = self.bits {
            cfg.bits = b;
        }
        if let Some(n) = self.n {
            cfg.n_samples = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(cfg: &ExperimentConfig, stem: &str, records: &[MetricsRecord]) -> Result<(), HarnessError> {
    let dir = cfg.out_dir.join("results");
    write_metrics(&dir, stem, cfg.mode, records)?;
    print!("{}", to_csv(cfg.mode, records));
    eprintln!("wrote {}", dir.join(format!("{stem}.csv")).display());
    Ok(())
}

fn progress(r: &MetricsRecord) {
    eprintln!(
        "{:>6} of={} lambda={} {} band={}: {:.1}% ({} signals)",
        r.method.name(),
        r.of,
        r.lambda,
        r.snr_db.map_or_else(|| format!("bits={}", r.bits.unwrap_or(0)), |s| format!("snr={s}")),
        r.band.name(),
        r.outperformance_pct,
        r.count
    );
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = c.resolve(None)?;
            for dir in make_datasets(&cfg)? {
                eprintln!("{}", dir.display());
            }
        }
        Command::Train(c) => {
            let cfg = c.resolve(None)?;
            for r in train_all(&cfg, |line| eprintln!("{line}"))? {
                println!(
                    "{}: L={} sq={} lr={} validation {:.1}% -> {}",
                    r.cell,
                    r.chosen.layers,
                    r.chosen.sq_enabled,
                    r.chosen.lr,
                    r.val_outperformance_pct,
                    r.checkpoint.display()
                );
            }
        }
        Command::Bench(c) => {
            let cfg = c.resolve(None)?;
            let records = run_recovery_bench(&cfg, progress)?;
            emit(&cfg, "recovery", &records)?;
        }
        Command::Casestudy(c) => {
            let cfg = c.resolve(Some(Mode::TwoBand))?;
            let records = run_case_study(&cfg, progress)?;
            emit(&cfg, "casestudy", &records)?;
        }
        Command::Recover(a) => {
            let cfg = match &a.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let text = if a.input.as_os_str() == "-" {
                let mut s = String::new();
                std::io::stdin()
                    .read_to_string(&mut s)
                    .map_err(|e| HarnessError::Io { path: a.input.clone(), source: e })?;
                s
            } else {
                std::fs::read_to_string(&a.input).map_err(|e| HarnessError::Io { path: a.input.clone(), source: e })?
            };
            let samples = parse_samples(&text)?;
            let x = recover_samples(&cfg, samples, a.of, a.lambda, a.method, a.model.as_deref())?;
            for v in x {
                println!("{v}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) | HarnessError::Input(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
