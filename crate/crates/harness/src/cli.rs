//! Command line front end. Exit codes: 0 pass, 2 threshold failure,
//! 1 usage or runtime error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, GridConfig};
use crate::error::{HarnessError, Result};
use crate::experiments::{
    boundedness_scan, decompose_symbol, hessian_estimate, jacobian_estimate, thm3_estimate_ratio, verify_identities,
};
use crate::report::{ReportRecord, ReportWriter};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_THRESHOLD: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mlab", version, about = "Multilinear Fourier multiplier experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid as `DxN`, e.g. `2x16`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    symbol: Option<String>,
    /// Root of the output tree; records go to `<out>/<id>/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact polynomial identity suite; prints a JSON array of reports.
    VerifyIdentities {
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    BoundednessScan(Common),
    Thm3Scan(Common),
    JacobianEstimate(Common),
    HessianEstimate(Common),
    /// Separable expansion; writes `expansion.mlx` next to the records.
    DecomposeSymbol(Common),
    /// Summarizes `records.jsonl` of an experiment.
    Report {
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(name: &str, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(name),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(grid) = &common.grid {
        cfg.grid = GridConfig::parse(grid)?;
    }
    if let Some(symbol) = &common.symbol {
        cfg.symbol = symbol.clone();
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_record(record: &ReportRecord) {
    for c in &record.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{verdict} {} = {:.6e} (threshold {:.3e})", c.name, c.value, c.threshold);
    }
    if let Some(s) = record.stats {
        println!("ratios: min {:.6e} median {:.6e} max {:.6e}", s.min, s.median, s.max);
    }
}

fn verdict(passed: bool) -> i32 {
    if passed {
        EXIT_PASS
    } else {
        EXIT_THRESHOLD
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let (name, common) = match &cli.command {
        Command::VerifyIdentities { dims, instances, seed, out } => {
            let tag = format!("dims={dims:?};instances={instances};seed={seed}");
            let hash: String = Sha256::digest(tag.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
            let (mut record, reports) = verify_identities("verify-identities", dims, *instances, *seed)?;
            record.config_hash = hash;
            ReportWriter::new(out.join("verify-identities"))?.append(&record)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
            return Ok(verdict(record.passed));
        }
        Command::Report { id, out } => {
            let records = ReportWriter::new(out.join(id))?.read_records()?;
            if records.is_empty() {
                return Err(HarnessError::Usage(format!("no records for `{id}`")));
            }
            for r in &records {
                let s = r.stats.map(|s| format!("{:.4e}", s.max)).unwrap_or_else(|| "-".into());
                println!(
                    "{} {} {} max_ratio={} runtime={:.2}s {}",
                    r.experiment,
                    &r.config_hash[..r.config_hash.len().min(12)],
                    r.symbol,
                    s,
                    r.runtime_s,
                    if r.passed { "pass" } else { "FAIL" }
                );
            }
            return Ok(verdict(records.iter().all(|r| r.passed)));
        }
        Command::BoundednessScan(c) => ("boundedness-scan", c),
        Command::Thm3Scan(c) => ("thm3-scan", c),
        Command::JacobianEstimate(c) => ("jacobian-estimate", c),
        Command::HessianEstimate(c) => ("hessian-estimate", c),
        Command::DecomposeSymbol(c) => ("decompose-symbol", c),
    };
    let cfg = load_config(name, common)?;
    let writer = ReportWriter::new(cfg.output_dir())?;
    let record = match name {
        "boundedness-scan" => boundedness_scan(&cfg)?,
        "thm3-scan" => thm3_estimate_ratio(&cfg)?,
        "jacobian-estimate" => jacobian_estimate(&cfg)?,
        "hessian-estimate" => hessian_estimate(&cfg)?,
        _ => {
            let (record, expansion) = decompose_symbol(&cfg)?;
            expansion.save(cfg.output_dir().join("expansion.mlx"))?;
            record
        }
    };
    writer.append(&record)?;
    print_record(&record);
    Ok(verdict(record.passed))
}

/// Runs the command line on `argv` (program name first) and returns the
/// exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
