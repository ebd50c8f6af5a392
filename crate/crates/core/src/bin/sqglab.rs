//! `sqglab <experiment> --config <file> [--out dir] [--override key=value ...]`
//!
//! `regression` takes a directory of canned configs instead of a file and
//! compares every run with the frozen baselines in `<dir>/baselines`.
//! `SQGLAB_WORKERS` sets the size of the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use sqglab::experiments::{run_all_regression, run_to_dir, ExperimentConfig, ExperimentKind};
use sqglab::{Result, SqgError};

#[derive(Parser, Debug)]
#[command(name = "sqglab", version, about = "SQG norm-inflation laboratory")]
struct Cli {
    /// ansatz-norms, asymptotics-rate, residual-scaling, evolve, inflation,
    /// periodize-check, or regression
    experiment: String,
    /// Config file (a directory of configs for `regression`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` overrides applied before validation, e.g. `params.N=64`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `regression` only: write baselines instead of comparing against them.
    #[arg(long)]
    freeze: bool,
}

fn init_pool() -> Result<()> {
    if let Ok(v) = std::env::var("SQGLAB_WORKERS") {
        let n: usize = v.parse().map_err(|_| SqgError::Config(format!("SQGLAB_WORKERS = `{v}` is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SqgError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    init_pool()?;
    if cli.experiment == "regression" {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out/regression"));
        let summary = run_all_regression(&cli.config, &out, cli.freeze)?;
        for path in &summary.frozen {
            println!("froze {}", path.display());
        }
        for r in &summary.regressions {
            println!("REGRESSION {r}");
        }
        println!("{} configs, {} regressions", summary.configs.len(), summary.regressions.len());
        return Ok(summary.regressions.is_empty());
    }
    let kind = ExperimentKind::parse(&cli.experiment)?;
    let cfg = ExperimentConfig::load(&cli.config, &cli.overrides)?;
    if cfg.experiment != kind {
        return Err(SqgError::Config(format!(
            "config is for `{}`, not `{}`",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let start = Instant::now();
    let report = run_to_dir(&cfg, &out)?;
    for v in &report.verdicts {
        println!("{}", v.line());
    }
    eprintln!(
        "{}: {} tables in {} ({:.1} s), config {}",
        kind.name(),
        report.tables.len(),
        out.display(),
        start.elapsed().as_secs_f64(),
        &report.config_hash[..12]
    );
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("sqglab: {e}");
            ExitCode::from(2)
        }
    }
}
