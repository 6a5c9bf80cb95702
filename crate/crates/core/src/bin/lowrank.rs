use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lowrank::harness::{self, Experiment, RunConfig};
use lowrank::{Error, Result};

/// Run one named experiment and write its CSVs, summary and plot script.
#[derive(Parser, Debug)]
#[command(name = "lowrank", version)]
struct Cli {
    /// measures, theorem1, rankdist, leastsq, dynamics_check, landscape,
    /// resnet_rank, expand_verify or rank_relation
    experiment: String,
    /// TOML config; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set depths=[1,2]`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, env = "LOWRANK_THREADS")]
    threads: Option<usize>,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::from_file(path)?;
            if cfg.experiment != experiment {
                return Err(Error::Config {
                    path: "experiment".into(),
                    message: format!("config is for {} but {experiment} was requested", cfg.experiment),
                });
            }
            cfg
        }
        None => RunConfig::new(experiment),
    };
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config {
                path: "threads".into(),
                message: "must be positive".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    }
    let cfg = config(&cli)?;
    let record = harness::run(&cfg)?;
    println!("{}", record.run_dir.display());
    println!("{}", serde_json::to_string_pretty(&record.summary["statistics"]).unwrap_or_default());
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lowrank: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
