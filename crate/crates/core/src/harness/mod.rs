//! Configuration, orchestration and persistence of the named experiments.
//!
//! A run reads a TOML config, executes one experiment and writes
//! `<output_dir>/<experiment>/<unix-seconds>-<seed>/` containing the config
//! echo, CSV tables, `summary.json` and a gnuplot script.

mod config;
mod experiments;
mod idx;
mod params;
mod plot;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use config::RunConfig;
pub use experiments::*;
pub use idx::{load_idx, write_idx_images, write_idx_labels, IdxDataset, IMAGE_MAGIC, LABEL_MAGIC};
pub use params::*;

/// JSON schema every `summary.json` satisfies.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Measures,
    Theorem1,
    Rankdist,
    Leastsq,
    DynamicsCheck,
    Landscape,
    ResnetRank,
    ExpandVerify,
    RankRelation,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Measures,
        Experiment::Theorem1,
        Experiment::Rankdist,
        Experiment::Leastsq,
        Experiment::DynamicsCheck,
        Experiment::Landscape,
        Experiment::ResnetRank,
        Experiment::ExpandVerify,
        Experiment::RankRelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Measures => "measures",
            Experiment::Theorem1 => "theorem1",
            Experiment::Rankdist => "rankdist",
            Experiment::Leastsq => "leastsq",
            Experiment::DynamicsCheck => "dynamics_check",
            Experiment::Landscape => "landscape",
            Experiment::ResnetRank => "resnet_rank",
            Experiment::ExpandVerify => "expand_verify",
            Experiment::RankRelation => "rank_relation",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// What a finished run left on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    /// SHA-256 of the canonical config text (output directory excluded).
    pub input_hash: String,
    pub run_dir: PathBuf,
    /// CSV file names relative to `run_dir`.
    pub csv_files: Vec<String>,
    pub summary: serde_json::Value,
    pub wall_time_seconds: f64,
}

impl RunRecord {
    pub fn summary_path(&self) -> PathBuf {
        self.run_dir.join("summary.json")
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of everything that determines a run's numbers.
pub fn input_hash(cfg: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(cfg.canonical_text()?.as_bytes());
    Ok(hex(&h.finalize()))
}

/// Executes `cfg.experiment` and writes its outputs.
pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    let wrap = |e: Error| match e {
        Error::Config { .. } | Error::Experiment { .. } => e,
        other => Error::Experiment {
            experiment: cfg.experiment.name().to_string(),
            source: Box::new(other),
        },
    };
    let started = Instant::now();
    let outcome = experiments::execute(cfg).map_err(wrap)?;
    let wall = started.elapsed().as_secs_f64();
    let hash = input_hash(cfg)?;
    let run_dir = fresh_run_dir(&cfg.output_dir, cfg.experiment, cfg.seed)?;

    crate::csv::write(&run_dir.join("config.toml"), &cfg.to_toml()?)?;
    let mut files = Vec::new();
    for table in &outcome.tables {
        let name = format!("{}.csv", table.name);
        crate::csv::write(&run_dir.join(&name), &table.to_csv())?;
        files.push(name);
    }
    for (name, text) in &outcome.extra_files {
        crate::csv::write(&run_dir.join(name), text)?;
        files.push(name.clone());
    }
    crate::csv::write(&run_dir.join("plot.gp"), &plot::script(cfg.experiment, &outcome))?;
    files.push("plot.gp".into());
    files.push("config.toml".into());

    let summary = serde_json::json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "input_hash": hash,
        "files": files,
        "statistics": outcome.statistics,
        "notes": outcome.notes,
        "wall_time_seconds": wall,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Numeric(e.to_string()))?;
    crate::csv::write(&run_dir.join("summary.json"), &(text + "\n"))?;

    Ok(RunRecord {
        config: cfg.clone(),
        input_hash: hash,
        run_dir,
        csv_files: outcome.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
        summary,
        wall_time_seconds: wall,
    })
}

/// Runs the residual-versus-plain product study under `cfg`.
pub fn resnet_rank_experiment(cfg: &RunConfig) -> Result<RunRecord> {
    if cfg.experiment != Experiment::ResnetRank {
        return Err(Error::config("experiment", format!("expected resnet_rank, got {}", cfg.experiment)));
    }
    run(cfg)
}

fn fresh_run_dir(root: &Path, experiment: Experiment, seed: u64) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = root.join(experiment.name());
    let mut dir = base.join(format!("{secs}-{seed}"));
    let mut n = 1;
    while dir.exists() {
        dir = base.join(format!("{secs}-{seed}-{n}"));
        n += 1;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    Ok(dir)
}
