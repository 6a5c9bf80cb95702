//! Experiment bodies. Each returns its tables and headline statistics; the
//! caller in `harness` owns all file output.

mod algebra;
mod sampling;
mod spectra;
mod training;

use serde_json::{Map, Value};

use super::params::{self, LeastsqVariant};
use super::{Experiment, RunConfig};
use crate::error::{Error, Result};
use crate::rng::mix_seed;

pub use algebra::{dynamics_check, expand_verify, loglog_slope};
pub use sampling::{rankdist, rankdist_outcome, residual_vs_plain, resnet_outcome, DepthDistribution, ResidualStudy};
pub use spectra::{landscape, measures, pearson, rank_relation, theorem1};
pub use training::{
    loss_grid, loss_grid_outcome, optimizer_outcome, optimizer_ranks, trained_rank, trained_rank_outcome, LossCell,
    RankCell, ORDER_TOLERANCE,
};

/// One CSV file: a header row and rows of preformatted cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Cells of the named column, parsed as numbers. Empty cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Everything an experiment produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Additional files as `(name, contents)`.
    pub extra_files: Vec<(String, String)>,
    pub statistics: Map<String, Value>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub(crate) fn stat(&mut self, key: &str, value: impl Into<Value>) {
        self.statistics.insert(key.to_string(), value.into());
    }
}

pub(crate) fn num(v: f64) -> String {
    crate::csv::num(v)
}

pub(crate) fn int(v: impl std::fmt::Display) -> String {
    v.to_string()
}

/// JSON number, or `null` when `v` is not finite.
pub(crate) fn json_num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub(crate) fn json_nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| json_num(*x)).collect())
}

/// Two-level seed derivation shared by all experiments.
pub(crate) fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix_seed(mix_seed(seed, a), b)
}

/// Median; the mean of the two middle values for even lengths. NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `v[i+1] <= v[i] + tol` for every consecutive pair.
pub fn weakly_decreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + tol)
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Runs the experiment named in `cfg` with its parsed parameters.
pub(crate) fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed;
    match cfg.experiment {
        Experiment::Measures => {
            let p: params::MeasuresParams = params::parse(&cfg.params)?;
            p.validate()?;
            measures(&p, seed)
        }
        Experiment::Theorem1 => {
            let p: params::Theorem1Params = params::parse(&cfg.params)?;
            p.validate()?;
            theorem1(&p, seed)
        }
        Experiment::Rankdist => {
            let p: params::RankdistParams = params::parse(&cfg.params)?;
            p.validate()?;
            rankdist_outcome(&p, seed)
        }
        Experiment::Leastsq => {
            let mut table = cfg.params.clone();
            let variant = match table.remove("variant") {
                None => LeastsqVariant::default(),
                Some(v) => v
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::config("params.variant", e.message().to_string()))?,
            };
            match variant {
                LeastsqVariant::LossGrid => {
                    let p: params::LossGridParams = params::parse(&table)?;
                    p.validate()?;
                    loss_grid_outcome(&p, seed)
                }
                LeastsqVariant::TrainedRank => {
                    let p: params::TrainedRankParams = params::parse(&table)?;
                    p.validate()?;
                    trained_rank_outcome(&p, seed)
                }
                LeastsqVariant::Optimizers => {
                    let p: params::OptimizerParams = params::parse(&table)?;
                    p.validate()?;
                    optimizer_outcome(&p, seed)
                }
            }
        }
        Experiment::DynamicsCheck => {
            let p: params::DynamicsParams = params::parse(&cfg.params)?;
            p.validate()?;
            dynamics_check(&p, seed)
        }
        Experiment::Landscape => {
            let p: params::LandscapeParams = params::parse(&cfg.params)?;
            p.validate()?;
            landscape(&p, seed)
        }
        Experiment::ResnetRank => {
            let p: params::ResnetParams = params::parse(&cfg.params)?;
            p.validate()?;
            resnet_outcome(&p, seed)
        }
        Experiment::ExpandVerify => {
            let p: params::ExpandParams = params::parse(&cfg.params)?;
            p.validate()?;
            expand_verify(&p, seed)
        }
        Experiment::RankRelation => {
            let p: params::RankRelationParams = params::parse(&cfg.params)?;
            p.validate()?;
            rank_relation(&p, seed)
        }
    }
}
