// A full harness run with overrides, written under the system temp directory.

use lowrank::harness::{run, Experiment, RunConfig};
use lowrank::Result;

pub fn run_example() -> Result<()> {
    let mut cfg = RunConfig::new(Experiment::ResnetRank);
    cfg.output_dir = std::env::temp_dir().join("lowrank-example-runs");
    cfg.seed = 1;
    for s in ["width=8", "depths=[2, 4, 8]", "draws=4"] {
        cfg.apply_override(s)?;
    }
    let record = run(&cfg)?;
    println!("wrote {}", record.run_dir.display());
    println!("{}", record.summary["statistics"]);
    std::fs::remove_dir_all(&record.run_dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("run_experiment example failed");
}
