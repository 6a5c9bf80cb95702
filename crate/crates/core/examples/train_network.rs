// Step-size sweep for a small linear network on a low-rank task.

use lowrank::dynamics::LeastSquaresTask;
use lowrank::netsim::{lr_sweep_over, Activation, InitSpec, NetworkSpec, OptimizerKind, TrainConfig};
use lowrank::rng::rng_from_seed;
use lowrank::Result;

pub fn run_example() -> Result<()> {
    let task = LeastSquaresTask::synthetic(8, 8, 32, 2, &mut rng_from_seed(1))?;
    for depth in [1, 3] {
        let spec = NetworkSpec::uniform(8, depth, Activation::Linear, false)?;
        let mut cfg = TrainConfig::new(0.1, 300, OptimizerKind::Momentum);
        cfg.eta_scale = 1.0 / 32.0;
        let (eta, run) = lr_sweep_over(&spec, &InitSpec::scaled_normal(1.0, 2), &task, &cfg, &[0.5, 0.1, 0.02])?;
        let last = run.records.last().unwrap();
        println!(
            "depth {depth}: eta {eta}  loss {:.3e}  weight rank {:.3}  gram rank {:.3}",
            last.loss / 32.0,
            last.weight_rank.unwrap_or(f64::NAN),
            last.gram_rank.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("train_network example failed");
}
