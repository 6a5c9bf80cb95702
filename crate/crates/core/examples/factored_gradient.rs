// One gradient step on a factored linear map against its preconditioned
// first-order form.

use lowrank::dynamics::{equivalence_residual, FactoredLinear, LeastSquaresTask};
use lowrank::rng::rng_from_seed;
use lowrank::{DenseMatrix, Result};

pub fn run_example() -> Result<()> {
    let mut rng = rng_from_seed(7);
    let task = LeastSquaresTask::synthetic(5, 5, 20, 3, &mut rng)?;
    let task = LeastSquaresTask::from_generator(task.w_star.clone().unwrap(), task.x.scale(1.0 / 20f64.sqrt()))?;
    let f = FactoredLinear::new((0..3).map(|_| DenseMatrix::random_normal(5, 5, 0.45, &mut rng)).collect())?;
    let mut last = None;
    for eta in [1e-2, 1e-3, 1e-4] {
        let r = equivalence_residual(&f, &task, eta)?;
        match last {
            Some(prev) => println!("eta {eta:.0e}: residual {r:.3e}  ratio {:.1}", prev / r),
            None => println!("eta {eta:.0e}: residual {r:.3e}"),
        }
        last = Some(r);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("factored_gradient example failed");
}
