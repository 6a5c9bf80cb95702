// Monte-Carlo distribution of Gram effective rank at initialisation.

use lowrank::gram::GramKind;
use lowrank::montecarlo::sample_rank_distribution_with;
use lowrank::netsim::{Activation, InitSpec, NetworkSpec};
use lowrank::rng::rng_from_seed;
use lowrank::{DenseMatrix, Result};

pub fn run_example() -> Result<()> {
    let data = DenseMatrix::random_normal(8, 32, 1.0, &mut rng_from_seed(0));
    for depth in [1, 4] {
        let spec = NetworkSpec::uniform(8, depth, Activation::Linear, false)?;
        let d = sample_rank_distribution_with(&spec, &InitSpec::normal(1.0, 5), &data, 128, GramKind::Cosine, 16, 5, 2)?;
        let peak = d.pdf_grid.iter().zip(&d.smoothed_pdf).max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        println!(
            "depth {depth}: mean {:.4} +- {:.4}  mode near {:.3}",
            d.mean(),
            d.standard_error(),
            peak.0 .0
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("rank_distribution example failed");
}
