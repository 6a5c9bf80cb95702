// Depth expansion of dense and convolutional layers, and collapsing back.

use lowrank::dynamics::end_to_end;
use lowrank::expand::{collapse_conv, expand_conv, expand_fc, verify_equivalence, ConvWeight, ExpansionMode, ExpansionSpec};
use lowrank::rng::rng_from_seed;
use lowrank::spectral::{singular_values, threshold_rank};
use lowrank::{DenseMatrix, Result};

pub fn run_example() -> Result<()> {
    let mut rng = rng_from_seed(11);
    let w = DenseMatrix::random_normal(6, 5, 0.4, &mut rng);
    let f = expand_fc(&w, &ExpansionSpec::new(3, 5, ExpansionMode::ExactBalanced)?, 0)?;
    println!("dense: {} factors, deviation {:.2e}", f.depth(), verify_equivalence(&w, &f, 16, 1)?);

    let narrow = ExpansionSpec::new(3, 2, ExpansionMode::ExactBalanced)?.allowing_bottleneck();
    let capped = end_to_end(&expand_fc(&w, &narrow, 0)?);
    println!("bottleneck width 2: rank {}", threshold_rank(&singular_values(&capped)?, 1e-8)?);

    let k = ConvWeight::random_normal(4, 2, 3, 0.3, &mut rng);
    let chain = expand_conv(&k, &ExpansionSpec::new(3, 4, ExpansionMode::ExactBalanced)?, 0)?;
    let shapes: Vec<_> = chain.iter().map(|c| c.shape()).collect();
    let back = collapse_conv(&chain)?;
    let gap = back.entries().iter().zip(k.entries()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("conv chain {shapes:?}, collapse gap {gap:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("expand_layers example failed");
}
