// Gram matrices of random features and a clustered ordering of their samples.

use lowrank::gram::{build_gram, gram_effective_rank, hierarchical_order, GramKind};
use lowrank::rng::rng_from_seed;
use lowrank::{DenseMatrix, Result};

pub fn run_example() -> Result<()> {
    let mut rng = rng_from_seed(3);
    // two groups of samples around two directions
    let centers = DenseMatrix::random_normal(6, 2, 1.0, &mut rng);
    let noise = DenseMatrix::random_normal(6, 8, 0.05, &mut rng);
    let features = DenseMatrix::from_fn(6, 8, |r, c| centers[(r, (c * 5) % 2)] + noise[(r, c)]);

    for kind in [GramKind::Cosine, GramKind::Linear, GramKind::Correlation] {
        let g = build_gram(&features, kind)?;
        println!("{kind:>11}: effective rank {:.4}", gram_effective_rank(&g)?);
    }
    let order = hierarchical_order(&build_gram(&features, GramKind::Cosine)?);
    println!("clustered order {order:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("gram_kernels example failed");
}
