// Limiting singular-value law of Gaussian products and its effective rank.

use lowrank::rmt::{sigma_max, ProductDensity};
use lowrank::Result;

pub fn run_example() -> Result<()> {
    let mut previous = f64::INFINITY;
    for depth in 1..=6 {
        let pd = ProductDensity::new(depth, 4001)?;
        let rank = pd.differential_effective_rank()?;
        println!(
            "L={depth}: rank {rank:+.5}  mass {:.8}  mean sigma {:.5}  sigma_max {:.5}",
            pd.density_normalization()?,
            pd.mean_singular_value()?,
            sigma_max(depth)
        );
        assert!(rank < previous);
        previous = rank;
    }
    let (s, p) = ProductDensity::with_depth(1)?.sv_parametric(0.7)?;
    println!("quarter circle at sigma {s:.4}: {p:.6} vs {:.6}", (4.0 - s * s).sqrt() / std::f64::consts::PI);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("product_density example failed");
}
