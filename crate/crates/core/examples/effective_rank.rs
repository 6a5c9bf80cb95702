// Rank measures of a few hand-built matrices.

use lowrank::spectral::{effective_rank, rank_measures, singular_values};
use lowrank::{DenseMatrix, Result};

pub fn run_example() -> Result<()> {
    let n = 8;
    let identity = DenseMatrix::identity(n);
    let rank_one = DenseMatrix::from_fn(n, n, |r, c| (r + 1) as f64 * (c + 1) as f64);
    let decaying = DenseMatrix::from_diag(n, n, &(0..n).map(|i| 0.5f64.powi(i as i32)).collect::<Vec<_>>());

    for (name, m) in [("identity", &identity), ("rank one", &rank_one), ("decaying", &decaying)] {
        let r = rank_measures(m, 0.01)?;
        println!(
            "{name:>9}: effective {:.4}  threshold {}  stable {:.3}  nuclear {:.3}",
            r.effective_rank, r.threshold_rank, r.stable_rank, r.nuclear_norm
        );
    }
    let e = effective_rank(&singular_values(&identity)?)?;
    assert!((e - (n as f64).ln()).abs() < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("effective_rank example failed");
}
