// Effective-rank velocity and the discrete recurrence on a smooth spectrum path.

use lowrank::spectral::{effective_rank, effective_rank_rate, effective_rank_recurrence, SingularTrajectory, SpectralSummary};
use lowrank::Result;

fn spectrum(t: f64) -> Vec<f64> {
    vec![2.0 + t, 1.0 + 0.5 * t * t, 0.5 * (-t).exp()]
}

fn rank_at(t: f64) -> Result<f64> {
    effective_rank(&SpectralSummary::from_values(spectrum(t))?)
}

pub fn run_example() -> Result<()> {
    let t = 0.3;
    let h = 1e-5;
    let s_dot: Vec<f64> = spectrum(t + h).iter().zip(spectrum(t - h)).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let rate = effective_rank_rate(&SingularTrajectory::new(spectrum(t), s_dot, None)?)?;
    let fd = (rank_at(t + h)? - rank_at(t - h)?) / (2.0 * h);
    println!("rate {rate:.8}  finite difference {fd:.8}");

    let dt = 0.01;
    for k in 2..6 {
        let at = |j: usize| spectrum(j as f64 * dt);
        let tr = SingularTrajectory::from_backward(&at(k), &at(k - 1), &at(k - 2))?;
        let e = effective_rank_recurrence(&tr, rank_at((k - 1) as f64 * dt)?, rank_at((k - 2) as f64 * dt)?)?;
        println!("step {k}: recurrence {e:.6}  direct {:.6}", rank_at(k as f64 * dt)?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("rank_dynamics example failed");
}
