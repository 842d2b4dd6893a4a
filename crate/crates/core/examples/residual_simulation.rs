//! Monte Carlo check of the finite-set bound on simulated residual processes.

use adaptive_pp::bounds::finite_set_tail;
use adaptive_pp::gp::simulate_pp;
use adaptive_pp::kernel::{KernelSpec, PointSet};
use adaptive_pp::lowrank::pivoted_ichol;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exceedance(draws: &DMatrix<f64>, eps: f64) -> f64 {
    let hits = draws
        .row_iter()
        .filter(|r| r.iter().any(|v| v.abs() > eps))
        .count();
    hits as f64 / draws.nrows() as f64
}

fn main() -> adaptive_pp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let pts = PointSet::new(2, (0..60).map(|_| rng.random::<f64>()).collect())?;
    let k = KernelSpec::ard_se(vec![2.0, 2.0])?;
    let f = pivoted_ichol(&k, &pts, 0.1, pts.len())?;
    let kappa = f.kappa_s();
    let sim = simulate_pp(&k, &pts, &f, 10_000, 1)?;
    println!("N = 30, m = {}, kappa_S = {kappa:.4}", f.rank());
    println!("eps/kappa,empirical,bound,empirical_modified,bound_modified");
    for g in [1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0] {
        let eps = g * kappa;
        println!(
            "{g},{},{:.4},{},{:.4}",
            exceedance(&sim.xi, eps),
            finite_set_tail(eps, kappa, 30.0, false)?,
            exceedance(&sim.xi_tilde, eps),
            finite_set_tail(eps, kappa, 30.0, true)?
        );
    }
    Ok(())
}
