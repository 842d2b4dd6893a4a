//! Number of knots against the tolerance.

use adaptive_pp::kernel::{KernelSpec, PointSet};
use adaptive_pp::lowrank::pivoted_ichol;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> adaptive_pp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(437);
    let coords = (0..437)
        .flat_map(|_| [300.0 * rng.random::<f64>(), 240.0 * rng.random::<f64>()])
        .collect();
    let pts = PointSet::new(2, coords)?;
    let k = KernelSpec::scaled_projected_se(1e-4, DMatrix::identity(2, 2), None)?;

    println!("tol_sq,m,kappa_S,terminated_by");
    for e in 1..=12 {
        let tol_sq = 10f64.powi(-e);
        let f = pivoted_ichol(&k, &pts, tol_sq.sqrt(), pts.len())?;
        println!("{tol_sq:e},{},{:e},{:?}", f.rank(), f.kappa_s(), f.terminated_by());
    }
    Ok(())
}
