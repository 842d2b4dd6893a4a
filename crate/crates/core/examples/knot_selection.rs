//! Knots picked for the same point cloud under different covariance functions.
//!
//! `cargo run --example knot_selection [out_dir]` also writes one knots CSV per kernel.

use adaptive_pp::data::Dataset;
use adaptive_pp::kernel::{KernelSpec, PointSet};
use adaptive_pp::lowrank::pivoted_ichol;
use adaptive_pp::report::write_knots_csv;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> adaptive_pp::Result<()> {
    let out_dir = std::env::args().nth(1);
    let mut rng = ChaCha8Rng::seed_from_u64(437);
    let coords = (0..437)
        .flat_map(|_| [300.0 * rng.random::<f64>(), 240.0 * rng.random::<f64>()])
        .collect();
    let pts = PointSet::new(2, coords)?;

    let projections = [
        ("identity", DMatrix::identity(2, 2)),
        ("horizontal", DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])),
        ("vertical", DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])),
    ];
    println!("{:>8} {:>11} {:>5} {:>10}", "beta", "projection", "m", "kappa_S");
    for beta in [1e-3, 5e-4, 1e-4] {
        for (name, q) in &projections {
            let k = KernelSpec::scaled_projected_se(beta, q.clone(), None)?;
            let f = pivoted_ichol(&k, &pts, 0.01, pts.len())?;
            println!("{beta:>8.0e} {name:>11} {:>5} {:>10.3e}", f.rank(), f.kappa_s());
            if let Some(dir) = &out_dir {
                let path = format!("{dir}/knots_beta{beta:e}_{name}.csv");
                let file = std::fs::File::create(&path)?;
                write_knots_csv(&Dataset::new(pts.clone()), &f, file)?;
            }
        }
    }

    // a modulation x(t) that vanishes away from a valley pulls the knots into it
    let xs: Vec<f64> = (0..pts.len())
        .map(|i| {
            let c = pts.coords(i);
            let d = ((c[1] - 0.6 * c[0] - 30.0) / 1.36f64.sqrt()).abs();
            1.0 / (1.0 + ((d - 30.0) / 5.0).exp())
        })
        .collect();
    let modulated = pts.clone().with_covariates(1, xs.clone())?;
    let k = KernelSpec::scaled_projected_se(1e-3, DMatrix::identity(2, 2), Some(0))?;
    let f = pivoted_ichol(&k, &modulated, 0.01, pts.len())?;
    let inside = f.knots().iter().filter(|&&i| xs[i] >= 0.5).count();
    println!("\nwith x(t) concentrated on a valley: m = {}, {} knots in the valley", f.rank(), inside);
    Ok(())
}
