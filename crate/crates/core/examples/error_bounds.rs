//! Tail bounds on the residual process of a fitted factor.

use adaptive_pp::bounds::{continuum_tail, eps_for_confidence, finite_set_tail};
use adaptive_pp::data::gen_toy;
use adaptive_pp::kernel::KernelSpec;
use adaptive_pp::lowrank::pivoted_ichol;

fn main() -> adaptive_pp::Result<()> {
    let ds = gen_toy(1000, 2, 1)?;
    let k = KernelSpec::ard_se(vec![3.0, 3.0])?;
    let n = ds.len() as f64;

    for tol in [0.1, 0.01, 0.001] {
        let f = pivoted_ichol(&k, &ds.pts, tol, ds.len())?;
        let kappa = f.kappa_s();
        println!("tol {tol}: m = {}, kappa_S = {kappa:.3e}", f.rank());
        for p in [0.1, 0.01] {
            println!(
                "  P(max |xi| > eps) <= {p}: eps = {:.3e}, with diagonal correction {:.3e}",
                eps_for_confidence(p, kappa, n, false)?,
                eps_for_confidence(p, kappa, n, true)?
            );
        }
        let eps = 10.0 * kappa;
        println!("  bound at eps = 10 kappa_S: {:.3e}", finite_set_tail(eps, kappa, n, false)?);
    }

    // the squared-exponential kernel with rates b has Var{w(s) - w(t)} <= 2 b^2 |s - t|^2
    let c = 2.0f64.sqrt() * 3.0;
    for kappa in [1e-3, 1e-4, 1e-5] {
        println!(
            "continuum on [0, 1]^2, kappa = {kappa:e}: P(sup |xi| > 0.5) <= {:.3e}",
            continuum_tail(0.5, kappa, 2, 0.0, 1.0, c)?
        );
    }
    Ok(())
}
