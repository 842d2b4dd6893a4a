//! Nonparametric regression with irrelevant covariates.
//!
//! `cargo run --release --example toy_regression [n] [sweeps]`

use adaptive_pp::data::{gen_toy, toy_signal};
use adaptive_pp::gp::{ApproxMode, RegressionModel};
use adaptive_pp::kernel::{KernelSpec, PointSet};
use adaptive_pp::mcmc::{predictive_band, run_chain, GpPosterior, SamplerConfig};

fn main() -> adaptive_pp::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let n = args.next().unwrap_or(1000);
    let sweeps = args.next().unwrap_or(3000);
    let p = 10;

    let ds = gen_toy(n, p, 2024)?;
    let mut rates = vec![0.1, 0.1];
    rates.extend(vec![0.004; p - 2]);
    let model = RegressionModel::with_sample_moments(
        ds.pts.clone(),
        ds.y.clone().unwrap(),
        KernelSpec::ard_se(rates)?,
        (-3.5f64).exp(),
        ApproxMode::Dtc,
    )?;
    let target = GpPosterior::new(model, 0.01, n);
    let init = target.initial_params();
    let config = SamplerConfig {
        n_sweeps: sweeps,
        burn_in: sweeps / 4,
        thin: 1,
        step_sizes: vec![0.1; init.len()],
        seed: 5,
        kappa_tol_rel: 0.01,
        m_max: n,
        adapt_steps: true,
        record_knots: false,
    };
    let chain = run_chain(&config, &target, &init)?;
    let s = chain.summary();
    println!("acceptance {:.2}, m in [{}, {}]", s.acceptance_rate, s.rank_min, s.rank_max);
    for (j, name) in s.names.iter().enumerate() {
        println!("{name:>8}: {:.4} [{:.4}, {:.4}]", s.medians[j], s.lower_95[j], s.upper_95[j]);
    }

    let mut thinned = chain.clone();
    thinned.thin = (sweeps / 100).max(1);
    let grid: Vec<f64> = (0..=20)
        .flat_map(|i| {
            let mut x = vec![0.0; p];
            x[0] = i as f64 / 20.0;
            x
        })
        .collect();
    let band = predictive_band(&target, &thinned, &PointSet::new(p, grid)?, 1)?;
    println!("\nx1,truth,median,lower,upper");
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        println!(
            "{x},{:.3},{:.3},{:.3},{:.3}",
            toy_signal(x),
            band.median[i],
            band.lower_95[i],
            band.upper_95[i]
        );
    }
    Ok(())
}
