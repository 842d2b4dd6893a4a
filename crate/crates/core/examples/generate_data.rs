//! Writes the synthetic datasets and configuration files used in the README walkthrough.
//!
//! `cargo run --example generate_data -- <dir>`

use adaptive_pp::data::{gen_spatial, gen_toy, save_csv, SpatialSpec};

fn main() -> adaptive_pp::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    std::fs::create_dir_all(&dir)?;

    save_csv(&gen_toy(500, 10, 2024)?, format!("{dir}/toy.csv"))?;
    let grid = (0..=50)
        .map(|i| format!("g{i},{}{}\n", i as f64 / 50.0, ",0".repeat(9)))
        .collect::<String>();
    let header = (1..=10).map(|k| format!(",x{k}")).collect::<String>();
    std::fs::write(format!("{dir}/grid.csv"), format!("id{header}\n{grid}"))?;

    let spatial = gen_spatial(800, 66, &SpatialSpec::default())?;
    let rows: Vec<usize> = (0..800).collect();
    save_csv(&spatial.dataset.select(&rows[..600]), format!("{dir}/spatial_train.csv"))?;
    save_csv(&spatial.dataset.select(&rows[600..]), format!("{dir}/spatial_test.csv"))?;

    std::fs::write(
        format!("{dir}/toy.cfg"),
        "\
# ARD squared-exponential kernel, one rate per coordinate
kernel = ard_se
beta = 0.1, 0.1, 0.004, 0.004, 0.004, 0.004, 0.004, 0.004, 0.004, 0.004
sigma2 = 0.03
tol_sq = 1e-4
mode = dtc
sweeps = 2000
burn_in = 500
thin = 1
steps = 0.1
adapt = true
seed = 5
draws = 200
",
    )?;
    std::fs::write(
        format!("{dir}/spatial.cfg"),
        "\
kernel = varying_coefficient
covariates = z1, z2
tau = 0.5, 0.5, 0.5
beta = 0.3, 0.3, 0.3
sigma2 = 0.01
mu = 0
tau2 = 1
tol_sq = 1e-4
sweeps = 1500
burn_in = 500
steps = 0.05
seed = 6
",
    )?;
    println!("wrote toy.csv, grid.csv, spatial_train.csv, spatial_test.csv, toy.cfg, spatial.cfg to {dir}");
    Ok(())
}
