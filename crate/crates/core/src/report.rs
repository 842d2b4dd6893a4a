//! Machine-readable outputs shared by the CLI and library callers.
//!
//! JSON documents carry a `schema_version`; CSV files have a header row and write floats in
//! their shortest round-trip form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{ApproxMode, ComponentPosterior, PpDraws, Posterior};
use crate::lowrank::{LowRankFactor, Termination};
use crate::mcmc::{Chain, ChainSummary};

pub const SCHEMA_VERSION: u32 = 1;

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub schema_version: u32,
    pub rank: usize,
    /// Full pivot order; the first `rank` entries are the knots.
    pub pivot: Vec<usize>,
    pub abs_tol: f64,
    #[serde(rename = "kappa_S")]
    pub kappa_s: f64,
    pub terminated_by: Termination,
}

impl FactorReport {
    pub fn new(factor: &LowRankFactor) -> Self {
        FactorReport {
            schema_version: SCHEMA_VERSION,
            rank: factor.rank(),
            pivot: factor.pivot().to_vec(),
            abs_tol: factor.abs_tol(),
            kappa_s: factor.kappa_s(),
            terminated_by: factor.terminated_by(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub n: usize,
    pub loglik: f64,
    pub rank: usize,
    #[serde(rename = "kappa_S")]
    pub kappa_s: f64,
    pub abs_tol: f64,
    pub terminated_by: Termination,
    pub mode: ApproxMode,
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub summary: ChainSummary,
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// One row per knot: `selection_order, original_index, <coords>, residual_sd_before_selection`.
/// `selection_order` and `original_index` count from 0.
pub fn write_knots_csv<W: Write>(ds: &Dataset, factor: &LowRankFactor, writer: W) -> Result<()> {
    if factor.len() != ds.len() {
        return Err(Error::usage("factor and dataset sizes differ"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["selection_order".to_string(), "original_index".to_string()];
    header.extend(ds.coord_names.iter().cloned());
    header.push("residual_sd_before_selection".into());
    w.write_record(&header)?;
    for (k, (&i, sd)) in factor.knots().iter().zip(factor.pivot_sds()).enumerate() {
        let mut rec = vec![k.to_string(), i.to_string()];
        rec.extend(ds.pts.coords(i).iter().copied().map(fmt));
        rec.push(fmt(sd));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The `m x N` factor with columns in original point order: `row, s0, .., s<N-1>`.
pub fn write_factor_rows_csv<W: Write>(factor: &LowRankFactor, writer: W) -> Result<()> {
    let n = factor.len();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["row".to_string()];
    header.extend((0..n).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    let inv = factor.inverse_pivot();
    for k in 0..factor.rank() {
        let row = factor.row(k);
        let mut rec = vec![k.to_string()];
        rec.extend(inv.iter().map(|&slot| fmt(row[slot])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `id, mean, sd`, then `omega<j>_mean, omega<j>_sd, omega<j>_effect` per component.
pub fn write_predictions_csv<W: Write>(
    ids: &[String],
    post: &Posterior,
    components: Option<&ComponentPosterior>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "mean".into(), "sd".into()];
    if let Some(c) = components {
        for j in 0..c.components.len() {
            header.push(format!("omega{j}_mean"));
            header.push(format!("omega{j}_sd"));
            header.push(format!("omega{j}_effect"));
        }
    }
    w.write_record(&header)?;
    let sd = post.sd();
    let comp_sd: Vec<Vec<f64>> = components
        .map(|c| c.components.iter().map(Posterior::sd).collect())
        .unwrap_or_default();
    for (t, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone(), fmt(post.mean[t]), fmt(sd[t])];
        if let Some(c) = components {
            for (j, comp) in c.components.iter().enumerate() {
                rec.push(fmt(comp.mean[t]));
                rec.push(fmt(comp_sd[j][t]));
                rec.push(fmt(c.effect_sizes[j][t]));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `sweep, <params>, loglik, m, accepted`, one row per sweep including burn-in.
pub fn write_chain_csv<W: Write>(chain: &Chain, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sweep".to_string()];
    header.extend(chain.names.iter().cloned());
    header.extend(["loglik".to_string(), "m".into(), "accepted".into()]);
    w.write_record(&header)?;
    for s in &chain.sweeps {
        let mut rec = vec![s.sweep.to_string()];
        rec.extend(s.params.iter().copied().map(fmt));
        rec.push(fmt(s.log_lik));
        rec.push(s.rank.to_string());
        rec.push(u8::from(s.accepted).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `draw, index, omega, nu, xi, xi_tilde`.
pub fn write_draws_csv<W: Write>(draws: &PpDraws, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["draw", "index", "omega", "nu", "xi", "xi_tilde"])?;
    for d in 0..draws.omega.nrows() {
        for i in 0..draws.omega.ncols() {
            w.write_record([
                d.to_string(),
                i.to_string(),
                fmt(draws.omega[(d, i)]),
                fmt(draws.nu[(d, i)]),
                fmt(draws.xi[(d, i)]),
                fmt(draws.xi_tilde[(d, i)]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
