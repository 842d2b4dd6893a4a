//! Command-line front end. Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
//!
//! Machine-readable results go to standard output or `--out`; a short human summary goes to
//! standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{self, BoundReport};
use crate::config::Config;
use crate::data::{load_csv, Dataset};
use crate::error::{Error, Result};
use crate::gp::{
    component_posterior_with, posterior_predict_with, sample_moments, simulate_pp,
    LowRankSystem, RegressionModel,
};
use crate::kernel::KernelSpec;
use crate::lowrank::{pivoted_ichol, LowRankFactor};
use crate::mcmc::{run_chain, GpPosterior, LogTarget, SamplerConfig};
use crate::report::{self, FactorReport, FitReport, SampleReport, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "adaptive-pp", version, about = "Adaptive Gaussian predictive process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Input {
    /// Data CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Knots selected by the pivoted incomplete Cholesky, as CSV.
    Knots(Input),
    /// Factorization summary as JSON.
    Factor {
        #[command(flatten)]
        input: Input,
        /// Also write the factor rows as CSV.
        #[arg(long)]
        rows: Option<PathBuf>,
    },
    /// Tail bound on the residual process, as JSON.
    Bound(BoundArgs),
    /// Low-rank marginal log likelihood at fixed parameters, as JSON.
    Fit(Input),
    /// Posterior predictions at new points, as CSV.
    Predict {
        #[command(flatten)]
        input: Input,
        /// Points to predict at (same coordinate and covariate columns as the data).
        #[arg(long)]
        at: PathBuf,
    },
    /// Random-walk Metropolis over kernel parameters and noise; chain as CSV.
    Sample {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the chain summary JSON here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Joint draws of the process and its predictive-process decomposition, as CSV.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        draws: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long, required_unless_present = "prob", conflicts_with = "prob")]
    eps: Option<f64>,
    /// Target probability; reports the smallest eps achieving it (finite set only).
    #[arg(long)]
    prob: Option<f64>,
    #[arg(long)]
    kappa: f64,
    #[arg(long = "set-size")]
    set_size: Option<f64>,
    /// Bound for the approximation with the diagonal correction.
    #[arg(long)]
    modified: bool,
    /// Continuum bound over [a, b]^p with Lipschitz constant c.
    #[arg(long, requires_all = ["p", "a", "b", "c"], conflicts_with_all = ["modified", "prob", "set_size"])]
    continuum: bool,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Knots(input) => knots(&input, stdout, stderr),
        Command::Factor { input, rows } => factor(&input, rows.as_deref(), stdout, stderr),
        Command::Bound(args) => bound(&args, stdout),
        Command::Fit(input) => fit(&input, stdout, stderr),
        Command::Predict { input, at } => predict(&input, &at, stdout, stderr),
        Command::Sample {
            input,
            seed,
            summary,
        } => sample(&input, seed, summary.as_deref(), stdout, stderr),
        Command::Simulate { input, seed, draws } => simulate(&input, seed, draws, stdout, stderr),
    }
}

fn load_config(input: &Input) -> Result<Config> {
    let mut cfg = match &input.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for pair in &input.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

/// Writes to `--out` when given, else to `stdout`.
fn emit(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(stdout),
    }
}

struct Loaded {
    cfg: Config,
    ds: Dataset,
    kernel: KernelSpec,
}

fn load(input: &Input, with_response: bool) -> Result<Loaded> {
    let cfg = load_config(input)?;
    let kc = cfg.kernel_config()?;
    let ds = load_csv(&input.data, &cfg.schema(with_response)?)?;
    let kernel = kc.build_for(&ds)?;
    Ok(Loaded { cfg, ds, kernel })
}

fn factorize(l: &Loaded) -> Result<LowRankFactor> {
    pivoted_ichol(
        &l.kernel,
        &l.ds.pts,
        l.cfg.kappa_tol_rel()?,
        l.cfg.m_max(l.ds.len())?,
    )
}

fn summarize_factor(f: &LowRankFactor, stderr: &mut dyn Write) -> Result<()> {
    writeln!(
        stderr,
        "N = {}, m = {}, kappa_S = {:.4e} (abs tol {:.4e}), {:?}",
        f.len(),
        f.rank(),
        f.kappa_s(),
        f.abs_tol(),
        f.terminated_by()
    )?;
    Ok(())
}

fn knots(input: &Input, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let l = load(input, false)?;
    let f = factorize(&l)?;
    emit(input.out.as_deref(), stdout, |w| report::write_knots_csv(&l.ds, &f, w))?;
    summarize_factor(&f, stderr)
}

fn factor(
    input: &Input,
    rows: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let l = load(input, false)?;
    let f = factorize(&l)?;
    let json = report::to_json(&FactorReport::new(&f))?;
    emit(input.out.as_deref(), stdout, |w| Ok(w.write_all(json.as_bytes())?))?;
    if let Some(p) = rows {
        let mut w = BufWriter::new(File::create(p)?);
        report::write_factor_rows_csv(&f, &mut w)?;
        w.flush()?;
    }
    summarize_factor(&f, stderr)
}

fn bound(a: &BoundArgs, stdout: &mut dyn Write) -> Result<()> {
    let rep = if a.continuum {
        let (p, lo, hi, c) = (a.p.unwrap(), a.a.unwrap(), a.b.unwrap(), a.c.unwrap());
        let eps = a.eps.ok_or_else(|| Error::usage("--continuum needs --eps"))?;
        BoundReport {
            schema_version: SCHEMA_VERSION,
            kind: "continuum".into(),
            eps,
            kappa: a.kappa,
            bound: bounds::continuum_tail(eps, a.kappa, p, lo, hi, c)?,
            raw_bound: bounds::continuum_tail_raw(eps, a.kappa, p, lo, hi, c)?,
            set_size: None,
            modified: None,
            target_prob: None,
        }
    } else {
        let n = a
            .set_size
            .ok_or_else(|| Error::usage("finite-set bound needs --set-size"))?;
        let (eps, target) = match (a.eps, a.prob) {
            (Some(e), _) => (e, None),
            (None, Some(p)) => (bounds::eps_for_confidence(p, a.kappa, n, a.modified)?, Some(p)),
            (None, None) => return Err(Error::usage("need --eps or --prob")),
        };
        let (bound, raw) = if eps == 0.0 {
            (0.0, 0.0)
        } else {
            (
                bounds::finite_set_tail(eps, a.kappa, n, a.modified)?,
                bounds::finite_set_tail_raw(eps, a.kappa, n, a.modified)?,
            )
        };
        BoundReport {
            schema_version: SCHEMA_VERSION,
            kind: "finite_set".into(),
            eps,
            kappa: a.kappa,
            bound,
            raw_bound: raw,
            set_size: Some(n),
            modified: Some(a.modified),
            target_prob: target,
        }
    };
    stdout.write_all(report::to_json(&rep)?.as_bytes())?;
    Ok(())
}

fn model_from(l: &Loaded, sigma2_default: Option<f64>) -> Result<RegressionModel> {
    let y = l.ds.response()?.to_vec();
    let sigma2 = match (l.cfg.f64("sigma2")?, sigma2_default) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(Error::usage("config needs 'sigma2'")),
    };
    let (mu, tau2) = match (l.cfg.f64("mu")?, l.cfg.f64("tau2")?) {
        (Some(m), Some(t)) => (m, t),
        (m, t) => {
            let (sm, st) = sample_moments(&y)?;
            (m.unwrap_or(sm), t.unwrap_or(st))
        }
    };
    RegressionModel::new(
        l.ds.pts.clone(),
        y,
        l.kernel.clone(),
        mu,
        tau2,
        sigma2,
        l.cfg.mode()?,
    )
}

fn fit(input: &Input, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let l = load(input, true)?;
    let model = model_from(&l, None)?;
    let f = factorize(&l)?;
    let sys = LowRankSystem::new(&model, &f)?;
    let rep = FitReport {
        schema_version: SCHEMA_VERSION,
        n: model.y.len(),
        loglik: sys.log_likelihood(),
        rank: f.rank(),
        kappa_s: f.kappa_s(),
        abs_tol: f.abs_tol(),
        terminated_by: f.terminated_by(),
        mode: model.mode,
        mu: model.mu,
        tau2: model.tau2,
        sigma2: model.sigma2,
    };
    let json = report::to_json(&rep)?;
    emit(input.out.as_deref(), stdout, |w| Ok(w.write_all(json.as_bytes())?))?;
    summarize_factor(&f, stderr)?;
    writeln!(stderr, "log likelihood {:.6}", rep.loglik)?;
    Ok(())
}

fn predict(input: &Input, at: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let l = load(input, true)?;
    let model = model_from(&l, None)?;
    let mut schema = l.cfg.schema(false)?;
    schema.coords = l.ds.coord_names.clone();
    let new = load_csv(at, &schema)?;
    let f = factorize(&l)?;
    let sys = LowRankSystem::new(&model, &f)?;
    let post = posterior_predict_with(&sys, &model, &f, &new.pts)?;
    let comps = match model.kernel {
        KernelSpec::VaryingCoefficientSum(_) => {
            Some(component_posterior_with(&sys, &model, &new.pts)?)
        }
        _ => None,
    };
    let ids: Vec<String> = (0..new.len()).map(|i| new.id(i)).collect();
    emit(input.out.as_deref(), stdout, |w| {
        report::write_predictions_csv(&ids, &post, comps.as_ref(), w)
    })?;
    summarize_factor(&f, stderr)?;
    writeln!(stderr, "predicted at {} points", new.len())?;
    Ok(())
}

fn sample(
    input: &Input,
    seed: Option<u64>,
    summary: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let l = load(input, true)?;
    let model = model_from(&l, Some(1.0))?;
    let n = model.y.len();
    let target = GpPosterior::new(model, l.cfg.kappa_tol_rel()?, l.cfg.m_max(n)?);
    let init = target.initial_params();
    let n_params = init.len();
    let n_sweeps = l
        .cfg
        .usize("sweeps")?
        .ok_or_else(|| Error::usage("config needs 'sweeps'"))?;
    let steps = match l.cfg.f64_list("steps")? {
        None => vec![0.1; n_params],
        Some(v) if v.len() == 1 => vec![v[0]; n_params],
        Some(v) => v,
    };
    let config = SamplerConfig {
        n_sweeps,
        burn_in: l.cfg.usize("burn_in")?.unwrap_or(n_sweeps / 5),
        thin: l.cfg.usize("thin")?.unwrap_or(1),
        step_sizes: steps,
        seed: seed.or(l.cfg.u64("seed")?).unwrap_or(0),
        kappa_tol_rel: target.kappa_tol_rel,
        m_max: target.m_max,
        adapt_steps: l.cfg.bool("adapt")?.unwrap_or(true),
        record_knots: false,
    };
    let chain = run_chain(&config, &target, &init)?;
    emit(input.out.as_deref(), stdout, |w| report::write_chain_csv(&chain, w))?;
    let s = chain.summary();
    if let Some(p) = summary {
        let json = report::to_json(&SampleReport {
            schema_version: SCHEMA_VERSION,
            summary: s.clone(),
        })?;
        std::fs::write(p, json)?;
    }
    writeln!(
        stderr,
        "{} sweeps, {} retained, acceptance {:.3}, m in [{}, {}]",
        chain.sweeps.len(),
        s.n_retained,
        s.acceptance_rate,
        s.rank_min,
        s.rank_max
    )?;
    for (j, name) in target.names().iter().enumerate() {
        writeln!(
            stderr,
            "  {name:>10}: median {:.4e}  95% [{:.4e}, {:.4e}]",
            s.medians[j], s.lower_95[j], s.upper_95[j]
        )?;
    }
    Ok(())
}

fn simulate(
    input: &Input,
    seed: Option<u64>,
    draws: Option<usize>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let l = load(input, false)?;
    let f = factorize(&l)?;
    let n_draws = draws.or(l.cfg.usize("draws")?).unwrap_or(1000);
    let seed = seed.or(l.cfg.u64("seed")?).unwrap_or(0);
    let d = simulate_pp(&l.kernel, &l.ds.pts, &f, n_draws, seed)?;
    emit(input.out.as_deref(), stdout, |w| report::write_draws_csv(&d, w))?;
    summarize_factor(&f, stderr)?;
    let max_abs = d.xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    writeln!(stderr, "{n_draws} draws, max |xi| = {max_abs:.4e}")?;
    Ok(())
}
