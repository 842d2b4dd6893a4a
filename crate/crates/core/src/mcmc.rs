//! Random-walk Metropolis over covariance parameters and noise variance.
//!
//! Every proposal re-runs the pivoted factorization at the proposed parameters, so the
//! knots always match the current canonical metric. All parameters are positive and are
//! proposed on the log scale; the Jacobian `sum log theta` is added for parameters whose
//! prior is stated on the original scale.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{marginal_loglik, posterior_predict, RegressionModel};
use crate::kernel::{Hypers, PointSet};
use crate::lowrank::pivoted_ichol;

/// Acceptance rate targeted by burn-in step-size adaptation.
pub const TARGET_ACCEPTANCE: f64 = 0.25;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(2 phi(x))` for `x > 0`, `-inf` otherwise.
pub fn folded_normal_log_pdf(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        LN_2 - LN_SQRT_2PI - 0.5 * x * x
    } else {
        f64::NEG_INFINITY
    }
}

/// Folded standard normal on each kernel parameter, standard normal on `log sigma2`,
/// all independent.
pub fn log_prior(params: &Hypers, sigma2: f64) -> f64 {
    log_prior_values(&params.values, sigma2)
}

pub fn log_prior_values(kernel_params: &[f64], sigma2: f64) -> f64 {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let ls = sigma2.ln();
    let noise = -LN_SQRT_2PI - 0.5 * ls * ls;
    kernel_params
        .iter()
        .map(|&x| folded_normal_log_pdf(x))
        .sum::<f64>()
        + noise
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Proposal sd per parameter on the log scale.
    pub step_sizes: Vec<f64>,
    pub seed: u64,
    pub kappa_tol_rel: f64,
    pub m_max: usize,
    /// Robbins-Monro scaling of all steps toward [`TARGET_ACCEPTANCE`], burn-in only.
    pub adapt_steps: bool,
    /// Keep the knot set of every sweep in the chain.
    pub record_knots: bool,
}

impl SamplerConfig {
    pub fn validate(&self, n_params: usize) -> Result<()> {
        if self.burn_in >= self.n_sweeps {
            return Err(Error::usage(format!(
                "burn_in ({}) must be smaller than the number of sweeps ({})",
                self.burn_in, self.n_sweeps
            )));
        }
        if self.thin == 0 {
            return Err(Error::usage("thin must be at least 1"));
        }
        if self.step_sizes.len() != n_params {
            return Err(Error::usage(format!(
                "{} step sizes for {n_params} parameters",
                self.step_sizes.len()
            )));
        }
        if self.step_sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::usage("step sizes must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Result of evaluating the (unnormalized) log posterior at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_post: f64,
    pub log_lik: f64,
    /// Number of knots used; 0 when not applicable.
    pub rank: usize,
    pub knots: Option<Vec<usize>>,
}

impl Evaluation {
    pub fn rejected() -> Self {
        Evaluation {
            log_post: f64::NEG_INFINITY,
            log_lik: f64::NEG_INFINITY,
            rank: 0,
            knots: None,
        }
    }
}

/// A density over positive parameter vectors.
pub trait LogTarget {
    fn names(&self) -> Vec<String>;
    /// `true` where the log-scale Jacobian applies (prior stated on the original scale).
    fn jacobian_mask(&self) -> Vec<bool>;
    fn evaluate(&self, params: &[f64]) -> Evaluation;
}

/// Posterior of the kernel parameters and `sigma2` of a regression model, with `mu`, `tau2`,
/// the data and the kernel family taken from `template`. Parameter order is the kernel's
/// [`crate::kernel::KernelSpec::hypers`] followed by `sigma2`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub template: RegressionModel,
    pub kappa_tol_rel: f64,
    pub m_max: usize,
    pub record_knots: bool,
}

impl GpPosterior {
    pub fn new(template: RegressionModel, kappa_tol_rel: f64, m_max: usize) -> Self {
        GpPosterior {
            template,
            kappa_tol_rel,
            m_max,
            record_knots: false,
        }
    }

    /// Current template values as a parameter vector.
    pub fn initial_params(&self) -> Vec<f64> {
        let mut v = self.template.kernel.hypers().values;
        v.push(self.template.sigma2);
        v
    }

    /// Model at the given parameter vector.
    pub fn model_at(&self, params: &[f64]) -> Result<RegressionModel> {
        let k = self.template.kernel.hypers().len();
        if params.len() != k + 1 {
            return Err(Error::usage(format!(
                "expected {} parameters, got {}",
                k + 1,
                params.len()
            )));
        }
        let mut model = self.template.clone();
        model.kernel = self.template.kernel.with_hypers(&params[..k])?;
        model.sigma2 = params[k];
        Ok(model)
    }

    /// Log posterior and the rank of the freshly adapted factor.
    pub fn log_posterior(&self, params: &[f64]) -> Result<Evaluation> {
        let k = self.template.kernel.hypers().len();
        let prior = log_prior_values(&params[..k.min(params.len())], *params.last().unwrap_or(&0.0));
        if prior == f64::NEG_INFINITY {
            return Ok(Evaluation::rejected());
        }
        let model = self.model_at(params)?;
        let factor = pivoted_ichol(&model.kernel, &model.pts, self.kappa_tol_rel, self.m_max)?;
        let log_lik = marginal_loglik(&model, &factor)?;
        Ok(Evaluation {
            log_post: log_lik + prior,
            log_lik,
            rank: factor.rank(),
            knots: self.record_knots.then(|| factor.knots().to_vec()),
        })
    }
}

impl LogTarget for GpPosterior {
    fn names(&self) -> Vec<String> {
        let mut n = self.template.kernel.hypers().names;
        n.push("sigma2".to_string());
        n
    }

    fn jacobian_mask(&self) -> Vec<bool> {
        // the noise prior is already a density on log sigma2
        let mut m = vec![true; self.template.kernel.hypers().len()];
        m.push(false);
        m
    }

    fn evaluate(&self, params: &[f64]) -> Evaluation {
        match self.log_posterior(params) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("log posterior failed at {params:?}: {e}; treating as rejection");
                Evaluation::rejected()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub params: Vec<f64>,
    pub eval: Evaluation,
}

impl ChainState {
    pub fn new<T: LogTarget + ?Sized>(target: &T, params: Vec<f64>) -> Self {
        let eval = target.evaluate(&params);
        ChainState { params, eval }
    }
}

/// Everything needed to re-check one Metropolis decision by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub proposal: ChainState,
    pub log_ratio: f64,
    pub uniform: f64,
    pub accepted: bool,
}

fn log_jacobian(params: &[f64], mask: &[bool]) -> f64 {
    params
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| p.ln())
        .sum()
}

/// One joint random-walk Metropolis update on the log scale.
pub fn rwm_step<T: LogTarget + ?Sized, R: Rng + ?Sized>(
    state: &ChainState,
    steps: &[f64],
    mask: &[bool],
    rng: &mut R,
    target: &T,
) -> (ChainState, StepRecord) {
    let params: Vec<f64> = state
        .params
        .iter()
        .zip(steps)
        .map(|(&p, &s)| {
            let z: f64 = StandardNormal.sample(rng);
            if s == 0.0 {
                p
            } else {
                (p.ln() + s * z).exp()
            }
        })
        .collect();
    let uniform: f64 = rng.random();
    let eval = target.evaluate(&params);
    let proposal = ChainState { params, eval };

    let log_ratio = if proposal.eval.log_post == f64::NEG_INFINITY || proposal.eval.log_post.is_nan()
    {
        f64::NEG_INFINITY
    } else {
        (proposal.eval.log_post + log_jacobian(&proposal.params, mask))
            - (state.eval.log_post + log_jacobian(&state.params, mask))
    };
    let accepted = log_ratio >= 0.0 || uniform.ln() < log_ratio;
    let next = if accepted {
        proposal.clone()
    } else {
        state.clone()
    };
    (
        next,
        StepRecord {
            proposal,
            log_ratio,
            uniform,
            accepted,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub sweep: usize,
    pub params: Vec<f64>,
    pub log_lik: f64,
    pub log_post: f64,
    pub rank: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub names: Vec<String>,
    pub n_retained: usize,
    /// Over post burn-in sweeps.
    pub acceptance_rate: f64,
    pub medians: Vec<f64>,
    pub lower_95: Vec<f64>,
    pub upper_95: Vec<f64>,
    pub rank_min: usize,
    pub rank_max: usize,
    pub final_step_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub names: Vec<String>,
    pub sweeps: Vec<Sweep>,
    /// Knot sets per sweep when requested.
    pub knots: Option<Vec<Vec<usize>>>,
    pub burn_in: usize,
    pub thin: usize,
    pub step_scale: f64,
}

impl Chain {
    /// Indices of retained sweeps: `burn_in, burn_in + thin, ..`.
    pub fn retained(&self) -> impl Iterator<Item = &Sweep> + '_ {
        self.sweeps.iter().skip(self.burn_in).step_by(self.thin)
    }

    pub fn acceptance_rate(&self) -> f64 {
        let post: Vec<&Sweep> = self.sweeps.iter().skip(self.burn_in).collect();
        if post.is_empty() {
            return 0.0;
        }
        post.iter().filter(|s| s.accepted).count() as f64 / post.len() as f64
    }

    pub fn summary(&self) -> ChainSummary {
        let retained: Vec<&Sweep> = self.retained().collect();
        let n_params = self.names.len();
        let mut medians = Vec::with_capacity(n_params);
        let mut lower = Vec::with_capacity(n_params);
        let mut upper = Vec::with_capacity(n_params);
        for j in 0..n_params {
            let mut v: Vec<f64> = retained.iter().map(|s| s.params[j]).collect();
            v.sort_by(f64::total_cmp);
            medians.push(quantile_sorted(&v, 0.5));
            lower.push(quantile_sorted(&v, 0.025));
            upper.push(quantile_sorted(&v, 0.975));
        }
        ChainSummary {
            names: self.names.clone(),
            n_retained: retained.len(),
            acceptance_rate: self.acceptance_rate(),
            medians,
            lower_95: lower,
            upper_95: upper,
            rank_min: self.sweeps.iter().map(|s| s.rank).min().unwrap_or(0),
            rank_max: self.sweeps.iter().map(|s| s.rank).max().unwrap_or(0),
            final_step_scale: self.step_scale,
        }
    }
}

/// Linear-interpolation quantile of sorted data; NaN when empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Runs a chain from `init`. Reproducible for a fixed seed.
pub fn run_chain<T: LogTarget + ?Sized>(
    config: &SamplerConfig,
    target: &T,
    init: &[f64],
) -> Result<Chain> {
    let names = target.names();
    config.validate(names.len())?;
    if init.len() != names.len() || init.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::usage(format!(
            "initial values must be {} positive numbers",
            names.len()
        )));
    }
    let mask = target.jacobian_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = ChainState::new(target, init.to_vec());
    if state.eval.log_post == f64::NEG_INFINITY {
        return Err(Error::usage(
            "log posterior is -inf at the initial values",
        ));
    }
    let mut log_scale = 0.0f64;
    let mut steps = config.step_sizes.clone();
    let mut sweeps = Vec::with_capacity(config.n_sweeps);
    let mut knots = config.record_knots.then(Vec::new);

    for i in 0..config.n_sweeps {
        let scale = log_scale.exp();
        for (s, base) in steps.iter_mut().zip(&config.step_sizes) {
            *s = base * scale;
        }
        let (next, record) = rwm_step(&state, &steps, &mask, &mut rng, target);
        state = next;
        if config.adapt_steps && i < config.burn_in {
            let gain = ((i + 1) as f64).powf(-0.6);
            let a = if record.accepted { 1.0 } else { 0.0 };
            log_scale += gain * (a - TARGET_ACCEPTANCE);
        }
        if let Some(k) = knots.as_mut() {
            k.push(state.eval.knots.clone().unwrap_or_default());
        }
        sweeps.push(Sweep {
            sweep: i,
            params: state.params.clone(),
            log_lik: state.eval.log_lik,
            log_post: state.eval.log_post,
            rank: state.eval.rank,
            accepted: record.accepted,
        });
        if (i + 1) % 500 == 0 {
            log::info!(
                "sweep {}: log_post {:.3}, m {}, step scale {:.3}",
                i + 1,
                state.eval.log_post,
                state.eval.rank,
                log_scale.exp()
            );
        }
    }
    Ok(Chain {
        names,
        sweeps,
        knots,
        burn_in: config.burn_in,
        thin: config.thin,
        step_scale: log_scale.exp(),
    })
}

/// Pointwise posterior summaries of `mu + tau w(t)` over the retained sweeps of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBand {
    /// Median over retained sweeps of the conditional posterior mean.
    pub median: Vec<f64>,
    /// 2.5% and 97.5% quantiles of draws from the conditional posteriors.
    pub lower_95: Vec<f64>,
    pub upper_95: Vec<f64>,
}

pub fn predictive_band(
    target: &GpPosterior,
    chain: &Chain,
    new_pts: &PointSet,
    seed: u64,
) -> Result<PredictiveBand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = new_pts.len();
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); t];
    let mut draws: Vec<Vec<f64>> = vec![Vec::new(); t];
    for sweep in chain.retained() {
        let model = target.model_at(&sweep.params)?;
        let factor = pivoted_ichol(&model.kernel, &model.pts, target.kappa_tol_rel, target.m_max)?;
        let post = posterior_predict(&model, &factor, new_pts)?;
        for i in 0..t {
            means[i].push(post.mean[i]);
            let sd = post.var[i].sqrt();
            let draw = if sd > 0.0 {
                Normal::new(post.mean[i], sd)
                    .map_err(|e| Error::NumericalBreakdown(e.to_string()))?
                    .sample(&mut rng)
            } else {
                post.mean[i]
            };
            draws[i].push(draw);
        }
    }
    let mut band = PredictiveBand {
        median: Vec::with_capacity(t),
        lower_95: Vec::with_capacity(t),
        upper_95: Vec::with_capacity(t),
    };
    for i in 0..t {
        means[i].sort_by(f64::total_cmp);
        draws[i].sort_by(f64::total_cmp);
        band.median.push(quantile_sorted(&means[i], 0.5));
        band.lower_95.push(quantile_sorted(&draws[i], 0.025));
        band.upper_95.push(quantile_sorted(&draws[i], 0.975));
    }
    Ok(band)
}

/// Standard normal log density, exposed for tests and diagnostics.
pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - 0.5 * x * x
}
