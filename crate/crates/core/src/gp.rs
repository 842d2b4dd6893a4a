//! Gaussian process regression under the predictive process approximation.
//!
//! The model is `y_i = mu + tau w(s_i) + tau e_i` with `e_i ~ N(0, sigma2)`. The prior
//! covariance of `W = (w(s_1), .., w(s_N))` is replaced by `R'R` (DTC) or by
//! `R'R + diag(residual variances)` (Modified), where `R` is the `m x N` factor returned by
//! [`crate::lowrank::pivoted_ichol`]. Every quantity is computed in `O(N m^2)` time and
//! `O(N m)` memory through the `m x m` core matrix `A = I + R D^{-1} R'`, where `D` is the
//! diagonal part (noise plus residual variances).
//!
//! Points at which joint (rather than marginal) posterior summaries are wanted must be part
//! of the candidate set `S` used to build the factor. Predictions at other points are
//! marginal, and under the Modified approximation their diagonal correction is treated as
//! independent of the training data.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, PointSet};
use crate::lowrank::LowRankFactor;

/// Posterior variances above `-VAR_NEG_TOL` are clamped to zero.
pub const VAR_NEG_TOL: f64 = 1e-10;

/// Standard-deviation floor used when forming effect sizes.
pub const EFFECT_SD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMode {
    /// Prior covariance `R'R`.
    #[default]
    Dtc,
    /// `R'R` plus the residual variances on the diagonal.
    Modified,
}

#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub y: Vec<f64>,
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: f64,
    pub kernel: KernelSpec,
    pub pts: PointSet,
    pub mode: ApproxMode,
}

impl RegressionModel {
    pub fn new(
        pts: PointSet,
        y: Vec<f64>,
        kernel: KernelSpec,
        mu: f64,
        tau2: f64,
        sigma2: f64,
        mode: ApproxMode,
    ) -> Result<Self> {
        let model = RegressionModel {
            y,
            mu,
            tau2,
            sigma2,
            kernel,
            pts,
            mode,
        };
        model.validate()?;
        Ok(model)
    }

    /// `mu` and `tau2` fixed at the sample mean and variance (`n - 1` denominator) of `y`.
    pub fn with_sample_moments(
        pts: PointSet,
        y: Vec<f64>,
        kernel: KernelSpec,
        sigma2: f64,
        mode: ApproxMode,
    ) -> Result<Self> {
        let (mu, tau2) = sample_moments(&y)?;
        RegressionModel::new(pts, y, kernel, mu, tau2, sigma2, mode)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.pts.len() {
            return Err(Error::usage(format!(
                "{} responses for {} points",
                self.y.len(),
                self.pts.len()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) || !self.mu.is_finite() {
            return Err(Error::usage("responses and mean must be finite"));
        }
        if !(self.tau2.is_finite() && self.tau2 > 0.0) {
            return Err(Error::usage(format!("tau2 must be positive, got {}", self.tau2)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::usage(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        self.kernel.check_points(&self.pts)
    }
}

/// Sample mean and variance (`n - 1` denominator).
pub fn sample_moments(y: &[f64]) -> Result<(f64, f64)> {
    if y.len() < 2 {
        return Err(Error::usage("need at least two responses to estimate moments"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::usage("responses have zero variance"));
    }
    Ok((mean, var))
}

/// Pointwise posterior summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Posterior {
    pub fn sd(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }

    /// `mean / sd`, with the sd floored at [`EFFECT_SD_FLOOR`].
    pub fn effect_sizes(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| m / v.sqrt().max(EFFECT_SD_FLOOR))
            .collect()
    }
}

/// Posterior of each varying coefficient `w_j(t)` and of `w(t) = sum_j x_j(t) w_j(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPosterior {
    pub components: Vec<Posterior>,
    pub effect_sizes: Vec<Vec<f64>>,
    /// Posterior of `w(t)` using the same exact cross-covariances.
    pub total: Posterior,
}

fn clamp_var(v: f64) -> Result<f64> {
    if v < -VAR_NEG_TOL {
        return Err(Error::NumericalBreakdown(format!(
            "negative posterior variance {v:e}"
        )));
    }
    Ok(v.max(0.0))
}

/// Exact cross-covariances against the approximated training prior do not form a PSD joint
/// covariance, so component variances may dip below zero by about the residual variance scale.
fn clamp_component_var(v: f64, negatives: &mut usize) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NumericalBreakdown(format!(
            "non-finite component posterior variance {v}"
        )));
    }
    if v < -VAR_NEG_TOL {
        *negatives += 1;
    }
    Ok(v.max(0.0))
}

/// Precomputed low-rank system for one (model, factor) pair. All `N`-vectors are stored in
/// pivoted order.
#[derive(Debug, Clone)]
pub struct LowRankSystem {
    n: usize,
    rank: usize,
    pivot: Vec<usize>,
    /// `m x N`
    r: DMatrix<f64>,
    /// Noise plus (Modified) residual variances.
    diag: DVector<f64>,
    resid: DVector<f64>,
    /// Cholesky factor of `A = I + R D^{-1} R'`.
    core: Cholesky<f64, Dyn>,
    /// `A^{-1} R D^{-1} (y - mu)`.
    b: DVector<f64>,
    log_det: f64,
    quad: f64,
    mu: f64,
    tau2: f64,
    mode: ApproxMode,
}

impl LowRankSystem {
    pub fn new(model: &RegressionModel, factor: &LowRankFactor) -> Result<Self> {
        model.validate()?;
        let n = model.y.len();
        if factor.len() != n {
            return Err(Error::usage(format!(
                "factor covers {} points, model has {n}",
                factor.len()
            )));
        }
        let m = factor.rank();
        let pivot = factor.pivot().to_vec();
        let r = factor.rows_matrix();
        let diag = DVector::from_fn(n, |slot, _| {
            model.sigma2
                + match model.mode {
                    ApproxMode::Dtc => 0.0,
                    ApproxMode::Modified => factor.resid_diag()[slot],
                }
        });
        let resid = DVector::from_fn(n, |slot, _| model.y[pivot[slot]] - model.mu);

        // B = R D^{-1/2}; A = I + B B'
        let mut scaled = r.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= diag[j].sqrt();
        }
        let mut a = &scaled * scaled.transpose();
        for i in 0..m {
            a[(i, i)] += 1.0;
        }
        let core = factor_core(a)?;

        let d_inv_resid = resid.component_div(&diag);
        let rdr = &r * &d_inv_resid;
        let b = core.solve(&rdr);

        let log_det_a: f64 = 2.0 * core.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_det = diag.iter().map(|v| v.ln()).sum::<f64>() + log_det_a;
        let quad = resid.dot(&d_inv_resid) - rdr.dot(&b);
        if !log_det.is_finite() || !quad.is_finite() {
            return Err(Error::NumericalBreakdown(
                "non-finite log determinant or quadratic form".into(),
            ));
        }
        Ok(LowRankSystem {
            n,
            rank: m,
            pivot,
            r,
            diag,
            resid,
            core,
            b,
            log_det,
            quad,
            mu: model.mu,
            tau2: model.tau2,
            mode: model.mode,
        })
    }

    /// `log N(y | mu 1, tau2 (C + sigma2 I))`.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.n as f64;
        -0.5 * (n * (2.0 * PI).ln() + n * self.tau2.ln() + self.log_det + self.quad / self.tau2)
    }

    /// `(R'R + D)^{-1} (y - mu)` in original index order.
    pub fn weights(&self) -> Vec<f64> {
        let pivoted = (&self.resid - self.r.transpose() * &self.b).component_div(&self.diag);
        let mut out = vec![0.0; self.n];
        for (slot, &orig) in self.pivot.iter().enumerate() {
            out[orig] = pivoted[slot];
        }
        out
    }

    /// `v' (R'R + D)^{-1} v` for `v` in original order.
    fn inverse_quad(&self, v_orig: &[f64]) -> f64 {
        let v = DVector::from_fn(self.n, |slot, _| v_orig[self.pivot[slot]]);
        let dv = v.component_div(&self.diag);
        let u = &self.r * &dv;
        let w = self
            .core
            .l_dirty()
            .solve_lower_triangular(&u)
            .expect("core Cholesky factor has a positive diagonal");
        v.dot(&dv) - w.norm_squared()
    }
}

fn factor_core(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let m = a.nrows();
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let jitter = 1e-10 * a.trace() / m.max(1) as f64;
    log::warn!("core matrix Cholesky failed; retrying with jitter {jitter:e}");
    let mut aj = a;
    for i in 0..m {
        aj[(i, i)] += jitter;
    }
    Cholesky::new(aj)
        .ok_or_else(|| Error::NumericalBreakdown("core matrix is not positive definite".into()))
}

/// Low-rank marginal log likelihood of `y`.
pub fn marginal_loglik(model: &RegressionModel, factor: &LowRankFactor) -> Result<f64> {
    Ok(LowRankSystem::new(model, factor)?.log_likelihood())
}

/// `R_K'^{-1} c_K(t)` for every new point, as columns of an `m x T` matrix.
fn knot_projections(
    model: &RegressionModel,
    factor: &LowRankFactor,
    new_pts: &PointSet,
) -> Result<DMatrix<f64>> {
    let m = factor.rank();
    let knots = model.pts.select(factor.knots());
    let c = if m == 0 {
        DMatrix::zeros(0, new_pts.len())
    } else {
        model.kernel.cross(&knots, new_pts)?
    };
    if m == 0 {
        return Ok(c);
    }
    let r = factor.rows_matrix();
    let rk_t = r.view((0, 0), (m, m)).transpose();
    rk_t.solve_lower_triangular(&c)
        .ok_or_else(|| Error::NumericalBreakdown("knot block of the factor is singular".into()))
}

/// Posterior mean and variance of `mu + tau w(t)` at `new_pts`, through the knots only.
///
/// `new_pts` must carry the covariate columns the kernel reads.
pub fn posterior_predict(
    model: &RegressionModel,
    factor: &LowRankFactor,
    new_pts: &PointSet,
) -> Result<Posterior> {
    let sys = LowRankSystem::new(model, factor)?;
    posterior_predict_with(&sys, model, factor, new_pts)
}

/// [`posterior_predict`] reusing a prepared [`LowRankSystem`].
pub fn posterior_predict_with(
    sys: &LowRankSystem,
    model: &RegressionModel,
    factor: &LowRankFactor,
    new_pts: &PointSet,
) -> Result<Posterior> {
    if new_pts.dim() != model.pts.dim() {
        return Err(Error::usage("prediction points have the wrong dimension"));
    }
    model.kernel.check_points(new_pts)?;
    let proj = knot_projections(model, factor, new_pts)?;
    let mut mean = Vec::with_capacity(new_pts.len());
    let mut var = Vec::with_capacity(new_pts.len());
    for (t, col) in proj.column_iter().enumerate() {
        let col = col.into_owned();
        mean.push(sys.mu + col.dot(&sys.b));
        let explained = if sys.rank == 0 {
            0.0
        } else {
            let w = sys
                .core
                .l_dirty()
                .solve_lower_triangular(&col)
                .expect("core Cholesky factor has a positive diagonal");
            w.norm_squared()
        };
        let resid_var = match sys.mode {
            ApproxMode::Dtc => 0.0,
            ApproxMode::Modified => {
                let p = new_pts.point(t);
                (model.kernel.eval_unchecked(&p, &p) - col.norm_squared()).max(0.0)
            }
        };
        var.push(clamp_var(sys.tau2 * (explained + resid_var))?);
    }
    Ok(Posterior { mean, var })
}

/// Posterior of each coefficient surface `w_j(t)` of a varying-coefficient kernel at `at`,
/// using exact cross-covariances `x_j(s_i) tau_j^2 exp(-beta_j^2 |t - s_i|^2)` against the
/// approximated prior on the training vector.
pub fn component_posterior(
    model: &RegressionModel,
    factor: &LowRankFactor,
    at: &PointSet,
) -> Result<ComponentPosterior> {
    let sys = LowRankSystem::new(model, factor)?;
    component_posterior_with(&sys, model, at)
}

pub fn component_posterior_with(
    sys: &LowRankSystem,
    model: &RegressionModel,
    at: &PointSet,
) -> Result<ComponentPosterior> {
    let KernelSpec::VaryingCoefficientSum(vc) = &model.kernel else {
        return Err(Error::usage(
            "component posteriors need a varying-coefficient kernel",
        ));
    };
    if at.dim() != model.pts.dim() {
        return Err(Error::usage("prediction points have the wrong dimension"));
    }
    model.kernel.check_points(at)?;
    let weights = sys.weights();
    let tau = sys.tau2.sqrt();
    let n = model.pts.len();
    let n_comp = vc.n_components();

    let mut comps: Vec<Posterior> = (0..n_comp)
        .map(|_| Posterior {
            mean: Vec::with_capacity(at.len()),
            var: Vec::with_capacity(at.len()),
        })
        .collect();
    let mut total = Posterior {
        mean: Vec::with_capacity(at.len()),
        var: Vec::with_capacity(at.len()),
    };
    let mut k_total = vec![0.0; n];
    let mut k_j = vec![0.0; n];
    let mut negatives = 0usize;
    for t in at.iter() {
        k_total.iter_mut().for_each(|v| *v = 0.0);
        let mut mean_total = 0.0;
        for (j, comp) in comps.iter_mut().enumerate() {
            let prior = vc.scales()[j] * vc.scales()[j];
            for (i, s) in model.pts.iter().enumerate() {
                k_j[i] = vc.covariate(j, &s) * vc.component_cov(j, &t, &s);
            }
            let xj = vc.covariate(j, &t);
            for i in 0..n {
                k_total[i] += xj * k_j[i];
            }
            let mean: f64 = k_j.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() / tau;
            let var = if prior == 0.0 {
                0.0
            } else {
                clamp_component_var(prior - sys.inverse_quad(&k_j), &mut negatives)?
            };
            mean_total += xj * mean;
            comp.mean.push(mean);
            comp.var.push(var);
        }
        let prior_total = model.kernel.eval_unchecked(&t, &t);
        total.mean.push(mean_total);
        total
            .var
            .push(clamp_component_var(
                prior_total - sys.inverse_quad(&k_total),
                &mut negatives,
            )?);
    }
    if negatives > 0 {
        log::warn!("{negatives} negative component posterior variances clamped to zero");
    }
    let effect_sizes = comps.iter().map(Posterior::effect_sizes).collect();
    Ok(ComponentPosterior {
        components: comps,
        effect_sizes,
        total,
    })
}

/// Joint draws of the process on `S` and its predictive-process decomposition.
/// Rows are draws, columns are points in original order.
#[derive(Debug, Clone)]
pub struct PpDraws {
    pub omega: DMatrix<f64>,
    /// `E{w(s) | w(knots)}` from the same draw.
    pub nu: DMatrix<f64>,
    /// `w - nu`.
    pub xi: DMatrix<f64>,
    /// `xi - xi*` with `xi*` independent, zero mean, variances equal to the residual variances.
    pub xi_tilde: DMatrix<f64>,
}

/// Draws `w ~ N(0, Psi)` densely (eigendecomposition) and projects each draw on the knots of
/// `factor`. Intended for small `N`.
pub fn simulate_pp(
    kernel: &KernelSpec,
    pts: &PointSet,
    factor: &LowRankFactor,
    n_draws: usize,
    seed: u64,
) -> Result<PpDraws> {
    let n = pts.len();
    if factor.len() != n {
        return Err(Error::usage("factor and point set sizes differ"));
    }
    let gram = kernel.gram(pts)?;
    let eig = SymmetricEigen::new(gram);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);

    let m = factor.rank();
    let r = factor.rows_matrix();
    let rk_t = r.view((0, 0), (m, m)).transpose();
    let knots = factor.knots();
    let pivot = factor.pivot();
    let resid_sd: Vec<f64> = factor.residual_variances().iter().map(|v| v.sqrt()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = DMatrix::zeros(n_draws, n);
    let mut nu = DMatrix::zeros(n_draws, n);
    let mut xi_tilde = DMatrix::zeros(n_draws, n);
    for d in 0..n_draws {
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let w = &root * z;
        let wk = DVector::from_fn(m, |a, _| w[knots[a]]);
        let coef = rk_t
            .solve_lower_triangular(&wk)
            .ok_or_else(|| Error::NumericalBreakdown("knot block is singular".into()))?;
        let nu_piv = r.transpose() * coef;
        for slot in 0..n {
            let i = pivot[slot];
            omega[(d, i)] = w[i];
            nu[(d, i)] = nu_piv[slot];
        }
        for i in 0..n {
            let star: f64 = StandardNormal.sample(&mut rng);
            xi_tilde[(d, i)] = w[i] - nu[(d, i)] - resid_sd[i] * star;
        }
    }
    let xi = &omega - &nu;
    Ok(PpDraws {
        omega,
        nu,
        xi,
        xi_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::pivoted_ichol;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn cloud(seed: u64, n: usize, p: usize, n_cov: usize) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * p).map(|_| rng.random::<f64>()).collect();
        let cov = (0..n * n_cov).map(|_| rng.random_range(-1.5..1.5)).collect();
        PointSet::new(p, coords)
            .unwrap()
            .with_covariates(n_cov, cov)
            .unwrap()
    }

    fn responses(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    /// Prior covariance of the approximated process on `S`, from dense conditioning on knots.
    fn dense_prior(kernel: &KernelSpec, pts: &PointSet, knots: &[usize], mode: ApproxMode) -> DMatrix<f64> {
        let g = kernel.gram(pts).unwrap();
        let m = knots.len();
        let kk = DMatrix::from_fn(m, m, |a, b| g[(knots[a], knots[b])]);
        let ck = DMatrix::from_fn(pts.len(), m, |i, a| g[(i, knots[a])]);
        let mut c = &ck * kk.try_inverse().unwrap() * ck.transpose();
        if mode == ApproxMode::Modified {
            for i in 0..pts.len() {
                c[(i, i)] = g[(i, i)];
            }
        }
        c
    }

    fn dense_loglik(cov: &DMatrix<f64>, y: &[f64], mu: f64) -> f64 {
        let n = y.len();
        let chol = Cholesky::new(cov.clone()).unwrap();
        let r = DVector::from_iterator(n, y.iter().map(|v| v - mu));
        let alpha = chol.solve(&r);
        -0.5 * (n as f64 * (2.0 * PI).ln() + chol.ln_determinant() + r.dot(&alpha))
    }

    #[test]
    fn single_observation_is_scalar_gaussian() {
        let pts = PointSet::from_rows(&[[0.2, 0.3]])
            .unwrap()
            .with_covariates(1, vec![1.7])
            .unwrap();
        let k = KernelSpec::scaled_projected_se(1.0, DMatrix::identity(2, 2), Some(0)).unwrap();
        let f = pivoted_ichol(&k, &pts, 0.01, 1).unwrap();
        let (mu, tau2, sigma2) = (0.4, 2.5, 0.3);
        let model =
            RegressionModel::new(pts, vec![1.1], k, mu, tau2, sigma2, ApproxMode::Dtc).unwrap();
        let v = 1.7f64 * 1.7;
        let s2 = tau2 * (v + sigma2);
        let expected = -0.5 * (2.0 * PI * s2).ln() - (1.1f64 - mu).powi(2) / (2.0 * s2);
        assert_relative_eq!(marginal_loglik(&model, &f).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn complete_factor_matches_exact_gp() {
        let pts = cloud(1, 60, 2, 0);
        let k = KernelSpec::ard_se(vec![2.0, 1.0]).unwrap();
        let y = responses(2, 60);
        let f = pivoted_ichol(&k, &pts, 0.0, 60).unwrap();
        let model =
            RegressionModel::new(pts.clone(), y.clone(), k.clone(), 0.1, 1.3, 0.05, ApproxMode::Dtc)
                .unwrap();
        let mut cov = k.gram(&pts).unwrap();
        for i in 0..60 {
            cov[(i, i)] += 0.05;
        }
        cov *= 1.3;
        let exact = dense_loglik(&cov, &y, 0.1);
        assert!((marginal_loglik(&model, &f).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn woodbury_matches_dense_for_both_modes() {
        for (case, tol) in [(0u64, 0.1), (1, 0.03), (2, 0.01)] {
            let pts = cloud(10 + case, 120, 2, 0);
            let k = KernelSpec::ard_se(vec![3.0, 2.0]).unwrap();
            let y = responses(20 + case, 120);
            let f = pivoted_ichol(&k, &pts, tol, 120).unwrap();
            for mode in [ApproxMode::Dtc, ApproxMode::Modified] {
                let model =
                    RegressionModel::new(pts.clone(), y.clone(), k.clone(), -0.2, 0.8, 0.1, mode)
                        .unwrap();
                let mut cov = dense_prior(&k, &pts, f.knots(), mode);
                for i in 0..120 {
                    cov[(i, i)] += 0.1;
                }
                cov *= 0.8;
                let dense = dense_loglik(&cov, &y, -0.2);
                let low = marginal_loglik(&model, &f).unwrap();
                assert!((low - dense).abs() < 1e-6, "{mode:?}: {low} vs {dense}");
            }
        }
    }

    #[test]
    fn modes_agree_without_residual() {
        let pts = cloud(3, 30, 1, 0);
        let k = KernelSpec::ard_se(vec![0.0]).unwrap();
        let y = responses(4, 30);
        let f = pivoted_ichol(&k, &pts, 0.0, 30).unwrap();
        assert_eq!(f.rank(), 1);
        assert!(f.residual_variances().iter().all(|&d| d == 0.0));
        let a = RegressionModel::new(pts.clone(), y.clone(), k.clone(), 0.0, 1.0, 0.2, ApproxMode::Dtc)
            .unwrap();
        let b = RegressionModel { mode: ApproxMode::Modified, ..a.clone() };
        assert_eq!(marginal_loglik(&a, &f).unwrap(), marginal_loglik(&b, &f).unwrap());
    }

    #[test]
    fn rejects_bad_noise() {
        let pts = cloud(3, 5, 1, 0);
        let k = KernelSpec::ard_se(vec![1.0]).unwrap();
        assert!(RegressionModel::new(pts.clone(), vec![0.0; 5], k.clone(), 0.0, 1.0, 0.0, ApproxMode::Dtc).is_err());
        assert!(RegressionModel::new(pts, vec![0.0; 4], k, 0.0, 1.0, 0.1, ApproxMode::Dtc).is_err());
    }

    #[test]
    fn noiseless_prediction_interpolates_knots() {
        // Under the modified prior the knots carry no residual variance, so as sigma2 -> 0
        // they are fitted exactly while the other points keep their residual variance.
        let pts = cloud(5, 40, 2, 0);
        let k = KernelSpec::ard_se(vec![2.0, 2.0]).unwrap();
        let y = responses(6, 40);
        let f = pivoted_ichol(&k, &pts, 0.05, 40).unwrap();
        assert!(f.rank() < 40);
        let model =
            RegressionModel::new(pts.clone(), y.clone(), k.clone(), 0.3, 1.0, 1e-12, ApproxMode::Modified)
                .unwrap();
        let knots = pts.select(f.knots());
        let post = posterior_predict(&model, &f, &knots).unwrap();
        for (a, &i) in f.knots().iter().enumerate() {
            assert!((post.mean[a] - y[i]).abs() < 1e-4, "{} vs {}", post.mean[a], y[i]);
        }

        // DTC interpolates once the factor is complete
        let pts = cloud(5, 12, 2, 0);
        let y = responses(6, 12);
        let f = pivoted_ichol(&k, &pts, 0.0, 12).unwrap();
        assert_eq!(f.rank(), 12);
        let model = RegressionModel::new(pts.clone(), y.clone(), k, 0.3, 1.0, 1e-12, ApproxMode::Dtc)
            .unwrap();
        let post = posterior_predict(&model, &f, &pts).unwrap();
        for i in 0..12 {
            assert!((post.mean[i] - y[i]).abs() < 1e-4, "{} vs {}", post.mean[i], y[i]);
        }
    }

    #[test]
    fn flat_response_gives_flat_mean() {
        let pts = cloud(7, 25, 2, 0);
        let k = KernelSpec::ard_se(vec![1.0, 3.0]).unwrap();
        let f = pivoted_ichol(&k, &pts, 0.01, 25).unwrap();
        let model = RegressionModel::new(pts, vec![0.7; 25], k, 0.7, 2.0, 0.1, ApproxMode::Modified)
            .unwrap();
        let new = cloud(8, 10, 2, 0);
        let post = posterior_predict(&model, &f, &new).unwrap();
        for m in post.mean {
            assert!((m - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_matches_dense_conditioning() {
        let pts = cloud(9, 50, 2, 0);
        let k = KernelSpec::ard_se(vec![2.5, 1.5]).unwrap();
        let y = responses(10, 50);
        let f = pivoted_ichol(&k, &pts, 0.02, 50).unwrap();
        let new = cloud(11, 8, 2, 0);
        let (mu, tau2, sigma2) = (0.2, 1.7, 0.08);
        for mode in [ApproxMode::Dtc, ApproxMode::Modified] {
            let model = RegressionModel::new(pts.clone(), y.clone(), k.clone(), mu, tau2, sigma2, mode)
                .unwrap();
            let post = posterior_predict(&model, &f, &new).unwrap();

            // dense: prior of (f(new), W) via explicit knot conditioning
            let knots = pts.select(f.knots());
            let kk = k.gram(&knots).unwrap().try_inverse().unwrap();
            let c_new = k.cross(&new, &knots).unwrap();
            let c_train = k.cross(&pts, &knots).unwrap();
            let mut cov_y = dense_prior(&k, &pts, f.knots(), mode);
            for i in 0..50 {
                cov_y[(i, i)] += sigma2;
            }
            let cov_y_inv = cov_y.try_inverse().unwrap();
            let cross = &c_new * &kk * c_train.transpose();
            let r = DVector::from_iterator(50, y.iter().map(|v| v - mu));
            for t in 0..8 {
                let ct = cross.row(t).transpose();
                let mean = mu + (ct.transpose() * &cov_y_inv * &r)[(0, 0)];
                let mut prior = (c_new.row(t) * &kk * c_new.row(t).transpose())[(0, 0)];
                if mode == ApproxMode::Modified {
                    prior = k.eval(&new.point(t), &new.point(t)).unwrap();
                }
                let var = tau2 * (prior - (ct.transpose() * &cov_y_inv * &ct)[(0, 0)]);
                assert!((post.mean[t] - mean).abs() < 1e-6);
                assert!((post.var[t] - var).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn modified_variance_dominates_dtc() {
        let pts = cloud(12, 80, 2, 0);
        let k = KernelSpec::ard_se(vec![4.0, 4.0]).unwrap();
        let y = responses(13, 80);
        let f = pivoted_ichol(&k, &pts, 0.1, 80).unwrap();
        let new = cloud(14, 20, 2, 0);
        let dtc = RegressionModel::new(pts.clone(), y.clone(), k.clone(), 0.0, 1.0, 0.05, ApproxMode::Dtc)
            .unwrap();
        let modi = RegressionModel { mode: ApproxMode::Modified, ..dtc.clone() };
        let a = posterior_predict(&dtc, &f, &new).unwrap();
        let b = posterior_predict(&modi, &f, &new).unwrap();
        for (va, vb) in a.var.iter().zip(&b.var) {
            assert!(vb >= &(va - 1e-12));
        }
    }

    fn vc_setup(seed: u64, n: usize) -> (PointSet, KernelSpec, Vec<f64>) {
        let pts = cloud(seed, n, 2, 1);
        let k = KernelSpec::varying_coefficient_sum(vec![0.8, 1.2], vec![2.0, 1.0], vec![0]).unwrap();
        (pts, k, responses(seed + 1, n))
    }

    #[test]
    fn single_component_equals_predict_with_complete_factor() {
        let pts = cloud(15, 30, 2, 0);
        let k = KernelSpec::varying_coefficient_sum(vec![1.1], vec![1.5], vec![]).unwrap();
        let y = responses(16, 30);
        let f = pivoted_ichol(&k, &pts, 0.0, 30).unwrap();
        // the modified prior keeps the exact prior variance at new points, like the
        // exact cross-covariances used for components
        let model = RegressionModel::new(pts, y, k, 0.0, 1.0, 0.1, ApproxMode::Modified).unwrap();
        let new = cloud(17, 6, 2, 0);
        let comp = component_posterior(&model, &f, &new).unwrap();
        let pred = posterior_predict(&model, &f, &new).unwrap();
        for t in 0..6 {
            assert!((comp.components[0].mean[t] - pred.mean[t]).abs() < 1e-6);
            assert!((comp.components[0].var[t] - pred.var[t]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_scale_component_is_degenerate() {
        let pts = cloud(18, 30, 2, 1);
        let k = KernelSpec::varying_coefficient_sum(vec![1.0, 0.0], vec![2.0, 1.0], vec![0]).unwrap();
        let y = responses(19, 30);
        let f = pivoted_ichol(&k, &pts, 0.01, 30).unwrap();
        let model = RegressionModel::new(pts.clone(), y, k, 0.0, 1.0, 0.1, ApproxMode::Dtc).unwrap();
        let comp = component_posterior(&model, &f, &pts).unwrap();
        assert!(comp.components[1].mean.iter().all(|&m| m == 0.0));
        assert!(comp.components[1].var.iter().all(|&v| v == 0.0));
        assert!(comp.effect_sizes[1].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn components_match_dense_joint_conditioning_and_add_up() {
        let (pts, k, y) = vc_setup(20, 40);
        let f = pivoted_ichol(&k, &pts, 0.02, 40).unwrap();
        let sigma2 = 0.05;
        let model = RegressionModel::new(pts.clone(), y.clone(), k.clone(), 0.0, 1.0, sigma2, ApproxMode::Dtc)
            .unwrap();
        let at = cloud(22, 7, 2, 1);
        let comp = component_posterior(&model, &f, &at).unwrap();

        let KernelSpec::VaryingCoefficientSum(vc) = &k else { unreachable!() };
        let mut cov_y = dense_prior(&k, &pts, f.knots(), ApproxMode::Dtc);
        for i in 0..40 {
            cov_y[(i, i)] += sigma2;
        }
        let inv = cov_y.try_inverse().unwrap();
        let r = DVector::from_vec(y.clone());
        for t in 0..7 {
            let tp = at.point(t);
            let mut total_mean = 0.0;
            for j in 0..2 {
                let kj = DVector::from_fn(40, |i, _| {
                    let s = pts.point(i);
                    vc.covariate(j, &s) * vc.component_cov(j, &tp, &s)
                });
                let mean = (kj.transpose() * &inv * &r)[(0, 0)];
                let var = vc.scales()[j].powi(2) - (kj.transpose() * &inv * &kj)[(0, 0)];
                assert!((comp.components[j].mean[t] - mean).abs() < 1e-6);
                assert!((comp.components[j].var[t] - var).abs() < 1e-6);
                total_mean += vc.covariate(j, &tp) * comp.components[j].mean[t];
            }
            assert!((total_mean - comp.total.mean[t]).abs() < 1e-8);
        }
    }

    #[test]
    fn component_posterior_needs_sum_kernel() {
        let pts = cloud(3, 5, 1, 0);
        let k = KernelSpec::ard_se(vec![1.0]).unwrap();
        let f = pivoted_ichol(&k, &pts, 0.1, 5).unwrap();
        let model = RegressionModel::new(pts.clone(), vec![0.1, 0.2, 0.3, 0.4, 0.5], k, 0.0, 1.0, 0.1, ApproxMode::Dtc)
            .unwrap();
        assert!(matches!(component_posterior(&model, &f, &pts), Err(Error::Usage(_))));
    }

    #[test]
    fn simulated_residuals_vanish_on_knots_and_complete_factors() {
        let pts = cloud(23, 20, 2, 0);
        let k = KernelSpec::ard_se(vec![3.0, 3.0]).unwrap();
        let f = pivoted_ichol(&k, &pts, 0.1, 20).unwrap();
        let draws = simulate_pp(&k, &pts, &f, 50, 1).unwrap();
        for d in 0..50 {
            for &kn in f.knots() {
                assert!((draws.nu[(d, kn)] - draws.omega[(d, kn)]).abs() < 1e-10);
            }
        }
        let full = pivoted_ichol(&k, &pts, 0.0, 20).unwrap();
        let draws = simulate_pp(&k, &pts, &full, 20, 1).unwrap();
        assert!(draws.xi.amax() < 1e-6);
    }

    #[test]
    fn simulated_residual_variance_matches_factor() {
        let pts = cloud(24, 15, 2, 0);
        let k = KernelSpec::ard_se(vec![3.0, 2.0]).unwrap();
        let f = pivoted_ichol(&k, &pts, 0.2, 15).unwrap();
        let draws = simulate_pp(&k, &pts, &f, 10_000, 7).unwrap();
        let target = f.residual_variances();
        for (i, &v) in target.iter().enumerate() {
            let col = draws.xi.column(i);
            let var = col.iter().map(|x| x * x).sum::<f64>() / 10_000.0;
            if v > 1e-6 {
                assert!((var - v).abs() < 0.05 * v, "point {i}: {var} vs {v}");
                let vt = draws.xi_tilde.column(i).iter().map(|x| x * x).sum::<f64>() / 10_000.0;
                assert!((vt - 2.0 * v).abs() < 0.05 * 2.0 * v);
            } else {
                assert!(var < 1e-6);
            }
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let pts = cloud(25, 10, 1, 0);
        let k = KernelSpec::ard_se(vec![2.0]).unwrap();
        let f = pivoted_ichol(&k, &pts, 0.1, 10).unwrap();
        let a = simulate_pp(&k, &pts, &f, 5, 99).unwrap();
        let b = simulate_pp(&k, &pts, &f, 5, 99).unwrap();
        assert_eq!(a.omega, b.omega);
        assert_eq!(a.xi_tilde, b.xi_tilde);
    }
}
