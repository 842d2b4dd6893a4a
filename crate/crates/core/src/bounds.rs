//! Tail bounds on the residual process `xi = w - nu` of a predictive process approximation.
//!
//! * Finite set `S`: `P(max_S |xi| > eps) <= 3 exp{-eps^2 / (9 kappa_S^2 (2 + log|S|))}`.
//! * Continuum `T` in `[a, b]^p` with `Var{w(s) - w(t)} <= c^2 |s - t|^2`:
//!   `P(sup_T |xi| > eps) <= 3 exp{-eps^2 / (B^2 kappa)}` with `B = 27 sqrt(2 p c (b - a))`.
//!
//! With the diagonal correction `xi* ` added to the approximation, the residual variance doubles
//! and only the finite-set bound applies, with `kappa_S^2` replaced by `2 kappa_S^2`.
//!
//! All reported bounds are capped at 1; the `_raw` variants return the uncapped expression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::usage(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::usage(format!("kappa must be nonnegative, got {kappa}")));
    }
    Ok(())
}

fn check_set_size(set_size: f64) -> Result<()> {
    if !(set_size.is_finite() && set_size >= 1.0) {
        return Err(Error::usage(format!("set size must be at least 1, got {set_size}")));
    }
    Ok(())
}

/// `9 kappa^2 (2 + log |S|)`, with `kappa^2` doubled for the modified approximation.
fn finite_set_scale(kappa_s: f64, set_size: f64, modified: bool) -> f64 {
    let k2 = if modified { 2.0 } else { 1.0 } * kappa_s * kappa_s;
    9.0 * k2 * (2.0 + set_size.ln())
}

/// Uncapped finite-set bound. `set_size` is `|S|` (real-valued to allow any `log|S|`).
pub fn finite_set_tail_raw(eps: f64, kappa_s: f64, set_size: f64, modified: bool) -> Result<f64> {
    check_eps(eps)?;
    check_kappa(kappa_s)?;
    check_set_size(set_size)?;
    if kappa_s == 0.0 {
        return Ok(0.0);
    }
    Ok(3.0 * (-eps * eps / finite_set_scale(kappa_s, set_size, modified)).exp())
}

/// Bound on `P(max_S |xi| > eps)`, capped at 1.
pub fn finite_set_tail(eps: f64, kappa_s: f64, set_size: f64, modified: bool) -> Result<f64> {
    finite_set_tail_raw(eps, kappa_s, set_size, modified).map(|b| b.min(1.0))
}

/// `B^2 = 729 * 2 p c (b - a)`.
pub fn continuum_constant_sq(p: usize, a: f64, b: f64, c: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::usage("dimension p must be at least 1"));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::usage(format!("need a < b, got a = {a}, b = {b}")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::usage(format!("c must be positive, got {c}")));
    }
    Ok(729.0 * 2.0 * p as f64 * c * (b - a))
}

pub fn continuum_tail_raw(eps: f64, kappa: f64, p: usize, a: f64, b: f64, c: f64) -> Result<f64> {
    check_eps(eps)?;
    check_kappa(kappa)?;
    let b2 = continuum_constant_sq(p, a, b, c)?;
    if kappa == 0.0 {
        return Ok(0.0);
    }
    Ok(3.0 * (-eps * eps / (b2 * kappa)).exp())
}

/// Bound on `P(sup_T |xi| > eps)`, capped at 1.
pub fn continuum_tail(eps: f64, kappa: f64, p: usize, a: f64, b: f64, c: f64) -> Result<f64> {
    continuum_tail_raw(eps, kappa, p, a, b, c).map(|v| v.min(1.0))
}

/// Smallest `eps` with `finite_set_tail(eps, ..) <= target_prob`.
pub fn eps_for_confidence(
    target_prob: f64,
    kappa_s: f64,
    set_size: f64,
    modified: bool,
) -> Result<f64> {
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return Err(Error::usage(format!(
            "target probability must lie in (0, 1), got {target_prob}"
        )));
    }
    check_kappa(kappa_s)?;
    check_set_size(set_size)?;
    if kappa_s == 0.0 {
        return Ok(0.0);
    }
    Ok((-finite_set_scale(kappa_s, set_size, modified) * (target_prob / 3.0).ln()).sqrt())
}

/// JSON-ready summary of one bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub kind: String,
    pub eps: f64,
    pub kappa: f64,
    pub bound: f64,
    pub raw_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_prob: Option<f64>,
}
