//! Pivoted incomplete Cholesky factorization with dynamic stopping.
//!
//! Given a covariance function and a candidate set `S = {s_1, .., s_N}`, the factorization
//! greedily selects knots: at each step the candidate with the largest residual variance
//! `Var{w(s) | w(knots)}` is moved to the front and one more row of the Cholesky factor is
//! built. It stops once every residual variance is at most `abs_tol^2`, where
//! `abs_tol = kappa_tol_rel * sqrt(max_i psi(s_i, s_i))`, or when `m_max` rows exist.
//!
//! The result `R` (`m x N`, columns in pivoted order) is the Cholesky factor of the covariance
//! matrix of the predictive process on the selected knots: `P Psi_hat P' = R'R`. Only `m` rows of
//! length `N` are ever stored, and kernel entries are computed only for rows actually built.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, PointSet};

/// Negative residual variances above `-NEG_TOL * max_diag` are round-off and clamped to zero.
pub const NEG_TOL: f64 = 1e-8;

/// Residual variances below `ROUNDOFF_FACTOR * N * eps * max_diag` are indistinguishable from
/// accumulated round-off; the effective relative tolerance never goes below this level.
pub const ROUNDOFF_FACTOR: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every residual variance is at most `abs_tol^2`.
    ToleranceMet,
    /// `m_max` knots were selected before the tolerance was met.
    RankCapHit,
}

/// Output of [`pivoted_ichol`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    n: usize,
    pivot: Vec<usize>,
    rank: usize,
    /// `rank x n`, row-major, pivoted column order.
    rows: Vec<f64>,
    /// Residual variances in pivoted order (zero for the first `rank` slots).
    resid_diag: Vec<f64>,
    abs_tol: f64,
    max_diag: f64,
    terminated_by: Termination,
}

impl LowRankFactor {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of knots `m`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Permutation: slot `k` holds original index `pivot()[k]`.
    pub fn pivot(&self) -> &[usize] {
        &self.pivot
    }

    /// Original indices of the selected knots, in selection order.
    pub fn knots(&self) -> &[usize] {
        &self.pivot[..self.rank]
    }

    /// `inverse[i]` is the pivoted slot of original index `i`.
    pub fn inverse_pivot(&self) -> Vec<usize> {
        let mut inv = vec![0; self.n];
        for (slot, &orig) in self.pivot.iter().enumerate() {
            inv[orig] = slot;
        }
        inv
    }

    /// Row `k` of `R` (length `N`, pivoted column order, zero left of the diagonal).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n..(k + 1) * self.n]
    }

    /// `R` as an `m x N` matrix in pivoted column order.
    pub fn rows_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rank, self.n, &self.rows)
    }

    /// Diagonal `r_kk` of the factor: the residual sd of each knot just before it was selected.
    pub fn pivot_sds(&self) -> Vec<f64> {
        (0..self.rank).map(|k| self.row(k)[k]).collect()
    }

    /// Residual variances in pivoted order.
    pub fn resid_diag(&self) -> &[f64] {
        &self.resid_diag
    }

    /// Absolute tolerance on the residual sd actually used for stopping.
    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    /// `max_i psi(s_i, s_i)`.
    pub fn max_diag(&self) -> f64 {
        self.max_diag
    }

    pub fn terminated_by(&self) -> Termination {
        self.terminated_by
    }

    /// `Var{xi(s_i)}` in original index order; zero at the knots.
    pub fn residual_variances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (slot, &orig) in self.pivot.iter().enumerate() {
            out[orig] = self.resid_diag[slot];
        }
        out
    }

    /// `kappa_S = max_s sqrt(Var{xi(s)})`.
    pub fn kappa_s(&self) -> f64 {
        self.resid_diag.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt()
    }

    /// `R'R` in original index order: the covariance of the predictive process on `S`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut c = DMatrix::zeros(n, n);
        for k in 0..self.rank {
            let row = self.row(k);
            // entries left of the diagonal are zero
            for a in k..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                let ia = self.pivot[a];
                for b in k..n {
                    c[(ia, self.pivot[b])] += ra * row[b];
                }
            }
        }
        c
    }

    /// `R'R + diag(residual variances)`: restores the exact pointwise variances.
    pub fn modified_reconstruct(&self) -> DMatrix<f64> {
        let mut c = self.reconstruct();
        for (i, d) in self.residual_variances().into_iter().enumerate() {
            c[(i, i)] += d;
        }
        c
    }
}

/// Pivoted incomplete Cholesky of the kernel matrix on `pts`.
///
/// `kappa_tol_rel` is relative to the largest prior sd on `pts`; `0` asks for a complete
/// factorization down to round-off. Hitting `m_max` is not an error, see
/// [`LowRankFactor::terminated_by`].
pub fn pivoted_ichol(
    kernel: &KernelSpec,
    pts: &PointSet,
    kappa_tol_rel: f64,
    m_max: usize,
) -> Result<LowRankFactor> {
    kernel.check_points(pts)?;
    pivoted_ichol_fn(
        pts.len(),
        |i, j| kernel.eval_unchecked(&pts.point(i), &pts.point(j)),
        kappa_tol_rel,
        m_max,
    )
}

/// Same as [`pivoted_ichol`] on a precomputed symmetric matrix.
pub fn pivoted_ichol_gram(
    gram: &DMatrix<f64>,
    kappa_tol_rel: f64,
    m_max: usize,
) -> Result<LowRankFactor> {
    if !gram.is_square() {
        return Err(Error::usage("matrix must be square"));
    }
    pivoted_ichol_fn(gram.nrows(), |i, j| gram[(i, j)], kappa_tol_rel, m_max)
}

/// Core factorization over an entry oracle `entry(i, j) = psi(s_i, s_j)` (original indices).
///
/// The oracle is called `N` times for the diagonal and `N - k - 1` times for row `k`.
pub fn pivoted_ichol_fn<F>(
    n: usize,
    mut entry: F,
    kappa_tol_rel: f64,
    m_max: usize,
) -> Result<LowRankFactor>
where
    F: FnMut(usize, usize) -> f64,
{
    if n == 0 {
        return Err(Error::usage("point set must be nonempty"));
    }
    if !(kappa_tol_rel.is_finite() && (0.0..1.0).contains(&kappa_tol_rel)) {
        return Err(Error::usage(format!(
            "relative tolerance must lie in [0, 1), got {kappa_tol_rel}"
        )));
    }
    if m_max == 0 {
        return Err(Error::usage("m_max must be at least 1"));
    }
    let m_max = m_max.min(n);

    let mut pivot: Vec<usize> = (0..n).collect();
    let mut d: Vec<f64> = (0..n).map(|i| entry(i, i)).collect();
    if let Some(i) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown(format!(
            "non-finite prior variance at point {i}"
        )));
    }
    let max_diag = d.iter().fold(0.0f64, |a, &b| a.max(b));
    let neg_tol = NEG_TOL * max_diag;
    if let Some(i) = d.iter().position(|&v| v < -neg_tol) {
        return Err(Error::NotPsd {
            index: i,
            value: d[i],
            threshold: -neg_tol,
        });
    }
    for v in d.iter_mut() {
        *v = v.max(0.0);
    }

    let floor_rel = (ROUNDOFF_FACTOR * n as f64 * f64::EPSILON).sqrt();
    let abs_tol = max_diag.sqrt() * kappa_tol_rel.max(floor_rel);
    let threshold = abs_tol * abs_tol;

    let mut rows: Vec<f64> = Vec::new();
    let mut k = 0;
    loop {
        // argmax over slots k..n, lowest slot wins ties
        let mut l_max = k;
        let mut d_max = f64::NEG_INFINITY;
        for (l, &v) in d.iter().enumerate().skip(k) {
            if v > d_max {
                d_max = v;
                l_max = l;
            }
        }
        if k == n || d_max <= threshold || k == m_max {
            break;
        }

        pivot.swap(k, l_max);
        d.swap(k, l_max);
        for l in 0..k {
            rows.swap(l * n + k, l * n + l_max);
        }

        // new row k: r_kj = {psi(k, j) - sum_{l<k} r_lk r_lj} / r_kk for j = k+1..N.
        // The published pseudocode stops this loop at m and writes psi products in the
        // numerator; the recursion needs all N columns and products of factor entries.
        let r_kk = d_max.sqrt();
        let start = rows.len();
        rows.resize(start + n, 0.0);
        let pk = pivot[k];
        for j in (k + 1)..n {
            rows[start + j] = entry(pk, pivot[j]);
        }
        let (prev, new_row) = rows.split_at_mut(start);
        for l in 0..k {
            let prev_row = &prev[l * n..(l + 1) * n];
            let r_lk = prev_row[k];
            if r_lk == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                new_row[j] -= r_lk * prev_row[j];
            }
        }
        new_row[k] = r_kk;
        for j in (k + 1)..n {
            new_row[j] /= r_kk;
        }

        // residual update d_j -= r_kj^2 (trailing diagonal uses r_lk^2, not r_lm^2)
        d[k] = 0.0;
        for j in (k + 1)..n {
            let v = d[j] - new_row[j] * new_row[j];
            if v < -neg_tol {
                return Err(Error::NotPsd {
                    index: pivot[j],
                    value: v,
                    threshold: -neg_tol,
                });
            }
            d[j] = v.max(0.0);
        }
        k += 1;
    }

    let rank = k;
    let trailing_max = d[rank..].iter().fold(0.0f64, |a, &b| a.max(b));
    let terminated_by = if trailing_max <= threshold {
        Termination::ToleranceMet
    } else {
        Termination::RankCapHit
    };
    rows.shrink_to_fit();

    Ok(LowRankFactor {
        n,
        pivot,
        rank,
        rows,
        resid_diag: d,
        abs_tol,
        max_diag,
        terminated_by,
    })
}

/// Unpivoted upper-triangular Cholesky factor `L` with `gram = L'L`, built row by row.
/// Zero pivots (rank deficiency) produce zero rows.
pub fn full_cholesky(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !gram.is_square() {
        return Err(Error::usage("matrix must be square"));
    }
    let n = gram.nrows();
    let max_diag = gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    let neg_tol = NEG_TOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut pivot = gram[(i, i)];
        for k in 0..i {
            pivot -= l[(k, i)] * l[(k, i)];
        }
        if pivot < -neg_tol || !pivot.is_finite() {
            return Err(Error::NotPsd {
                index: i,
                value: pivot,
                threshold: -neg_tol,
            });
        }
        let lii = pivot.max(0.0).sqrt();
        l[(i, i)] = lii;
        if lii == 0.0 {
            continue;
        }
        for j in (i + 1)..n {
            let mut v = gram[(i, j)];
            for k in 0..i {
                v -= l[(k, i)] * l[(k, j)];
            }
            l[(i, j)] = v / lii;
        }
    }
    Ok(l)
}
