//! Covariance functions over points in R^p.
//!
//! Three families are supported:
//!
//! * [`KernelSpec::ard_se`]: `exp{-sum_j beta_j^2 (s_j - t_j)^2}`, unit marginal variance.
//! * [`KernelSpec::scaled_projected_se`]: `x(s) x(t) exp(-beta |Q (s - t)|^2)` with `Q` a
//!   symmetric idempotent matrix and `x` a per-point modulation.
//! * [`KernelSpec::varying_coefficient_sum`]:
//!   `sum_j x_j(s) x_j(t) tau_j^2 exp(-beta_j^2 |s - t|^2)` with `x_0 = 1`.
//!
//! Per-point functions such as `x(t)` are not symbolic. They are read from the covariate
//! columns of a [`PointSet`], so evaluating a kernel at new locations requires the caller to
//! supply covariate values there as well.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Q^2 - Q|_max` and `|Q - Q'|_max` when validating a projection.
pub const PROJECTION_TOL: f64 = 1e-10;

/// A borrowed view of one location together with its covariate values.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub coords: &'a [f64],
    pub covariates: &'a [f64],
}

impl<'a> Point<'a> {
    pub fn new(coords: &'a [f64]) -> Self {
        Point {
            coords,
            covariates: &[],
        }
    }

    pub fn with_covariates(coords: &'a [f64], covariates: &'a [f64]) -> Self {
        Point { coords, covariates }
    }
}

/// Ordered collection of `N` locations of common dimension `p`, with an optional table of
/// per-point covariate values. Indices are identities: reordering is never done in place.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    n_covariates: usize,
    covariates: Vec<f64>,
}

impl PointSet {
    /// Builds a point set from row-major coordinates (`N * dim` values).
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("point dimension must be at least 1"));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::usage(format!(
                "coordinate buffer of length {} is not a nonempty multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::usage(format!(
                "non-finite coordinate at point {}",
                i / dim
            )));
        }
        Ok(PointSet {
            dim,
            coords,
            n_covariates: 0,
            covariates: Vec::new(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::usage("point set must contain at least one point"))?;
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::usage(format!(
                    "point {i} has dimension {} but point 0 has {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        PointSet::new(dim, coords)
    }

    /// Attaches a row-major covariate table with `n_covariates` columns.
    pub fn with_covariates(mut self, n_covariates: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_covariates * self.len() {
            return Err(Error::usage(format!(
                "covariate table has {} values, expected {} x {}",
                values.len(),
                self.len(),
                n_covariates
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("non-finite covariate value"));
        }
        self.n_covariates = n_covariates;
        self.covariates = values;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.n_covariates..(i + 1) * self.n_covariates]
    }

    pub fn point(&self, i: usize) -> Point<'_> {
        Point::with_covariates(self.coords(i), self.covariates(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = Point<'_>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// New point set holding the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut covariates = Vec::with_capacity(indices.len() * self.n_covariates);
        for &i in indices {
            coords.extend_from_slice(self.coords(i));
            covariates.extend_from_slice(self.covariates(i));
        }
        PointSet {
            dim: self.dim,
            coords,
            n_covariates: self.n_covariates,
            covariates,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArdSe {
    rates: Vec<f64>,
    rates_sq: Vec<f64>,
}

impl ArdSe {
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledProjectedSe {
    range: f64,
    projection: DMatrix<f64>,
    scale_column: Option<usize>,
}

impl ScaledProjectedSe {
    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    /// Covariate column holding `x(t)`; `None` means `x = 1`.
    pub fn scale_column(&self) -> Option<usize> {
        self.scale_column
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaryingCoefficientSum {
    scales: Vec<f64>,
    ranges: Vec<f64>,
    columns: Vec<usize>,
}

impl VaryingCoefficientSum {
    /// `tau_0..tau_J`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `beta_0..beta_J`.
    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    /// Covariate columns holding `x_1..x_J`.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn n_components(&self) -> usize {
        self.scales.len()
    }

    /// `x_j` at a point, with `x_0 = 1`.
    pub fn covariate(&self, j: usize, p: &Point<'_>) -> f64 {
        if j == 0 {
            1.0
        } else {
            p.covariates[self.columns[j - 1]]
        }
    }

    /// Covariance of component `j` with itself: `tau_j^2 exp(-beta_j^2 |s - t|^2)`.
    pub fn component_cov(&self, j: usize, s: &Point<'_>, t: &Point<'_>) -> f64 {
        let tau = self.scales[j];
        let beta = self.ranges[j];
        tau * tau * (-beta * beta * sq_dist(s.coords, t.coords)).exp()
    }
}

/// A parameterized covariance function. Construct through the validating constructors.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    ArdSe(ArdSe),
    ScaledProjectedSe(ScaledProjectedSe),
    VaryingCoefficientSum(VaryingCoefficientSum),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
}

/// Flat parameter vector of a kernel with names and sampling transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypers {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub transforms: Vec<Transform>,
}

impl Hypers {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_finite_nonneg(what: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::usage(format!("{what}[{i}] is not finite")));
        }
        if *v < 0.0 {
            return Err(Error::usage(format!("{what}[{i}] = {v} is negative")));
        }
    }
    Ok(())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KernelSpec {
    pub fn ard_se(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::usage("ARD-SE kernel needs at least one rate"));
        }
        check_finite_nonneg("rates", &rates)?;
        let rates_sq = rates.iter().map(|b| b * b).collect();
        Ok(KernelSpec::ArdSe(ArdSe { rates, rates_sq }))
    }

    /// `x(s) x(t) exp(-range |Q (s - t)|^2)`. `Q` must be symmetric and idempotent.
    pub fn scaled_projected_se(
        range: f64,
        projection: DMatrix<f64>,
        scale_column: Option<usize>,
    ) -> Result<Self> {
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::usage(format!("range must be positive, got {range}")));
        }
        if !projection.is_square() || projection.nrows() == 0 {
            return Err(Error::usage("projection matrix must be square and nonempty"));
        }
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("projection matrix has non-finite entries"));
        }
        let asym = (&projection - projection.transpose()).amax();
        let idem = (&projection * &projection - &projection).amax();
        if asym >= PROJECTION_TOL || idem >= PROJECTION_TOL {
            return Err(Error::usage(format!(
                "projection matrix must be symmetric idempotent (asymmetry {asym:e}, |Q^2-Q| {idem:e})"
            )));
        }
        Ok(KernelSpec::ScaledProjectedSe(ScaledProjectedSe {
            range,
            projection,
            scale_column,
        }))
    }

    /// Sum of `J + 1` independent squared-exponential components weighted by covariates.
    /// `columns[j - 1]` is the covariate column holding `x_j`.
    pub fn varying_coefficient_sum(
        scales: Vec<f64>,
        ranges: Vec<f64>,
        columns: Vec<usize>,
    ) -> Result<Self> {
        if scales.is_empty() || scales.len() != ranges.len() || columns.len() + 1 != scales.len() {
            return Err(Error::usage(format!(
                "varying-coefficient kernel needs J+1 scales, J+1 ranges and J covariate columns \
                 (got {}, {}, {})",
                scales.len(),
                ranges.len(),
                columns.len()
            )));
        }
        check_finite_nonneg("scales", &scales)?;
        check_finite_nonneg("ranges", &ranges)?;
        Ok(KernelSpec::VaryingCoefficientSum(VaryingCoefficientSum {
            scales,
            ranges,
            columns,
        }))
    }

    /// Required coordinate dimension, if the kernel fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            KernelSpec::ArdSe(k) => Some(k.rates.len()),
            KernelSpec::ScaledProjectedSe(k) => Some(k.projection.nrows()),
            KernelSpec::VaryingCoefficientSum(_) => None,
        }
    }

    /// Number of covariate columns a point set must carry.
    pub fn required_covariates(&self) -> usize {
        match self {
            KernelSpec::ArdSe(_) => 0,
            KernelSpec::ScaledProjectedSe(k) => k.scale_column.map_or(0, |c| c + 1),
            KernelSpec::VaryingCoefficientSum(k) => {
                k.columns.iter().map(|c| c + 1).max().unwrap_or(0)
            }
        }
    }

    fn check_dims(&self, dim: usize, n_covariates: usize) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != dim {
                return Err(Error::usage(format!(
                    "kernel expects dimension {d}, points have dimension {dim}"
                )));
            }
        }
        let need = self.required_covariates();
        if n_covariates < need {
            return Err(Error::usage(format!(
                "kernel reads {need} covariate columns, points carry {n_covariates}"
            )));
        }
        Ok(())
    }

    /// Checks that every point of `pts` can be fed to [`KernelSpec::eval`].
    pub fn check_points(&self, pts: &PointSet) -> Result<()> {
        self.check_dims(pts.dim(), pts.n_covariates())
    }

    /// `psi(s, t)`.
    pub fn eval(&self, s: &Point<'_>, t: &Point<'_>) -> Result<f64> {
        if s.coords.len() != t.coords.len() {
            return Err(Error::usage(format!(
                "points have different dimensions {} and {}",
                s.coords.len(),
                t.coords.len()
            )));
        }
        self.check_dims(s.coords.len(), s.covariates.len().min(t.covariates.len()))?;
        Ok(self.eval_unchecked(s, t))
    }

    /// `psi(s, t)` without dimension checks; callers validate with [`KernelSpec::check_points`].
    #[inline]
    pub fn eval_unchecked(&self, s: &Point<'_>, t: &Point<'_>) -> f64 {
        match self {
            KernelSpec::ArdSe(k) => {
                let q: f64 = k
                    .rates_sq
                    .iter()
                    .zip(s.coords.iter().zip(t.coords))
                    .map(|(b2, (a, b))| b2 * (a - b) * (a - b))
                    .sum();
                (-q).exp()
            }
            KernelSpec::ScaledProjectedSe(k) => {
                let p = k.projection.nrows();
                let mut q = 0.0;
                for i in 0..p {
                    let mut row = 0.0;
                    for j in 0..p {
                        row += k.projection[(i, j)] * (s.coords[j] - t.coords[j]);
                    }
                    q += row * row;
                }
                let (xs, xt) = match k.scale_column {
                    Some(c) => (s.covariates[c], t.covariates[c]),
                    None => (1.0, 1.0),
                };
                xs * xt * (-k.range * q).exp()
            }
            KernelSpec::VaryingCoefficientSum(k) => {
                let d2 = sq_dist(s.coords, t.coords);
                let mut total = 0.0;
                for j in 0..k.scales.len() {
                    let tau = k.scales[j];
                    let beta = k.ranges[j];
                    total += k.covariate(j, s)
                        * k.covariate(j, t)
                        * tau
                        * tau
                        * (-beta * beta * d2).exp();
                }
                total
            }
        }
    }

    /// `psi(t, t)` for every point.
    pub fn diag(&self, pts: &PointSet) -> Result<Vec<f64>> {
        self.check_points(pts)?;
        Ok(pts.iter().map(|p| self.eval_unchecked(&p, &p)).collect())
    }

    /// `N x N` covariance matrix, each unordered pair evaluated once.
    pub fn gram(&self, pts: &PointSet) -> Result<DMatrix<f64>> {
        self.check_points(pts)?;
        let n = pts.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            let pi = pts.point(i);
            for j in i..n {
                let v = self.eval_unchecked(&pi, &pts.point(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// `|a| x |b|` cross-covariance matrix.
    pub fn cross(&self, a: &PointSet, b: &PointSet) -> Result<DMatrix<f64>> {
        if a.dim() != b.dim() {
            return Err(Error::usage(format!(
                "point sets have different dimensions {} and {}",
                a.dim(),
                b.dim()
            )));
        }
        self.check_points(a)?;
        self.check_points(b)?;
        Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
            self.eval_unchecked(&a.point(i), &b.point(j))
        }))
    }

    /// Canonical metric `sqrt(E{w(s) - w(t)}^2)`, clamped at zero against round-off.
    pub fn canonical_distance(&self, s: &Point<'_>, t: &Point<'_>) -> Result<f64> {
        let st = self.eval(s, t)?;
        let ss = self.eval_unchecked(s, s);
        let tt = self.eval_unchecked(t, t);
        Ok((ss + tt - 2.0 * st).max(0.0).sqrt())
    }

    /// Positive parameters of the kernel, in sampling order.
    pub fn hypers(&self) -> Hypers {
        let (values, names): (Vec<f64>, Vec<String>) = match self {
            KernelSpec::ArdSe(k) => k
                .rates
                .iter()
                .enumerate()
                .map(|(j, &b)| (b, format!("beta_{}", j + 1)))
                .unzip(),
            KernelSpec::ScaledProjectedSe(k) => (vec![k.range], vec!["beta".to_string()]),
            KernelSpec::VaryingCoefficientSum(k) => {
                let taus = k
                    .scales
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| (t, format!("tau_{j}")));
                let betas = k
                    .ranges
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| (b, format!("beta_{j}")));
                taus.chain(betas).unzip()
            }
        };
        let transforms = vec![Transform::Log; values.len()];
        Hypers {
            values,
            names,
            transforms,
        }
    }

    /// Same kernel family and fixed structure, new parameter values (ordered as in [`KernelSpec::hypers`]).
    pub fn with_hypers(&self, values: &[f64]) -> Result<KernelSpec> {
        let expected = self.hypers().len();
        if values.len() != expected {
            return Err(Error::usage(format!(
                "kernel takes {expected} parameters, got {}",
                values.len()
            )));
        }
        match self {
            KernelSpec::ArdSe(_) => KernelSpec::ard_se(values.to_vec()),
            KernelSpec::ScaledProjectedSe(k) => {
                KernelSpec::scaled_projected_se(values[0], k.projection.clone(), k.scale_column)
            }
            KernelSpec::VaryingCoefficientSum(k) => {
                let j1 = k.scales.len();
                KernelSpec::varying_coefficient_sum(
                    values[..j1].to_vec(),
                    values[j1..].to_vec(),
                    k.columns.clone(),
                )
            }
        }
    }
}
