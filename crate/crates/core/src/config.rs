//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, lists are comma separated. Keys are fixed (see
//! [`KNOWN_KEYS`]); an unknown or repeated key is a usage error.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{CsvSchema, Dataset};
use crate::error::{Error, Result};
use crate::gp::ApproxMode;
use crate::kernel::KernelSpec;

pub const KNOWN_KEYS: &[&str] = &[
    // data
    "coords", "response", "id",
    // kernel
    "kernel", "beta", "tau", "projection", "scale", "covariates",
    // factorization
    "tol", "tol_sq", "m_max",
    // model
    "mode", "sigma2", "mu", "tau2",
    // sampler
    "sweeps", "burn_in", "thin", "seed", "steps", "adapt",
    // simulation
    "draws",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::usage(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let k = k.trim();
            if cfg.entries.contains_key(k) {
                return Err(Error::usage(format!(
                    "config line {}: key '{k}' given twice",
                    lineno + 1
                )));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Config::parse(&text)
    }

    /// Sets or replaces a key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::usage(format!("unknown config key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::usage(format!("config key '{key}': cannot parse '{v}'")))
            })
            .transpose()
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parsed(key)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key)
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parsed(key)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                split_list(v)
                    .map(|s| {
                        s.parse().map_err(|_| {
                            Error::usage(format!("config key '{key}': cannot parse '{s}'"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn str_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key)
            .map(|v| split_list(v).map(str::to_string).collect())
    }

    /// `kappa_tol_rel` from `tol` or `tol_sq` (its square), default `0.01`.
    pub fn kappa_tol_rel(&self) -> Result<f64> {
        match (self.f64("tol")?, self.f64("tol_sq")?) {
            (Some(_), Some(_)) => Err(Error::usage("give only one of 'tol' and 'tol_sq'")),
            (Some(t), None) => Ok(t),
            (None, Some(t2)) if t2 >= 0.0 => Ok(t2.sqrt()),
            (None, Some(t2)) => Err(Error::usage(format!("tol_sq must be nonnegative, got {t2}"))),
            (None, None) => Ok(0.01),
        }
    }

    /// `m_max`, default `n`.
    pub fn m_max(&self, n: usize) -> Result<usize> {
        Ok(self.usize("m_max")?.unwrap_or(n))
    }

    pub fn mode(&self) -> Result<ApproxMode> {
        match self.get("mode") {
            None | Some("dtc") => Ok(ApproxMode::Dtc),
            Some("modified") => Ok(ApproxMode::Modified),
            Some(other) => Err(Error::usage(format!(
                "mode must be 'dtc' or 'modified', got '{other}'"
            ))),
        }
    }

    pub fn kernel_config(&self) -> Result<KernelConfig> {
        KernelConfig::from_config(self)
    }

    /// CSV schema: `coords`, `response` (default `y` when `with_response`), `id`, and the
    /// covariates the kernel reads.
    pub fn schema(&self, with_response: bool) -> Result<CsvSchema> {
        Ok(CsvSchema {
            coords: self.str_list("coords").unwrap_or_default(),
            response: with_response
                .then(|| self.get("response").unwrap_or("y").to_string()),
            covariates: self.kernel_config()?.covariates(),
            id: self.get("id").map(str::to_string),
        })
    }
}

/// Kernel as named in a config file, before covariate names are resolved to columns.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelConfig {
    /// `kernel = ard_se`, `beta = b1, .., bp` (one value is repeated over all dimensions).
    ArdSe { beta: Vec<f64> },
    /// `kernel = scaled_projected_se`, `beta = b`, `projection = identity | q11, q12, ..`
    /// (row-major), `scale = <covariate>` (default `x = 1`).
    ScaledProjectedSe {
        beta: f64,
        projection: Option<Vec<f64>>,
        scale: Option<String>,
    },
    /// `kernel = varying_coefficient`, `tau = t0, .., tJ`, `beta = b0, .., bJ`,
    /// `covariates = z1, .., zJ`.
    VaryingCoefficient {
        tau: Vec<f64>,
        beta: Vec<f64>,
        covariates: Vec<String>,
    },
}

impl KernelConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let beta = cfg
            .f64_list("beta")?
            .ok_or_else(|| Error::usage("config needs 'beta'"))?;
        match cfg.get("kernel").unwrap_or("ard_se") {
            "ard_se" => Ok(KernelConfig::ArdSe { beta }),
            "scaled_projected_se" => {
                let [b] = beta[..] else {
                    return Err(Error::usage("scaled_projected_se takes a single beta"));
                };
                let projection = match cfg.get("projection") {
                    None | Some("identity") => None,
                    Some(_) => cfg.f64_list("projection")?,
                };
                Ok(KernelConfig::ScaledProjectedSe {
                    beta: b,
                    projection,
                    scale: cfg.get("scale").map(str::to_string),
                })
            }
            "varying_coefficient" => {
                let tau = cfg
                    .f64_list("tau")?
                    .ok_or_else(|| Error::usage("varying_coefficient needs 'tau'"))?;
                let covariates = cfg.str_list("covariates").unwrap_or_default();
                if tau.len() != covariates.len() + 1 || beta.len() != tau.len() {
                    return Err(Error::usage(format!(
                        "varying_coefficient with {} covariates needs {} tau and beta values",
                        covariates.len(),
                        covariates.len() + 1
                    )));
                }
                Ok(KernelConfig::VaryingCoefficient {
                    tau,
                    beta,
                    covariates,
                })
            }
            other => Err(Error::usage(format!(
                "unknown kernel '{other}' (ard_se, scaled_projected_se, varying_coefficient)"
            ))),
        }
    }

    /// Covariate columns the kernel reads, in the order the dataset must store them.
    pub fn covariates(&self) -> Vec<String> {
        match self {
            KernelConfig::ArdSe { .. } => Vec::new(),
            KernelConfig::ScaledProjectedSe { scale, .. } => scale.iter().cloned().collect(),
            KernelConfig::VaryingCoefficient { covariates, .. } => covariates.clone(),
        }
    }

    /// Kernel for points of dimension `dim` whose covariate columns are `covariate_names`.
    pub fn build(&self, dim: usize, covariate_names: &[String]) -> Result<KernelSpec> {
        let column = |name: &str| {
            covariate_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::usage(format!("covariate '{name}' not in dataset")))
        };
        match self {
            KernelConfig::ArdSe { beta } => {
                let rates = match beta.len() {
                    1 => vec![beta[0]; dim],
                    n if n == dim => beta.clone(),
                    n => {
                        return Err(Error::usage(format!(
                            "{n} beta values for {dim}-dimensional points"
                        )))
                    }
                };
                KernelSpec::ard_se(rates)
            }
            KernelConfig::ScaledProjectedSe {
                beta,
                projection,
                scale,
            } => {
                let q = match projection {
                    None => DMatrix::identity(dim, dim),
                    Some(v) if v.len() == dim * dim => DMatrix::from_row_slice(dim, dim, v),
                    Some(v) => {
                        return Err(Error::usage(format!(
                            "projection has {} entries, expected {}",
                            v.len(),
                            dim * dim
                        )))
                    }
                };
                let col = scale.as_deref().map(column).transpose()?;
                KernelSpec::scaled_projected_se(*beta, q, col)
            }
            KernelConfig::VaryingCoefficient {
                tau,
                beta,
                covariates,
            } => {
                let cols = covariates
                    .iter()
                    .map(|c| column(c))
                    .collect::<Result<Vec<_>>>()?;
                KernelSpec::varying_coefficient_sum(tau.clone(), beta.clone(), cols)
            }
        }
    }

    pub fn build_for(&self, ds: &Dataset) -> Result<KernelSpec> {
        self.build(ds.pts.dim(), &ds.covariate_names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let text = "# toy\nkernel = ard_se\nbeta = 0.1, 0.2 # two dims\n\n tol_sq=1e-4\nseed=3\n";
        let mut cfg = Config::parse(text).unwrap();
        assert_eq!(cfg.f64_list("beta").unwrap(), Some(vec![0.1, 0.2]));
        assert!((cfg.kappa_tol_rel().unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(cfg.u64("seed").unwrap(), Some(3));
        cfg.set_pair("seed=9").unwrap();
        assert_eq!(cfg.u64("seed").unwrap(), Some(9));
        assert_eq!(cfg.mode().unwrap(), ApproxMode::Dtc);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("colour = red").is_err());
        assert!(Config::parse("seed = 1\nseed = 2").is_err());
        assert!(Config::parse("just words").is_err());
        let cfg = Config::parse("seed = x\ntol = 0.1\ntol_sq = 0.01").unwrap();
        assert!(cfg.u64("seed").is_err());
        assert!(cfg.kappa_tol_rel().is_err());
        assert!(Config::parse("mode = fitc").unwrap().mode().is_err());
    }

    #[test]
    fn kernels_from_config() {
        let cfg = Config::parse("beta = 0.5").unwrap();
        let k = cfg.kernel_config().unwrap().build(3, &[]).unwrap();
        assert_eq!(k, KernelSpec::ard_se(vec![0.5; 3]).unwrap());

        let cfg = Config::parse(
            "kernel = scaled_projected_se\nbeta = 1e-4\nprojection = 1,0,0,0\nscale = w",
        )
        .unwrap();
        let kc = cfg.kernel_config().unwrap();
        assert_eq!(kc.covariates(), vec!["w"]);
        let k = kc.build(2, &["a".into(), "w".into()]).unwrap();
        let KernelSpec::ScaledProjectedSe(s) = &k else { panic!() };
        assert_eq!(s.scale_column(), Some(1));
        assert!(kc.build(2, &["a".into()]).is_err());

        let cfg = Config::parse(
            "kernel = varying_coefficient\ntau = 1, 0.5\nbeta = 0.2, 0.3\ncovariates = z1",
        )
        .unwrap();
        let k = cfg.kernel_config().unwrap().build(2, &["z1".into()]).unwrap();
        assert_eq!(k.hypers().len(), 4);
        let bad = Config::parse("kernel = varying_coefficient\ntau = 1\nbeta = 0.2, 0.3").unwrap();
        assert!(bad.kernel_config().is_err());
    }
}
