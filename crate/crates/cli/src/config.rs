//! The JSON run configuration shared by all commands.
//!
//! ```json
//! {
//!   "domain": { "lo": [0, 0], "hi": [1, 1] },
//!   "metric": "euclidean",
//!   "prior": { "kind": "uniform" },
//!   "points_file": "demo8.csv",
//!   "delta_list": [0.23, 0.2, 0.15, 0.1, 0.05, 0.02],
//!   "M": 50000,
//!   "seed": 42
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::path::{Path, PathBuf};

use entroball::{
    make_truncated_gaussian_prior, make_uniform_prior, AscentOptions, BoxDomain,
    CuttingPlaneOptions, DualOptions, Metric, Prior,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    #[default]
    Uniform,
    TruncatedGaussian { mean: Vec<f64>, sigma: f64 },
}

/// Optional solver overrides; anything left out keeps the library default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Transport ascent: sup norm of the projected gradient.
    pub grad_tol: Option<f64>,
    pub ascent_max_iter: Option<usize>,
    /// Cutting planes: Chebyshev radius.
    pub radius_tol: Option<f64>,
    pub cut_tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Inner entropy dual.
    pub dual_tol: Option<f64>,
}

fn default_metric() -> String {
    "euclidean".into()
}

fn default_batch() -> usize {
    50_000
}

fn default_resolution() -> usize {
    256
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default)]
    pub prior: PriorConfig,
    pub points_file: PathBuf,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub delta_list: Option<Vec<f64>>,
    /// Monte-Carlo batch size.
    #[serde(rename = "M", alias = "batch_size", default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Write rasters; defaults to true exactly when the domain is 2-D.
    #[serde(default)]
    pub rasters: Option<bool>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Reads and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.points_file.is_relative() {
            cfg.points_file = base.join(&cfg.points_file);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.batch_size < 100 {
            return bad("M must be at least 100");
        }
        if self.resolution < 2 {
            return bad("resolution must be at least 2");
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return bad("delta must be positive");
            }
        }
        if let Some(list) = &self.delta_list {
            if list.is_empty() || list.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return bad("delta_list must hold positive values");
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                return bad("delta_list must be strictly decreasing");
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("grad_tol", t.grad_tol),
            ("radius_tol", t.radius_tol),
            ("cut_tol", t.cut_tol),
            ("dual_tol", t.dual_tol),
        ] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(CliError::Config(format!("tolerance {name} must be positive")));
            }
        }
        if t.max_iter == Some(0) || t.ascent_max_iter == Some(0) {
            return bad("iteration limits must be positive");
        }
        self.metric()?;
        Ok(())
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        Ok(BoxDomain::new(self.domain.lo.clone(), self.domain.hi.clone())?)
    }

    pub fn metric(&self) -> Result<Metric> {
        self.metric
            .parse()
            .map_err(|_| CliError::Config(format!("unknown metric {:?}", self.metric)))
    }

    pub fn prior(&self) -> Result<Box<dyn Prior>> {
        let domain = self.domain()?;
        Ok(match &self.prior {
            PriorConfig::Uniform => Box::new(make_uniform_prior(&domain)),
            PriorConfig::TruncatedGaussian { mean, sigma } => {
                Box::new(make_truncated_gaussian_prior(&domain, mean.clone(), *sigma)?)
            }
        })
    }

    pub fn ascent_options(&self) -> AscentOptions {
        let mut opts = AscentOptions {
            grad_tol: self.tolerances.grad_tol,
            ..AscentOptions::default()
        };
        if let Some(n) = self.tolerances.ascent_max_iter {
            opts.max_iter = n;
        }
        opts
    }

    pub fn cutting_plane_options(&self) -> CuttingPlaneOptions {
        let t = &self.tolerances;
        let mut opts = CuttingPlaneOptions {
            radius_tol: t.radius_tol,
            ascent: self.ascent_options(),
            ..Default::default()
        };
        if let Some(v) = t.cut_tol {
            opts.cut_tol = v;
        }
        if let Some(n) = t.max_iter {
            opts.max_iter = n;
        }
        if let Some(v) = t.dual_tol {
            opts.dual = DualOptions::with_tol(v);
        }
        opts
    }

    /// The single delta of a mincross run.
    pub fn single_delta(&self) -> Result<f64> {
        match (self.delta, self.delta_list.as_deref()) {
            (Some(d), _) => Ok(d),
            (None, Some([d])) => Ok(*d),
            _ => Err(CliError::Config("mincross needs a single \"delta\"".into())),
        }
    }

    /// The deltas of a sweep; a lone `delta` is a one-row sweep.
    pub fn sweep_deltas(&self) -> Result<Vec<f64>> {
        match (&self.delta_list, self.delta) {
            (Some(list), _) => Ok(list.clone()),
            (None, Some(d)) => Ok(vec![d]),
            _ => Err(CliError::Config("sweep needs \"delta_list\"".into())),
        }
    }

    pub fn rasters_enabled(&self) -> Result<bool> {
        let two_d = self.domain.lo.len() == 2;
        match self.rasters {
            Some(true) if !two_d => Err(CliError::Solver(entroball::Error::NotTwoDimensional {
                dim: self.domain.lo.len(),
            })),
            Some(r) => Ok(r),
            None => Ok(two_d),
        }
    }
}
