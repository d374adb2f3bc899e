//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use polyvar_core::cov_models::{model_kernel, CovKernel, ProcessModel, Tail};
use polyvar_core::estimators::{Branch, FdMode, RangePolicy};
use polyvar_core::hermite_basis::{poly_to_hermite, HermitePoly, PolyKind};
use polyvar_core::rate_bounds::Normalization;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default)]
    pub hurst: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// `lag,value` table for `kind = "tabulated"`.
    #[serde(default)]
    pub kernel_file: Option<PathBuf>,
    /// Power-tail decay exponent declared for an imported table.
    #[serde(default)]
    pub tail_exponent: Option<f64>,
    #[serde(default)]
    pub tail_constant: Option<f64>,
}

impl ModelSpec {
    pub fn process_model(&self) -> Result<ProcessModel<f64>> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| HarnessError::Config(format!("model.{name} is required for {}", self.kind)));
        let m = match self.kind.to_ascii_lowercase().as_str() {
            "fgn" => ProcessModel::Fgn { hurst: need(self.hurst, "hurst")?, sigma2: self.sigma2.unwrap_or(1.0) },
            "fou" => ProcessModel::Fou { theta: need(self.theta, "theta")?, hurst: need(self.hurst, "hurst")? },
            "oufou" => ProcessModel::Oufou {
                theta: need(self.theta, "theta")?,
                rho: need(self.rho, "rho")?,
                hurst: need(self.hurst, "hurst")?,
            },
            "fou2" => ProcessModel::Fou2 { alpha: need(self.alpha, "alpha")?, hurst: need(self.hurst, "hurst")? },
            "tabulated" => ProcessModel::Tabulated,
            other => return Err(HarnessError::Config(format!("unknown model kind '{other}'"))),
        };
        m.validate()?;
        Ok(m)
    }

    /// Stationary kernel of the observed sequence.
    pub fn kernel(&self, base_dir: &Path) -> Result<CovKernel<f64>> {
        let model = self.process_model()?;
        if model != ProcessModel::Tabulated {
            return Ok(model_kernel(&model)?);
        }
        let file = self.kernel_file.as_ref().ok_or_else(|| HarnessError::Config("model.kernel_file is required for tabulated".into()))?;
        let tail = match (self.tail_exponent, self.tail_constant) {
            (Some(exponent), Some(constant)) => Some(Tail::Power { constant, exponent }),
            (None, None) => None,
            _ => return Err(HarnessError::Config("tail_exponent and tail_constant go together".into())),
        };
        let f = std::fs::File::open(base_dir.join(file))?;
        Ok(polyvar_core::io::read_kernel_csv(f, tail)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySpec {
    pub kind: PolyKind,
    #[serde(default)]
    pub q: Option<usize>,
    /// Monomial coefficients `a_0, a_1, ...` for `kind = "general"`.
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
}

impl PolySpec {
    pub fn degree(&self) -> Result<usize> {
        Ok(self.base()?.degree())
    }

    /// `f` in the Hermite basis with unit reference variance.
    pub fn base(&self) -> Result<HermitePoly<f64>> {
        let p = match self.kind {
            PolyKind::Hermite => HermitePoly::hermite(self.q.ok_or_else(|| HarnessError::Config("poly.q is required".into()))?, 1.0)?,
            PolyKind::Power => HermitePoly::power(self.q.ok_or_else(|| HarnessError::Config("poly.q is required".into()))?, 1.0)?,
            PolyKind::General => {
                let c = self.coeffs.as_ref().ok_or_else(|| HarnessError::Config("poly.coeffs is required for general".into()))?;
                poly_to_hermite(c, 1.0)?
            }
        };
        Ok(p)
    }

    /// `f` re-expressed with reference variance `r0`.
    pub fn at_variance(&self, r0: f64) -> Result<HermitePoly<f64>> {
        Ok(poly_to_hermite(&self.base()?.to_monomial(), r0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StatMode {
    #[default]
    Stationary,
    Nonstationary,
    Trimmed,
    FiniteDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Wasserstein1,
    Kolmogorov,
}

fn default_distances() -> Vec<Distance> {
    vec![Distance::Wasserstein1, Distance::Kolmogorov]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticSpec {
    #[serde(default)]
    pub mode: StatMode,
    #[serde(default)]
    pub i0: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default = "default_distances")]
    pub distances: Vec<Distance>,
}

impl Default for StatisticSpec {
    fn default() -> Self {
        Self { mode: StatMode::Stationary, i0: None, p: None, normalization: Normalization::default(), distances: default_distances() }
    }
}

impl StatisticSpec {
    pub fn diff_order(&self) -> usize {
        if self.mode == StatMode::FiniteDiff {
            self.p.unwrap_or(1)
        } else {
            0
        }
    }

    pub fn trim(&self) -> usize {
        if self.mode == StatMode::Trimmed {
            self.i0.unwrap_or(0)
        } else {
            0
        }
    }
}

fn default_replications() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    #[serde(default)]
    pub enabled: bool,
    /// Path CSV read by the `estimate` command.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub range_policy: RangePolicy,
    /// Invert the finite-difference map instead of the level map.
    #[serde(default)]
    pub branch: Option<Branch>,
    #[serde(default)]
    pub fd_mode: Option<FdMode>,
}

fn default_paths() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub n: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("polyvar-out")
}

fn default_prefix() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir(), prefix: default_prefix() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    pub poly: PolySpec,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub statistic: StatisticSpec,
    #[serde(default)]
    pub estimation: EstimationSpec,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative paths are resolved against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Check the parts every command relies on.
    pub fn validate(&self) -> Result<()> {
        self.model.kernel(&self.base_dir)?;
        self.poly.base()?;
        if self.statistic.distances.is_empty() {
            return Err(HarnessError::Config("statistic.distances must name at least one distance".into()));
        }
        if self.statistic.mode == StatMode::FiniteDiff && self.statistic.p == Some(0) {
            return Err(HarnessError::Config("statistic.p must be at least 1".into()));
        }
        if let Some(g) = &self.grid {
            if g.n.is_empty() || g.n.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HarnessError::Config("grid.n must be non-empty and strictly increasing".into()));
            }
            if g.n[0] < 2 {
                return Err(HarnessError::Config("grid.n entries must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// Grid with the replication requirement of distance estimation.
    pub fn grid(&self) -> Result<&GridSpec> {
        let g = self.grid.as_ref().ok_or_else(|| HarnessError::Config("a [grid] section is required".into()))?;
        Ok(g)
    }

    pub fn normalization(&self) -> Normalization {
        self.statistic.normalization
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }

    pub fn with_out(mut self, out: Option<PathBuf>) -> Self {
        if let Some(d) = out {
            self.output.dir = d;
        }
        self
    }
}
