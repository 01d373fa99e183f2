//! JSON configuration schemas, one per subcommand. Unknown fields are
//! rejected so typos surface as exit code 2 rather than silent defaults.

use std::path::{Path, PathBuf};

use devfactor_core::cutoff::{geometric_grid, Kinematics, QuadratureSpec};
use devfactor_core::deviation::DeviationFactor;
use devfactor_core::fitter::{AsymptoticModel, ModelKind};
use devfactor_core::spectral::Momentum3;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Reads and validates a config file. Relative paths inside it are
/// resolved against the file's directory.
pub fn load<T: DeserializeOwned + Resolve>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        action: "read config",
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg: T = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

/// Rewrites relative paths against a base directory.
pub trait Resolve {
    fn resolve(&mut self, _base: &Path) {}
}

fn resolve_path(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicsConfig {
    #[serde(default)]
    pub q0: f64,
    #[serde(default)]
    pub q: [f64; 3],
    #[serde(default)]
    pub m: f64,
}

impl KinematicsConfig {
    pub fn to_kinematics(self) -> Result<Kinematics> {
        if !(self.q0.is_finite() && self.q.iter().all(|x| x.is_finite()) && self.m.is_finite()) {
            return Err(CliError::Config("kinematics must be finite".into()));
        }
        Ok(Kinematics::new(self.q0, Momentum3::from(self.q), self.m))
    }
}

/// Geometric grid `start * ratio^k`, `k = 0..count`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
}

impl GridConfig {
    pub fn cutoffs(&self) -> Result<Vec<f64>> {
        if !(self.start.is_finite() && self.start > 0.0 && self.ratio.is_finite() && self.ratio > 1.0) {
            return Err(CliError::Config(format!(
                "grid needs start > 0 and ratio > 1, got start {} ratio {}",
                self.start, self.ratio
            )));
        }
        if self.count == 0 {
            return Err(CliError::Config("grid count must be positive".into()));
        }
        Ok(geometric_grid(self.start, self.ratio, self.count))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandConfig {
    pub re: Option<String>,
    pub im: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    #[serde(default)]
    pub kinematics: KinematicsConfig,
    pub integrand: IntegrandConfig,
    pub grid: Option<GridConfig>,
    /// Explicit ascending cutoffs, as an alternative to `grid`.
    pub cutoffs: Option<Vec<f64>>,
    pub quadrature: Option<QuadratureSpec>,
}

impl Resolve for IntegrateConfig {}

impl IntegrateConfig {
    pub fn cutoffs(&self) -> Result<Vec<f64>> {
        match (&self.grid, &self.cutoffs) {
            (Some(g), None) => g.cutoffs(),
            (None, Some(c)) => {
                if c.is_empty() || c.iter().any(|l| !(l.is_finite() && *l > 0.0)) || c.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(CliError::Config(
                        "cutoffs must be positive and strictly ascending".into(),
                    ));
                }
                Ok(c.clone())
            }
            _ => Err(CliError::Config("give exactly one of `grid` or `cutoffs`".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QBoxConfig {
    pub min: f64,
    pub max: f64,
    /// Points per axis; the grid has `count^3` points.
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    pub m: f64,
    pub points: Option<Vec<[f64; 3]>>,
    pub grid: Option<QBoxConfig>,
}

impl Resolve for SpectraConfig {}

impl SpectraConfig {
    pub fn momenta(&self) -> Result<Vec<Momentum3>> {
        let mut out: Vec<Momentum3> = self.points.iter().flatten().map(|&p| Momentum3::from(p)).collect();
        if let Some(g) = self.grid {
            if g.count == 0 || !(g.min.is_finite() && g.max.is_finite()) || g.min > g.max {
                return Err(CliError::Config("q grid needs count > 0 and min <= max".into()));
            }
            let axis: Vec<f64> = (0..g.count)
                .map(|i| {
                    if g.count == 1 {
                        g.min
                    } else {
                        g.min + (g.max - g.min) * i as f64 / (g.count - 1) as f64
                    }
                })
                .collect();
            for &a in &axis {
                for &b in &axis {
                    for &c in &axis {
                        out.push(Momentum3::new(a, b, c));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(CliError::Config("spectra needs `points` or `grid`".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Samples CSV (`L,re,im[,err]`), or an integration to run first.
    pub samples: Option<PathBuf>,
    pub integrate: Option<IntegrateConfig>,
    /// `log`, `powerlog`, `polylog`, `polylogN` or `auto`.
    pub model: Option<String>,
    pub tail_fraction: Option<f64>,
    pub max_polylog_degree: Option<usize>,
}

impl Resolve for FitConfig {
    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.samples, base);
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizeConfig {
    pub samples: Option<PathBuf>,
    pub integrate: Option<IntegrateConfig>,
    /// A fit report written by `fit`.
    pub report: Option<PathBuf>,
    /// A model given inline instead of a report.
    pub fitted_model: Option<AsymptoticModel>,
    /// Model kind to fit when neither `report` nor `fitted_model` is given.
    pub model: Option<String>,
    pub epsilon: Option<f64>,
    /// Power of the coupling multiplying the fitted coefficient.
    pub order: Option<u32>,
    pub tail_fraction: Option<f64>,
}

impl Resolve for RegularizeConfig {
    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.samples, base);
        resolve_path(&mut self.report, base);
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassAFixture {
    pub name: String,
    pub factor: DeviationFactor,
    pub expected: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Random cases per suite.
    pub cases: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    /// Rotation angle used to tamper every scattering operator.
    pub fault: Option<f64>,
    pub class_a: Option<Vec<ClassAFixture>>,
}

impl Resolve for CheckConfig {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResumConfig {
    pub psi: Vec<f64>,
    pub phi: f64,
    pub epsilon: Option<f64>,
    pub order: Option<usize>,
    pub cutoffs: Option<Vec<f64>>,
}

impl Resolve for ResumConfig {}

/// `auto` or a fixed model kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Auto,
    Kind(ModelKind),
}

impl std::str::FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("auto") {
            Ok(ModelChoice::Auto)
        } else {
            s.parse().map(ModelChoice::Kind)
        }
    }
}

/// Parses `r,a1,a2,a3` into tensor-rule orders.
pub fn parse_quad_orders(s: &str) -> std::result::Result<[usize; 4], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[usize; 4]>::try_from(parts).map_err(|v| format!("expected 4 orders r,a1,a2,a3, got {}", v.len()))
}
