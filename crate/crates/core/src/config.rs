//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arw::{ArwConstants, ArwModel, ConformalCorrection, MetricPerturbation, SpatialMetricField, WarpKind};
use crate::curvature::{CurvatureFunction, CurvatureKind};
use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::hypersurface::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub curvature: CurvatureSection,
    pub grid: GridSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "minus_one")]
    pub a: f64,
    #[serde(default)]
    pub warp: WarpSection,
    #[serde(default)]
    pub sigma: SigmaSection,
    #[serde(default)]
    pub psi: PsiSection,
}

fn default_n() -> usize {
    2
}
fn default_omega() -> f64 {
    2.0
}
fn one() -> f64 {
    1.0
}
fn minus_one() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarpSection {
    /// `exact`, `perturbed` or `inverse_perturbed`
    pub kind: String,
    pub epsilon: f64,
}

impl Default for WarpSection {
    fn default() -> Self {
        WarpSection {
            kind: "exact".into(),
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaSection {
    /// `flat`, `cosine` or `constant`
    pub perturbation: String,
    pub amplitude: f64,
    /// row-major entries for `constant`
    pub entries: Vec<f64>,
}

impl Default for SigmaSection {
    fn default() -> Self {
        SigmaSection {
            perturbation: "flat".into(),
            amplitude: 0.0,
            entries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiSection {
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureSection {
    pub kind: String,
}

impl Default for CurvatureSection {
    fn default() -> Self {
        CurvatureSection { kind: "mean".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// must agree with `model.n` when given
    #[serde(default)]
    pub n: Option<usize>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub u0_mean: f64,
    /// relative amplitude of the `prod cos x^i` bump
    #[serde(default)]
    pub u0_perturbation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
}

/// Everything a run needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub grid: Grid,
    pub model: ArwModel,
    pub curvature: CurvatureFunction,
    pub u0: Vec<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn constants(&self) -> Result<ArwConstants> {
        let m = &self.model;
        ArwConstants::new(m.n, m.omega, m.m, m.a)
    }

    pub fn warp_kind(&self) -> Result<WarpKind> {
        let w = &self.model.warp;
        if !w.epsilon.is_finite() {
            return Err(Error::Config("model.warp.epsilon must be finite".into()));
        }
        match w.kind.as_str() {
            "exact" => Ok(WarpKind::ExactPowerLaw),
            "perturbed" => Ok(WarpKind::Perturbed { epsilon: w.epsilon }),
            "inverse_perturbed" => Ok(WarpKind::InversePerturbed { epsilon: w.epsilon }),
            other => Err(Error::Config(format!(
                "unknown model.warp.kind '{other}' (expected exact, perturbed or inverse_perturbed)"
            ))),
        }
    }

    pub fn perturbation(&self) -> Result<MetricPerturbation> {
        let s = &self.model.sigma;
        let n = self.model.n;
        match s.perturbation.as_str() {
            "flat" => Ok(MetricPerturbation::Flat),
            "cosine" => Ok(MetricPerturbation::CosineFirstAxis { amplitude: s.amplitude }),
            "constant" => {
                if s.entries.len() != n * n {
                    return Err(Error::Config(format!(
                        "model.sigma.entries needs {} values, got {}",
                        n * n,
                        s.entries.len()
                    )));
                }
                for i in 0..n {
                    for j in 0..i {
                        if s.entries[i * n + j] != s.entries[j * n + i] {
                            return Err(Error::Config("model.sigma.entries must be symmetric".into()));
                        }
                    }
                }
                Ok(MetricPerturbation::Constant {
                    entries: s.entries.clone(),
                })
            }
            other => Err(Error::Config(format!(
                "unknown model.sigma.perturbation '{other}' (expected flat, cosine or constant)"
            ))),
        }
    }

    pub fn model(&self) -> Result<ArwModel> {
        let constants = self.constants()?;
        if !self.model.psi.amplitude.is_finite() {
            return Err(Error::Config("model.psi.amplitude must be finite".into()));
        }
        Ok(ArwModel::new(
            constants,
            self.warp_kind()?,
            SpatialMetricField {
                perturbation: self.perturbation()?,
            },
            ConformalCorrection {
                amplitude: self.model.psi.amplitude,
            },
        ))
    }

    pub fn curvature(&self) -> Result<CurvatureFunction> {
        let kind = CurvatureKind::parse(&self.curvature.kind)
            .map_err(|_| Error::Config(format!("unknown curvature.kind '{}'", self.curvature.kind)))?;
        Ok(CurvatureFunction::new(kind, self.model.n))
    }

    pub fn grid(&self) -> Result<Grid> {
        if let Some(n) = self.grid.n {
            if n != self.model.n {
                return Err(Error::Config(format!(
                    "grid.n ({n}) differs from model.n ({})",
                    self.model.n
                )));
            }
        }
        Grid::new(self.model.n, self.grid.resolution)
    }

    /// `u0(x) = mean * (1 + perturbation * prod_i cos x^i)`.
    pub fn initial_field(&self, grid: &Grid) -> Result<Vec<f64>> {
        let init = &self.initial;
        if !(init.u0_mean < 0.0 && init.u0_mean.is_finite()) {
            return Err(Error::Config(format!(
                "initial.u0_mean must be negative, got {}",
                init.u0_mean
            )));
        }
        if !(init.u0_perturbation.abs() < 1.0) {
            return Err(Error::Config(format!(
                "initial.u0_perturbation must lie in (-1, 1), got {}",
                init.u0_perturbation
            )));
        }
        Ok((0..grid.len())
            .map(|k| {
                let bump: f64 = grid.multi_index(k).iter().map(|&i| (i as f64 * grid.dx).cos()).product();
                init.u0_mean * (1.0 + init.u0_perturbation * bump)
            })
            .collect())
    }

    /// Validates every section and builds the run inputs.
    pub fn setup(&self) -> Result<RunSetup> {
        let grid = self.grid()?;
        let model = self.model()?;
        let curvature = self.curvature()?;
        self.flow.validate(self.model.n)?;
        self.diagnostics.validate()?;
        let u0 = self.initial_field(&grid)?;
        self.flow.validate_initial(&u0)?;
        if u0.iter().any(|&u| u <= model.constants.a) {
            return Err(Error::Config(format!(
                "initial graph reaches below model.a = {}",
                model.constants.a
            )));
        }
        Ok(RunSetup {
            grid,
            model,
            curvature,
            u0,
        })
    }

    /// SHA-256 of the canonical JSON form, identifying the run inputs.
    pub fn model_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
