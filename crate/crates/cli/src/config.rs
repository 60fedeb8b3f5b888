//! Declarative experiment configuration.
//!
//! A single JSON file drives every subcommand; unrecognized keys are
//! rejected so that typos surface as schema errors with line positions.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use pathforms::contour::{spanning_paths, Observable, PathSpec, QuadratureConfig};
use pathforms::density::{Density, DensitySpec};
use pathforms::langevin::CLConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PathsSpec {
    Keyword(String),
    Explicit(Vec<PathSpec>),
}

impl Default for PathsSpec {
    fn default() -> Self {
        PathsSpec::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    /// window size; derived from the density when absent
    pub n_max: Option<usize>,
    /// explicit ladder for the dimension check
    pub n_max_list: Option<Vec<usize>>,
    pub tol_rank: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        SdeSection { n_max: None, n_max_list: None, tol_rank: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub normalize: bool,
    pub bootstrap: usize,
    pub bootstrap_seed: u64,
    /// additionally fit the real-weight overcomplete combination against the
    /// normalized real-line functional
    pub overcomplete_rho: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { normalize: true, bootstrap: 200, bootstrap_seed: 20260808, overcomplete_rho: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub enum CurveSpec {
    /// axis-aligned rectangle `[x0, y0, x1, y1]`, counterclockwise
    #[serde(rename = "rect")]
    Rect([f64; 4]),
    /// closed polygon
    #[serde(rename = "polygon")]
    Polygon(Vec<[f64; 2]>),
    /// horizontal cylinder line at constant `y`
    #[serde(rename = "line_y")]
    LineY(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FluxSection {
    pub curves: Vec<CurveSpec>,
    /// additionally test this many random rectangles (line mode) or lines
    /// (cylinder mode) inside the populated region
    pub random: usize,
    pub random_seed: u64,
}

impl Default for FluxSection {
    fn default() -> Self {
        FluxSection { curves: Vec::new(), random: 0, random_seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), formats: vec!["json".into(), "csv".into()] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub density: DensitySpec,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub paths: PathsSpec,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub cl: CLConfig,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub flux: FluxSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not a valid experiment", path.display()))?;
        Ok(cfg)
    }

    pub fn density(&self) -> Result<Density> {
        Ok(self.density.build()?)
    }

    /// Default observable set: the Table-1 list in line mode, the first
    /// Fourier modes on the cylinder.
    pub fn observables(&self, d: &Density) -> Vec<Observable> {
        if !self.observables.is_empty() {
            return self.observables.clone();
        }
        match d.mode() {
            pathforms::Mode::Line => vec![
                Observable::Monomial(1),
                Observable::Monomial(2),
                Observable::Monomial(3),
                Observable::Monomial(4),
                Observable::Exponential(-1),
                Observable::Exponential(1),
                Observable::Exponential(-2),
                Observable::Exponential(2),
            ],
            pathforms::Mode::Cylinder => vec![
                Observable::Exponential(-2),
                Observable::Exponential(-1),
                Observable::Exponential(1),
                Observable::Exponential(2),
            ],
        }
    }

    pub fn resolve_paths(&self, d: &Density) -> Result<Vec<PathSpec>> {
        match &self.paths {
            PathsSpec::Keyword(k) if k == "auto" => {
                let census = d.census()?;
                Ok(spanning_paths(d, &census)?)
            }
            PathsSpec::Keyword(other) => Err(anyhow!("unknown paths keyword '{other}'")),
            PathsSpec::Explicit(list) => Ok(list.clone()),
        }
    }

    pub fn output_dir(&self, cli_override: Option<&str>) -> PathBuf {
        if let Some(dir) = cli_override {
            return PathBuf::from(dir);
        }
        if let Ok(dir) = std::env::var("PATHFORMS_OUTPUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from(&self.output.dir)
    }

    /// The experiment with every default made explicit, as embedded in
    /// output headers; reparsing it reproduces the same experiment.
    pub fn resolved(&self) -> ExperimentConfig {
        self.clone()
    }
}

/// Convert a curve spec to the analysis type.
pub fn curve_of(spec: &CurveSpec) -> pathforms::analysis::FluxCurve {
    match spec {
        CurveSpec::Rect([x0, y0, x1, y1]) => pathforms::analysis::FluxCurve::Closed(vec![
            Complex64::new(*x0, *y0),
            Complex64::new(*x1, *y0),
            Complex64::new(*x1, *y1),
            Complex64::new(*x0, *y1),
        ]),
        CurveSpec::Polygon(pts) => pathforms::analysis::FluxCurve::Closed(
            pts.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        ),
        CurveSpec::LineY(y) => pathforms::analysis::FluxCurve::CylinderLine { y: *y },
    }
}

