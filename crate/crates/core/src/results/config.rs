//! Run configuration: geometry, material, boundary, network and training
//! sections, read from and written to TOML.
//!
//! ```toml
//! [geometry]
//! msh = "square.msh"
//!
//! [material]
//! model = "poisson"
//!
//! [boundary]
//! neumann = [5.0]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunError;
use crate::dirichlet::{Enforcement, SpatialValue, DEFAULT_BETA, DEFAULT_TAU};
use crate::expr::{self, Expr};
use crate::material::{
    MaterialModel, NeoHookean, PlaneAssumption, DEFAULT_POISSON, DEFAULT_YOUNG, GENT_THOMAS_DEFAULT, ISIHARA_DEFAULT,
    NEO_HOOKEAN_DEFAULT,
};
use crate::mesh::{mesh_from_geo, parse_msh, GeoRequest, GmshMesher, Mesh, GAMMA_U};
use crate::problem::{DemProblem, EarlyStop, NetworkConfig, TrainingConfig, DEFAULT_ORDER};

/// A config that failed to parse or validate. `path` is the dotted key
/// path (`training.lr`, `boundary.neumann[1]`), `.` for the root.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {reason}")]
pub struct SchemaError {
    pub path: String,
    pub reason: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, reason: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Path to a `.msh` file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msh: Option<PathBuf>,
    /// Inline `.geo` script, meshed with gmsh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<String>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Characteristic length for `.geo` sources.
    #[serde(default = "default_lc")]
    pub lc: f64,
    #[serde(default = "default_order")]
    pub domain_order: usize,
    #[serde(default = "default_order")]
    pub boundary_order: usize,
}

fn default_dim() -> usize {
    2
}

fn default_lc() -> f64 {
    0.1
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialConfig {
    Poisson {},
    ScreenedPoisson {
        #[serde(default = "one")]
        k: f64,
    },
    LinearElastic {
        #[serde(default = "default_young")]
        young: f64,
        #[serde(default = "default_poisson")]
        poisson: f64,
        #[serde(default)]
        plane: PlaneAssumption,
    },
    /// Compressible form in Lamé parameters.
    NeoHookean {
        #[serde(default = "default_young")]
        young: f64,
        #[serde(default = "default_poisson")]
        poisson: f64,
    },
    /// Isochoric/volumetric split, 3D only.
    NeoHookeanIsochoric {
        #[serde(default = "nh_a0")]
        a0: f64,
        #[serde(default = "nh_a1")]
        a1: f64,
    },
    Isihara {
        #[serde(default = "isihara")]
        a: [f64; 4],
    },
    GentThomas {
        #[serde(default = "gent_thomas")]
        a: [f64; 3],
    },
    /// Energy density over `ux` .. `wz`.
    Custom { energy: String },
}

fn one() -> f64 {
    1.0
}
fn default_young() -> f64 {
    DEFAULT_YOUNG
}
fn default_poisson() -> f64 {
    DEFAULT_POISSON
}
fn nh_a0() -> f64 {
    NEO_HOOKEAN_DEFAULT.0
}
fn nh_a1() -> f64 {
    NEO_HOOKEAN_DEFAULT.1
}
fn isihara() -> [f64; 4] {
    ISIHARA_DEFAULT
}
fn gent_thomas() -> [f64; 3] {
    GENT_THOMAS_DEFAULT
}

impl MaterialConfig {
    pub fn to_model(&self) -> Result<MaterialModel, SchemaError> {
        Ok(match self {
            MaterialConfig::Poisson {} => MaterialModel::Poisson,
            MaterialConfig::ScreenedPoisson { k } => MaterialModel::ScreenedPoisson { k: *k },
            MaterialConfig::LinearElastic { young, poisson, plane } => MaterialModel::LinearElastic {
                young: *young,
                poisson: *poisson,
                plane: *plane,
            },
            MaterialConfig::NeoHookean { young, poisson } => MaterialModel::NeoHookean(NeoHookean::Lame {
                young: *young,
                poisson: *poisson,
            }),
            MaterialConfig::NeoHookeanIsochoric { a0, a1 } => {
                MaterialModel::NeoHookean(NeoHookean::Isochoric { a0: *a0, a1: *a1 })
            }
            MaterialConfig::Isihara { a } => MaterialModel::Isihara { a: *a },
            MaterialConfig::GentThomas { a } => MaterialModel::GentThomas { a: *a },
            MaterialConfig::Custom { energy } => {
                MaterialModel::custom(energy).map_err(|e| SchemaError::new("material.energy", e))?
            }
        })
    }
}

/// A boundary or load component: a number or an expression over `x`, `y`,
/// `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Number(f64),
    Expr(String),
}

impl From<f64> for ValueSpec {
    fn from(v: f64) -> Self {
        ValueSpec::Number(v)
    }
}

impl From<&str> for ValueSpec {
    fn from(v: &str) -> Self {
        ValueSpec::Expr(v.to_string())
    }
}

/// Turns a component list into a [`SpatialValue`]; `path` prefixes errors.
pub fn spatial_value(values: &[ValueSpec], path: &str) -> Result<SpatialValue, SchemaError> {
    if let Some(numbers) = values
        .iter()
        .map(|v| match v {
            ValueSpec::Number(n) => Some(*n),
            ValueSpec::Expr(_) => None,
        })
        .collect::<Option<Vec<f64>>>()
    {
        return Ok(SpatialValue::Constant(numbers));
    }
    let exprs = values
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            ValueSpec::Number(n) => expr::parse_spatial(&format!("{n:?}")),
            ValueSpec::Expr(s) => expr::parse_spatial(s),
        }
        .map_err(|e| SchemaError::new(format!("{path}[{i}]"), e)))
        .collect::<Result<Vec<Expr>, _>>()?;
    Ok(SpatialValue::Expr(exprs))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default)]
    pub dirichlet: DirichletConfig,
    /// Traction or flux on `Gamma_t`, one entry per field component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neumann: Option<Vec<ValueSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_force: Option<Vec<ValueSpec>>,
}

/// Dirichlet data on `Gamma_u`; ignored when the mesh has no such group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletConfig {
    /// Prescribed value per component; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<ValueSpec>>,
    #[serde(default)]
    pub method: Enforcement,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

impl Default for DirichletConfig {
    fn default() -> Self {
        Self {
            value: None,
            method: Enforcement::default(),
            tau: DEFAULT_TAU,
            beta: DEFAULT_BETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Dem,
    Fem,
    Both,
}

impl SolverChoice {
    pub fn runs_dem(self) -> bool {
        matches!(self, SolverChoice::Dem | SolverChoice::Both)
    }

    pub fn runs_fem(self) -> bool {
        matches!(self, SolverChoice::Fem | SolverChoice::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn yes() -> bool {
    true
}
fn default_window() -> usize {
    EarlyStop::default().window
}
fn default_threshold() -> f64 {
    EarlyStop::default().threshold
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        let d = EarlyStop::default();
        Self {
            enabled: true,
            window: d.window,
            threshold: d.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub early_stop: EarlyStopConfig,
    #[serde(default = "default_particular_steps")]
    pub particular_steps: usize,
    #[serde(default)]
    pub solver: SolverChoice,
}

fn default_max_epochs() -> usize {
    TrainingConfig::default().max_epochs
}
fn default_lr() -> f64 {
    TrainingConfig::default().lr
}
fn default_particular_steps() -> usize {
    TrainingConfig::default().particular_steps
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            max_epochs: d.max_epochs,
            lr: d.lr,
            early_stop: EarlyStopConfig::default(),
            particular_steps: d.particular_steps,
            solver: SolverChoice::default(),
        }
    }
}

impl TrainingSection {
    pub fn to_training(&self) -> TrainingConfig {
        TrainingConfig {
            max_epochs: self.max_epochs,
            lr: self.lr,
            early_stop: self.early_stop.enabled.then_some(EarlyStop {
                window: self.early_stop.window,
                threshold: self.early_stop.threshold,
            }),
            particular_steps: self.particular_steps,
        }
    }
}

/// Rewrites serde's "missing field `x`" so the path names the field.
fn schema_from_toml(err: serde_path_to_error::Error<toml::de::Error>) -> SchemaError {
    let path = err.path().to_string();
    let message = err.inner().message().to_string();
    if let Some(field) = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
    {
        let path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        return SchemaError::new(path, message);
    }
    SchemaError::new(path, message)
}

fn positive(path: &str, v: f64) -> Result<(), SchemaError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SchemaError::new(path, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Minimal config: a mesh file and a material, everything else default.
    pub fn new(msh: impl Into<PathBuf>, material: MaterialConfig) -> Self {
        Self {
            geometry: GeometryConfig {
                msh: Some(msh.into()),
                geo: None,
                dim: default_dim(),
                lc: default_lc(),
                domain_order: DEFAULT_ORDER,
                boundary_order: DEFAULT_ORDER,
            },
            material,
            boundary: BoundaryConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingSection::default(),
        }
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let de = toml::Deserializer::parse(text).map_err(|e| SchemaError::new(".", e.message()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(schema_from_toml)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same as [`Self::from_toml_str`] for a JSON document.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self, SchemaError> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            SchemaError::new(path, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_toml_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let g = &self.geometry;
        match (&g.msh, &g.geo) {
            (Some(_), Some(_)) => return Err(SchemaError::new("geometry", "give exactly one of `msh` and `geo`, not both")),
            (None, None) => return Err(SchemaError::new("geometry", "one of `msh` or `geo` is required")),
            _ => {}
        }
        if !matches!(g.dim, 2 | 3) {
            return Err(SchemaError::new("geometry.dim", format!("must be 2 or 3, got {}", g.dim)));
        }
        positive("geometry.lc", g.lc)?;
        for (path, order) in [("geometry.domain_order", g.domain_order), ("geometry.boundary_order", g.boundary_order)] {
            if !(1..=5).contains(&order) {
                return Err(SchemaError::new(path, format!("must be between 1 and 5, got {order}")));
            }
        }

        let model = self.material.to_model()?;
        model.validate(g.dim).map_err(|e| SchemaError::new("material", e))?;
        let components = model.components(g.dim);

        let d = &self.boundary.dirichlet;
        positive("boundary.dirichlet.tau", d.tau)?;
        positive("boundary.dirichlet.beta", d.beta)?;
        let lists = [
            ("boundary.dirichlet.value", &d.value),
            ("boundary.neumann", &self.boundary.neumann),
            ("boundary.body_force", &self.boundary.body_force),
        ];
        for (path, values) in lists {
            if let Some(values) = values {
                if values.len() != components {
                    return Err(SchemaError::new(
                        path,
                        format!("expected {components} components for model `{}`, got {}", model.name(), values.len()),
                    ));
                }
                spatial_value(values, path)?;
            }
        }

        if self.network.widths.is_empty() || self.network.widths.contains(&0) {
            return Err(SchemaError::new("network.widths", "needs at least one layer, all widths positive"));
        }
        let t = &self.training;
        positive("training.lr", t.lr)?;
        if t.early_stop.window < 2 {
            return Err(SchemaError::new("training.early_stop.window", "must be at least 2"));
        }
        if !(t.early_stop.threshold >= 0.0) {
            return Err(SchemaError::new("training.early_stop.threshold", "must be non-negative"));
        }
        Ok(())
    }

    /// Reads or meshes the geometry. Relative `msh` paths resolve against
    /// `base_dir`.
    pub fn load_mesh(&self, base_dir: &Path, mesher: &GmshMesher) -> Result<Mesh, RunError> {
        let g = &self.geometry;
        let mesh = match (&g.msh, &g.geo) {
            (Some(msh), _) => {
                let path = if msh.is_absolute() { msh.clone() } else { base_dir.join(msh) };
                let bytes = std::fs::read(&path).map_err(|source| RunError::Io { path, source })?;
                parse_msh(&bytes)?
            }
            (None, Some(geo)) => mesh_from_geo(
                &GeoRequest {
                    geo_text: geo.clone(),
                    characteristic_length: g.lc,
                    dim: g.dim,
                },
                mesher,
            )?,
            (None, None) => return Err(SchemaError::new("geometry", "one of `msh` or `geo` is required").into()),
        };
        if mesh.dim != g.dim {
            return Err(SchemaError::new(
                "geometry.dim",
                format!("config says {} but the mesh is {}D", g.dim, mesh.dim),
            )
            .into());
        }
        Ok(mesh)
    }

    /// Problem for an already loaded mesh.
    pub fn problem_for(&self, mesh: Mesh) -> Result<DemProblem, RunError> {
        self.validate()?;
        let g = &self.geometry;
        let mut problem = DemProblem::with_orders(mesh, self.material.to_model()?, g.domain_order, g.boundary_order)?;
        let b = &self.boundary;
        if let Some(d) = problem.dirichlet.as_mut() {
            if let Some(v) = &b.dirichlet.value {
                d.value = spatial_value(v, "boundary.dirichlet.value")?;
            }
            d.enforcement = b.dirichlet.method;
            d.tau = b.dirichlet.tau;
            d.beta = b.dirichlet.beta;
        } else if b.dirichlet.value.is_some() && problem.mesh.group(GAMMA_U).is_empty() {
            log::warn!("mesh has no `{GAMMA_U}` group; Dirichlet values ignored");
        }
        if let Some(v) = &b.neumann {
            problem.traction = Some(spatial_value(v, "boundary.neumann")?);
        }
        if let Some(v) = &b.body_force {
            problem.body_force = Some(spatial_value(v, "boundary.body_force")?);
        }
        problem.network = self.network.clone();
        problem.training = self.training.to_training();
        problem.validate()?;
        Ok(problem)
    }

    pub fn build_problem(&self, base_dir: &Path, mesher: &GmshMesher) -> Result<DemProblem, RunError> {
        let mesh = self.load_mesh(base_dir, mesher)?;
        self.problem_for(mesh)
    }
}
