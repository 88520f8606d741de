//! Problem description shared by the DEM and FEM solvers, solver results,
//! and flux/stress post-processing.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dirichlet::{DirichletError, DirichletSpec, SpatialValue};
use crate::expr::ExprError;
use crate::material::{von_mises, MaterialError, MaterialModel, Mat3, PlaneAssumption};
use crate::mesh::{Mesh, MeshError, Point, GAMMA_U};
use crate::nn::{Activation, MlpConfig, MlpParams, NnError};
use crate::quadrature::{build_eval_table, EvalTable, MeshTables, QuadratureError};

pub const DEFAULT_ORDER: usize = 2;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Material(MaterialError),
    #[error("element {element} inverted (det F = {det})")]
    InvertedElement { element: usize, det: f64 },
    #[error(transparent)]
    Dirichlet(#[from] DirichletError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("model `{0}` is not supported by the finite element solver")]
    UnsupportedModel(&'static str),
    #[error("dof {dof} constrained twice with different values ({first} and {second})")]
    DuplicateConstraint { dof: usize, first: f64, second: f64 },
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

impl From<MaterialError> for SolveError {
    fn from(e: MaterialError) -> Self {
        match e {
            MaterialError::Expr(e) => SolveError::Expr(e),
            other => SolveError::Material(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub window: usize,
    pub threshold: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 200,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    pub lr: f64,
    pub early_stop: Option<EarlyStop>,
    /// Adam steps for the particular-solution fit.
    pub particular_steps: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: 3000,
            lr: 1e-3,
            early_stop: Some(EarlyStop::default()),
            particular_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

fn default_widths() -> Vec<usize> {
    vec![30, 30, 30]
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            widths: default_widths(),
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn mlp(&self, input_dim: usize, output_dim: usize, seed_offset: u64) -> MlpConfig {
        MlpConfig {
            input_dim,
            output_dim,
            hidden: self.widths.clone(),
            activation: self.activation,
            seed: self.seed.wrapping_add(seed_offset),
        }
    }
}

/// Everything needed to solve one boundary value problem.
#[derive(Debug, Clone)]
pub struct DemProblem {
    pub mesh: Mesh,
    pub tables: MeshTables,
    pub material: MaterialModel,
    /// Over `Gamma_u`; `None` leaves the field unconstrained.
    pub dirichlet: Option<DirichletSpec>,
    /// Traction (or flux) over `Gamma_t`; zero when absent.
    pub traction: Option<SpatialValue>,
    /// Body force (or source) over `Omega`; zero when absent.
    pub body_force: Option<SpatialValue>,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
}

impl DemProblem {
    /// Default quadrature orders, zero Dirichlet data on `Gamma_u` (when the
    /// group exists) with the default enforcement, no loads.
    pub fn new(mesh: Mesh, material: MaterialModel) -> Result<Self, SolveError> {
        Self::with_orders(mesh, material, DEFAULT_ORDER, DEFAULT_ORDER)
    }

    pub fn with_orders(
        mesh: Mesh,
        material: MaterialModel,
        domain_order: usize,
        boundary_order: usize,
    ) -> Result<Self, SolveError> {
        let tables = build_eval_table(&mesh, domain_order, boundary_order)?;
        let components = material.components(mesh.dim);
        let facets = mesh.boundary_facets(GAMMA_U)?;
        let dirichlet = (!facets.is_empty()).then(|| DirichletSpec::new(facets, SpatialValue::zero(components)));
        Ok(Self {
            mesh,
            tables,
            material,
            dirichlet,
            traction: None,
            body_force: None,
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn components(&self) -> usize {
        self.material.components(self.mesh.dim)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let c = self.components();
        self.material.validate(self.dim())?;
        if let Some(d) = &self.dirichlet {
            d.validate(c)?;
        }
        for (name, v) in [("traction", &self.traction), ("body force", &self.body_force)] {
            if let Some(v) = v {
                if v.components() != c {
                    return Err(SolveError::InvalidProblem(format!(
                        "{name} has {} components, the field has {c}",
                        v.components()
                    )));
                }
            }
        }
        if self.tables.domain.is_empty() {
            return Err(SolveError::InvalidProblem("the domain has no elements".into()));
        }
        if !(self.training.lr > 0.0) {
            return Err(SolveError::InvalidProblem(format!("learning rate must be positive, got {}", self.training.lr)));
        }
        if let Some(es) = &self.training.early_stop {
            if es.window < 2 || !(es.threshold >= 0.0) {
                return Err(SolveError::InvalidProblem(format!(
                    "early stopping needs window >= 2 and threshold >= 0, got {} and {}",
                    es.window, es.threshold
                )));
            }
        }
        if self.network.widths.is_empty() || self.network.widths.contains(&0) {
            return Err(SolveError::InvalidProblem(format!("bad network widths {:?}", self.network.widths)));
        }
        Ok(())
    }
}

/// Affine map from the mesh bounding box onto `[-1, 1]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub dim: usize,
    pub center: Point,
    pub half_extent: Point,
}

impl InputMap {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let mut center = [0.0; 3];
        let mut half = [1.0; 3];
        for k in 0..mesh.dim {
            center[k] = 0.5 * (lo[k] + hi[k]);
            let h = 0.5 * (hi[k] - lo[k]);
            half[k] = if h > 0.0 { h } else { 1.0 };
        }
        Self {
            dim: mesh.dim,
            center,
            half_extent: half,
        }
    }

    /// Mapped coordinates of every point, `points x dim`.
    pub fn apply(&self, points: &[Point]) -> Vec<f64> {
        let mut out = Vec::with_capacity(points.len() * self.dim);
        for p in points {
            for k in 0..self.dim {
                out.push((p[k] - self.center[k]) / self.half_extent[k]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    UserAbort,
    /// Direct (finite element) solve.
    Solved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Dem,
    Fem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// `q = -grad u`, `dim` components.
    Flux,
    /// Stress tensor, `dim x dim` components row-major.
    Stress,
}

/// Flux or stress averaged to the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFields {
    pub kind: FieldKind,
    pub components: usize,
    /// `nodes x components`
    pub nodal: Vec<f64>,
    /// `|q|` for fluxes, von Mises for stresses.
    pub magnitude: Vec<f64>,
}

/// Trained network parameters of a DEM run.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub particular: Option<MlpParams>,
    pub free: MlpParams,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solver: SolverKind,
    pub components: usize,
    /// `nodes x components`
    pub solution: Vec<f64>,
    /// Loss per epoch (empty for direct solves).
    pub history: Vec<f64>,
    pub stop_reason: StopReason,
    pub fields: DerivedFields,
    pub wall_time: Duration,
    /// Energy loss of the returned solution.
    pub final_loss: f64,
    pub normalization: Option<InputMap>,
    pub networks: Option<Networks>,
    pub particular_mse: Option<f64>,
}

impl SolveResult {
    /// Euclidean norm of the field at every node.
    pub fn magnitude(&self) -> Vec<f64> {
        nodal_magnitude(&self.solution, self.components)
    }
}

pub fn nodal_magnitude(values: &[f64], components: usize) -> Vec<f64> {
    values
        .chunks(components)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// `||a - b|| / ||b||` over plain vectors.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Relative L2 error of an interpolated nodal field against an exact
/// solution, by quadrature over the table.
pub fn relative_l2_error(table: &EvalTable, nodal: &[f64], components: usize, exact: impl Fn(Point, &mut [f64])) -> f64 {
    let f = table.interpolate(nodal, components);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut e = vec![0.0; components];
    for p in 0..table.len() {
        exact(table.point(p), &mut e);
        let w = table.weight(p);
        for c in 0..components {
            num += w * (f.values[p * components + c] - e[c]).powi(2);
            den += w * e[c] * e[c];
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Gradient tensor `H` at point `p` of an interpolated field.
pub(crate) fn gradient_at(grads: &[f64], p: usize, components: usize, dim: usize) -> Mat3 {
    let mut h = [[0.0; 3]; 3];
    for c in 0..components {
        let base = (p * components + c) * dim;
        h[c][..dim].copy_from_slice(&grads[base..base + dim]);
    }
    h
}

/// Flux `-grad u` for the scalar models, stress `dPsi/dH` otherwise, at the
/// domain quadrature points, averaged to the nodes with the point weights.
pub fn post_fields(
    material: &MaterialModel,
    table: &EvalTable,
    nodal: &[f64],
    components: usize,
) -> Result<DerivedFields, SolveError> {
    let dim = table.dim();
    let f = table.interpolate(nodal, components);
    let (kind, ncomp) = if material.is_scalar() {
        (FieldKind::Flux, dim)
    } else {
        (FieldKind::Stress, dim * dim)
    };
    let n = table.node_count();
    let mut acc = vec![0.0; n * ncomp];
    let mut mag = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    let mut local = vec![0.0; ncomp];
    for p in 0..table.len() {
        let h = gradient_at(&f.grads, p, components, dim);
        let magnitude = if material.is_scalar() {
            for a in 0..dim {
                local[a] = -h[0][a];
            }
            local.iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            let u = &f.values[p * components..(p + 1) * components];
            let d = material.density(dim, u, &h).map_err(|e| match e {
                MaterialError::InvertedElement(det) => SolveError::InvertedElement {
                    element: table.element(p),
                    det,
                },
                other => other.into(),
            })?;
            let mut s = d.d_grad;
            for i in 0..dim {
                for j in 0..dim {
                    local[i * dim + j] = s[i][j];
                }
            }
            // out-of-plane stress of plane strain linear elasticity
            if let MaterialModel::LinearElastic {
                plane: PlaneAssumption::Strain,
                ..
            } = material
            {
                if dim == 2 {
                    let (lambda, _) = material.elastic_lame(2).unwrap();
                    s[2][2] = lambda * (h[0][0] + h[1][1]);
                }
            }
            von_mises(&s)
        };
        let w = table.weight(p);
        for &node in table.nodes(p) {
            wsum[node] += w;
            mag[node] += w * magnitude;
            for k in 0..ncomp {
                acc[node * ncomp + k] += w * local[k];
            }
        }
    }
    for node in 0..n {
        if wsum[node] > 0.0 {
            mag[node] /= wsum[node];
            for k in 0..ncomp {
                acc[node * ncomp + k] /= wsum[node];
            }
        }
    }
    Ok(DerivedFields {
        kind,
        components: ncomp,
        nodal: acc,
        magnitude: mag,
    })
}
