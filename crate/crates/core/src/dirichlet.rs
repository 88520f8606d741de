//! Dirichlet enforcement: distance functions to the constrained boundary,
//! the particular-solution fit, the composed trial field and the boundary
//! penalty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::mesh::{Facet, Point};
use crate::nn::{Adam, MlpConfig, MlpParams, NnError};
use crate::quadrature::EvalTable;

pub const DEFAULT_TAU: f64 = 0.001;
pub const DEFAULT_BETA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum DirichletError {
    #[error("the Dirichlet boundary has no facets")]
    EmptyBoundary,
    #[error("expected {expected} prescribed components, got {found}")]
    ComponentMismatch { expected: usize, found: usize },
    #[error("{name} must be positive, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("no Dirichlet samples to fit")]
    NoSamples,
    #[error("prescribed value: {0}")]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Enforcement {
    /// Square root of the smooth distance times the free network, plus a
    /// boundary penalty for the residual boundary value.
    #[serde(rename = "smooth")]
    SmoothDistancePenalty,
    /// Exact distance times the free network, no penalty.
    #[default]
    #[serde(rename = "hard")]
    HardDistance,
    /// No distance factor and no particular network; penalty only.
    #[serde(rename = "penalty")]
    PenaltyOnly,
}

impl Enforcement {
    pub fn uses_penalty(self) -> bool {
        !matches!(self, Enforcement::HardDistance)
    }

    pub fn uses_particular(self) -> bool {
        !matches!(self, Enforcement::PenaltyOnly)
    }
}

/// Prescribed value per component: constants or expressions in `x y z`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialValue {
    Constant(Vec<f64>),
    Expr(Vec<Expr>),
}

impl SpatialValue {
    pub fn zero(components: usize) -> Self {
        SpatialValue::Constant(vec![0.0; components])
    }

    pub fn components(&self) -> usize {
        match self {
            SpatialValue::Constant(v) => v.len(),
            SpatialValue::Expr(v) => v.len(),
        }
    }

    pub fn at(&self, p: Point, out: &mut [f64]) -> Result<(), ExprError> {
        match self {
            SpatialValue::Constant(v) => out.copy_from_slice(v),
            SpatialValue::Expr(exprs) => {
                for (o, e) in out.iter_mut().zip(exprs) {
                    *o = e.eval_at(p)?;
                }
            }
        }
        Ok(())
    }

    /// Values at many points, `points x components`.
    pub fn sample(&self, points: &[Point]) -> Result<Vec<f64>, ExprError> {
        let c = self.components();
        let mut out = vec![0.0; points.len() * c];
        for (p, row) in points.iter().zip(out.chunks_mut(c)) {
            self.at(*p, row)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpec {
    pub facets: Vec<Facet>,
    pub value: SpatialValue,
    pub enforcement: Enforcement,
    pub tau: f64,
    pub beta: f64,
}

impl DirichletSpec {
    pub fn new(facets: Vec<Facet>, value: SpatialValue) -> Self {
        Self {
            facets,
            value,
            enforcement: Enforcement::default(),
            tau: DEFAULT_TAU,
            beta: DEFAULT_BETA,
        }
    }

    pub fn validate(&self, components: usize) -> Result<(), DirichletError> {
        if self.facets.is_empty() {
            return Err(DirichletError::EmptyBoundary);
        }
        if self.value.components() != components {
            return Err(DirichletError::ComponentMismatch {
                expected: components,
                found: self.value.components(),
            });
        }
        for (name, value) in [("tau", self.tau), ("beta", self.beta)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(DirichletError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Distance factor at each point for the chosen enforcement. The smooth
    /// variant uses `sqrt(D_s)`, which tends to the exact distance as `tau`
    /// goes to zero.
    pub fn distance_field(&self, points: &[Point]) -> Result<Vec<f64>, DirichletError> {
        match self.enforcement {
            Enforcement::PenaltyOnly => Ok(vec![1.0; points.len()]),
            Enforcement::HardDistance => points.iter().map(|p| hard_distance(*p, &self.facets)).collect(),
            Enforcement::SmoothDistancePenalty => {
                points.iter().map(|p| smooth_distance(*p, &self.facets, self.tau).map(f64::sqrt)).collect()
            }
        }
    }
}

/// Euclidean distance to the nearest facet.
pub fn hard_distance(p: Point, facets: &[Facet]) -> Result<f64, DirichletError> {
    facets
        .iter()
        .map(|f| f.distance(p))
        .reduce(f64::min)
        .ok_or(DirichletError::EmptyBoundary)
}

/// `-tau * ln((1/M) sum_i exp(-d_i^2 / tau))` over the `M` facets,
/// evaluated with the exponent shifted by the smallest `d_i^2`.
pub fn smooth_distance(p: Point, facets: &[Facet], tau: f64) -> Result<f64, DirichletError> {
    if facets.is_empty() {
        return Err(DirichletError::EmptyBoundary);
    }
    let sq: Vec<f64> = facets.iter().map(|f| f.distance(p).powi(2)).collect();
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = sq.iter().map(|s| (-(s - min) / tau).exp()).sum();
    let m = facets.len() as f64;
    Ok(min + tau * (m.ln() - sum.ln()))
}

#[derive(Debug, Clone)]
pub struct ParticularFit {
    pub params: MlpParams,
    pub mse: f64,
    pub steps: usize,
}

fn mse_and_cotangent(out: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = targets.len() as f64;
    let mut mse = 0.0;
    let ct = out
        .iter()
        .zip(targets)
        .map(|(y, t)| {
            let r = y - t;
            mse += r * r;
            2.0 * r / n
        })
        .collect();
    (mse / n, ct)
}

/// Fits a network to prescribed values at sample points by mean squared
/// error. The output layer starts at zero weights and a bias equal to the
/// target mean, so constant data is matched before the first step.
/// Stops early once the error drops below `1e-14`.
pub fn fit_particular(
    inputs: &[f64],
    targets: &[f64],
    cfg: &MlpConfig,
    steps: usize,
    lr: f64,
) -> Result<ParticularFit, DirichletError> {
    let c = cfg.output_dim;
    if targets.is_empty() || targets.len() % c != 0 {
        return Err(DirichletError::NoSamples);
    }
    let n = targets.len() / c;
    let mut params = MlpParams::init(cfg)?;
    params.output_weights_mut().fill(0.0);
    for (k, b) in params.output_bias_mut().iter_mut().enumerate() {
        *b = (0..n).map(|s| targets[s * c + k]).sum::<f64>() / n as f64;
    }
    let mut opt = Adam::new(params.len(), lr);
    let mut taken = 0;
    loop {
        let out = params.forward(inputs)?;
        let (mse, ct) = mse_and_cotangent(&out, targets);
        if taken == steps || mse < 1e-14 {
            return Ok(ParticularFit {
                params,
                mse,
                steps: taken,
            });
        }
        let g = params.vjp(inputs, &ct)?;
        opt.step(params.values_mut(), &g)?;
        taken += 1;
    }
}

/// `u = u_p + D * u_g` per node and component.
pub fn compose_admissible(particular: &[f64], free: &[f64], distance: &[f64], components: usize) -> Vec<f64> {
    particular
        .iter()
        .zip(free)
        .enumerate()
        .map(|(k, (p, g))| p + distance[k / components] * g)
        .collect()
}

/// `beta * int |u - ubar|^2 dGamma / int dGamma` over the points of a
/// boundary table, with its derivative with respect to the point values.
pub fn penalty_loss(table: &EvalTable, values: &[f64], prescribed: &[f64], components: usize, beta: f64) -> (f64, Vec<f64>) {
    let measure = table.measure();
    let mut grad = vec![0.0; values.len()];
    if measure <= 0.0 {
        return (0.0, grad);
    }
    let mut sum = 0.0;
    for p in 0..table.len() {
        let w = table.weight(p);
        for c in 0..components {
            let k = p * components + c;
            let r = values[k] - prescribed[k];
            sum += w * r * r;
            grad[k] = 2.0 * beta * w * r / measure;
        }
    }
    (beta * sum / measure, grad)
}
