//! Energy densities of the built-in models and their closed-form
//! derivatives.
//!
//! A field state at a point is its value `u` (one entry per component) and
//! its gradient `H[i][j] = du_i/dx_j`, stored in a `3 x 3` array with
//! unused entries zero. Derivatives with respect to `H` use the same layout,
//! so for the solid models they are the stress (`sigma` for linear
//! elasticity, the first Piola-Kirchhoff `P` for the hyperelastic ones).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Bindings, Expr, ExprError};

pub const DEFAULT_YOUNG: f64 = 1000.0;
pub const DEFAULT_POISSON: f64 = 0.3;

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaterialError {
    #[error("element inverted: det F = {0}")]
    InvertedElement(f64),
    #[error("energy density: {0}")]
    Expr(#[from] ExprError),
    #[error("model `{model}` is not available in {dim}D")]
    UnsupportedDimension { model: &'static str, dim: usize },
    #[error("invalid material parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneAssumption {
    #[default]
    Strain,
    Stress,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeoHookean {
    /// `lambda/2 (ln J)^2 - mu ln J + mu/2 (I1 - dim)`.
    Lame { young: f64, poisson: f64 },
    /// `a0 (I1~ - 3) + a1 (J - 1)^2`, 3D only.
    Isochoric { a0: f64, a1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaterialModel {
    Poisson,
    ScreenedPoisson { k: f64 },
    LinearElastic { young: f64, poisson: f64, plane: PlaneAssumption },
    NeoHookean(NeoHookean),
    /// `a0 (I1~ - 3) + a1 (I2~ - 3) + a2 (I1~ - 3)^2 + a3 (J - 1)^2`
    Isihara { a: [f64; 4] },
    /// `a0 (I1~ - 3) + a1 ln(I2~ / 3) + a2 (J - 1)^2`
    GentThomas { a: [f64; 3] },
    /// User energy density over the displacement-gradient symbols.
    Custom { source: String, expr: Expr },
}

pub const ISIHARA_DEFAULT: [f64; 4] = [0.5, 1.0, 1.0, 1.5];
pub const GENT_THOMAS_DEFAULT: [f64; 3] = [0.5, 1.0, 1.5];
pub const NEO_HOOKEAN_DEFAULT: (f64, f64) = (0.5, 1.5);

/// Lamé parameters from Young's modulus and Poisson's ratio.
pub fn lame(young: f64, poisson: f64) -> (f64, f64) {
    let lambda = poisson * young / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    (lambda, mu)
}

fn check_elastic(young: f64, poisson: f64) -> Result<(), MaterialError> {
    if !(young > 0.0) || !young.is_finite() {
        return Err(MaterialError::InvalidParameter(format!("Young's modulus must be positive, got {young}")));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(MaterialError::InvalidParameter(format!(
            "Poisson's ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    Ok(())
}

/// Energy density and its derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub psi: f64,
    /// `dPsi/dH`, same layout as `H`.
    pub d_grad: Mat3,
    /// `dPsi/du`.
    pub d_value: [f64; 3],
}

impl MaterialModel {
    pub fn custom(source: &str) -> Result<Self, MaterialError> {
        Ok(MaterialModel::Custom {
            source: source.to_string(),
            expr: crate::expr::parse(source)?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::Poisson => "poisson",
            MaterialModel::ScreenedPoisson { .. } => "screened_poisson",
            MaterialModel::LinearElastic { .. } => "linear_elastic",
            MaterialModel::NeoHookean(_) => "neo_hookean",
            MaterialModel::Isihara { .. } => "isihara",
            MaterialModel::GentThomas { .. } => "gent_thomas",
            MaterialModel::Custom { .. } => "custom",
        }
    }

    /// Number of field components in `dim` dimensions.
    pub fn components(&self, dim: usize) -> usize {
        match self {
            MaterialModel::Poisson | MaterialModel::ScreenedPoisson { .. } => 1,
            _ => dim,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, MaterialModel::Poisson | MaterialModel::ScreenedPoisson { .. })
    }

    /// True for the models the linear finite element solver handles.
    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            MaterialModel::Poisson | MaterialModel::ScreenedPoisson { .. } | MaterialModel::LinearElastic { .. }
        )
    }

    /// Checks parameters and dimension support.
    pub fn validate(&self, dim: usize) -> Result<(), MaterialError> {
        match self {
            MaterialModel::Poisson => Ok(()),
            MaterialModel::ScreenedPoisson { k } if !k.is_finite() => {
                Err(MaterialError::InvalidParameter(format!("k must be finite, got {k}")))
            }
            MaterialModel::ScreenedPoisson { .. } => Ok(()),
            MaterialModel::LinearElastic { young, poisson, .. }
            | MaterialModel::NeoHookean(NeoHookean::Lame { young, poisson }) => check_elastic(*young, *poisson),
            MaterialModel::NeoHookean(NeoHookean::Isochoric { .. }) | MaterialModel::Isihara { .. } | MaterialModel::GentThomas { .. }
                if dim != 3 =>
            {
                Err(MaterialError::UnsupportedDimension {
                    model: self.name(),
                    dim,
                })
            }
            MaterialModel::NeoHookean(_) | MaterialModel::Isihara { .. } | MaterialModel::GentThomas { .. } => Ok(()),
            MaterialModel::Custom { expr, .. } => {
                expr.validate(dim)?;
                Ok(())
            }
        }
    }

    /// Effective Lamé parameters of the linear elastic model in `dim`
    /// dimensions (plane stress uses the reduced `lambda`).
    pub fn elastic_lame(&self, dim: usize) -> Option<(f64, f64)> {
        match self {
            MaterialModel::LinearElastic { young, poisson, plane } => {
                let (lambda, mu) = lame(*young, *poisson);
                if dim == 2 && *plane == PlaneAssumption::Stress {
                    Some((2.0 * lambda * mu / (lambda + 2.0 * mu), mu))
                } else {
                    Some((lambda, mu))
                }
            }
            _ => None,
        }
    }

    /// Value and derivatives of the energy density at one state.
    pub fn density(&self, dim: usize, u: &[f64], h: &Mat3) -> Result<Density, MaterialError> {
        let mut out = Density {
            psi: 0.0,
            d_grad: [[0.0; 3]; 3],
            d_value: [0.0; 3],
        };
        match self {
            MaterialModel::Poisson | MaterialModel::ScreenedPoisson { .. } => {
                let g = h[0];
                out.psi = 0.5 * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                out.d_grad[0] = g;
                if let MaterialModel::ScreenedPoisson { k } = self {
                    out.psi += 0.5 * k * k * u[0] * u[0];
                    out.d_value[0] = k * k * u[0];
                }
            }
            MaterialModel::LinearElastic { .. } => {
                let (lambda, mu) = self.elastic_lame(dim).unwrap();
                let sigma = linear_stress(lambda, mu, dim, h);
                let mut psi = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        psi += 0.5 * sigma[i][j] * 0.5 * (h[i][j] + h[j][i]);
                    }
                }
                out.psi = psi;
                out.d_grad = sigma;
            }
            MaterialModel::NeoHookean(NeoHookean::Lame { young, poisson }) => {
                let (lambda, mu) = lame(*young, *poisson);
                let k = Kinematics::new(dim, h)?;
                let ln_j = k.j.ln();
                out.psi = 0.5 * lambda * ln_j * ln_j - mu * ln_j + 0.5 * mu * (k.i1 - dim as f64);
                // P = mu F + (lambda ln J - mu) F^-T
                out.d_grad = k.combine(&[(mu, &k.f), (lambda * ln_j - mu, &k.f_inv_t)]);
            }
            MaterialModel::NeoHookean(NeoHookean::Isochoric { a0, a1 }) => {
                let k = Kinematics::new(3, h)?;
                out.psi = a0 * (k.i1_bar() - 3.0) + a1 * (k.j - 1.0).powi(2);
                let dj = k.dj();
                out.d_grad = k.combine(&[(*a0, &k.di1_bar()), (2.0 * a1 * (k.j - 1.0), &dj)]);
            }
            MaterialModel::Isihara { a } => {
                let k = Kinematics::new(3, h)?;
                let (i1b, i2b) = (k.i1_bar(), k.i2_bar());
                out.psi = a[0] * (i1b - 3.0) + a[1] * (i2b - 3.0) + a[2] * (i1b - 3.0).powi(2) + a[3] * (k.j - 1.0).powi(2);
                out.d_grad = k.combine(&[
                    (a[0] + 2.0 * a[2] * (i1b - 3.0), &k.di1_bar()),
                    (a[1], &k.di2_bar()),
                    (2.0 * a[3] * (k.j - 1.0), &k.dj()),
                ]);
            }
            MaterialModel::GentThomas { a } => {
                let k = Kinematics::new(3, h)?;
                let i2b = k.i2_bar();
                out.psi = a[0] * (k.i1_bar() - 3.0) + a[1] * (i2b / 3.0).ln() + a[2] * (k.j - 1.0).powi(2);
                out.d_grad = k.combine(&[
                    (a[0], &k.di1_bar()),
                    (a[1] / i2b, &k.di2_bar()),
                    (2.0 * a[2] * (k.j - 1.0), &k.dj()),
                ]);
            }
            MaterialModel::Custom { expr, .. } => {
                let (psi, d) = expr.partials(&Bindings::from_gradient(h))?;
                out.psi = psi;
                for i in 0..dim {
                    for j in 0..dim {
                        out.d_grad[i][j] = d[3 * i + j];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `sigma = lambda tr(eps) I + 2 mu eps` with `eps = sym(H)`.
pub fn linear_stress(lambda: f64, mu: f64, dim: usize, h: &Mat3) -> Mat3 {
    let tr: f64 = (0..dim).map(|i| h[i][i]).sum();
    let mut s = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            s[i][j] = mu * (h[i][j] + h[j][i]);
        }
        s[i][i] += lambda * tr;
    }
    s
}

/// Deformation measures of `F = I + H` in `dim` dimensions.
struct Kinematics {
    f: Mat3,
    f_inv_t: Mat3,
    j: f64,
    i1: f64,
    i2: f64,
    /// `F C`
    fc: Mat3,
}

impl Kinematics {
    fn new(dim: usize, h: &Mat3) -> Result<Self, MaterialError> {
        let mut f = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                f[i][j] = h[i][j];
            }
            f[i][i] += 1.0;
        }
        let (j, f_inv_t) = if dim == 2 {
            let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
            let mut it = [[0.0; 3]; 3];
            it[0][0] = f[1][1] / det;
            it[0][1] = -f[1][0] / det;
            it[1][0] = -f[0][1] / det;
            it[1][1] = f[0][0] / det;
            (det, it)
        } else {
            let cof = cofactor(&f);
            let det = f[0][0] * cof[0][0] + f[0][1] * cof[0][1] + f[0][2] * cof[0][2];
            let mut it = cof;
            for row in &mut it {
                for v in row.iter_mut() {
                    *v /= det;
                }
            }
            (det, it)
        };
        if !(j > 0.0) {
            return Err(MaterialError::InvertedElement(j));
        }
        let mut c = [[0.0; 3]; 3];
        for a in 0..dim {
            for b in 0..dim {
                c[a][b] = (0..dim).map(|k| f[k][a] * f[k][b]).sum();
            }
        }
        let i1: f64 = (0..dim).map(|a| c[a][a]).sum();
        let cc: f64 = (0..dim).flat_map(|a| (0..dim).map(move |b| (a, b))).map(|(a, b)| c[a][b] * c[a][b]).sum();
        let i2 = 0.5 * (i1 * i1 - cc);
        let mut fc = [[0.0; 3]; 3];
        for i in 0..dim {
            for b in 0..dim {
                fc[i][b] = (0..dim).map(|k| f[i][k] * c[k][b]).sum();
            }
        }
        Ok(Self { f, f_inv_t, j, i1, i2, fc })
    }

    fn i1_bar(&self) -> f64 {
        self.j.powf(-2.0 / 3.0) * self.i1
    }

    fn i2_bar(&self) -> f64 {
        self.j.powf(-4.0 / 3.0) * self.i2
    }

    /// `dJ/dF = J F^-T`
    fn dj(&self) -> Mat3 {
        self.combine(&[(self.j, &self.f_inv_t)])
    }

    /// `J^(-2/3) (2F - 2/3 I1 F^-T)`
    fn di1_bar(&self) -> Mat3 {
        let s = self.j.powf(-2.0 / 3.0);
        self.combine(&[(2.0 * s, &self.f), (-2.0 / 3.0 * s * self.i1, &self.f_inv_t)])
    }

    /// `J^(-4/3) (2 (I1 F - F C) - 4/3 I2 F^-T)`
    fn di2_bar(&self) -> Mat3 {
        let s = self.j.powf(-4.0 / 3.0);
        self.combine(&[
            (2.0 * s * self.i1, &self.f),
            (-2.0 * s, &self.fc),
            (-4.0 / 3.0 * s * self.i2, &self.f_inv_t),
        ])
    }

    fn combine(&self, terms: &[(f64, &Mat3)]) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (w, m) in terms {
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] += w * m[i][j];
                }
            }
        }
        out
    }
}

fn cofactor(f: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            c[i][j] = f[i1][j1] * f[i2][j2] - f[i1][j2] * f[i2][j1];
        }
    }
    c
}

/// Von Mises equivalent of the symmetric part of a `3 x 3` tensor.
pub fn von_mises(s: &Mat3) -> f64 {
    let sym = |i: usize, j: usize| 0.5 * (s[i][j] + s[j][i]);
    let (a, b, c) = (sym(0, 0), sym(1, 1), sym(2, 2));
    let shear = sym(0, 1).powi(2) + sym(1, 2).powi(2) + sym(0, 2).powi(2);
    (0.5 * ((a - b).powi(2) + (b - c).powi(2) + (c - a).powi(2)) + 3.0 * shear).sqrt()
}
