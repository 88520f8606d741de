//! Reference elements, quadrature rules and shape functions.
//!
//! Reference domains: line `[-1, 1]`, triangle `(0,0) (1,0) (0,1)`, quad
//! `[-1, 1]^2`, tetrahedron the unit simplex. Node order follows gmsh.

mod table;

use thiserror::Error;

use crate::mesh::{ElementKind, Point};

pub use table::{build_eval_table, EvalTable, Interpolated, MeshTables};

/// Determinants below this are treated as degenerate or inverted.
pub const DEGENERATE_DET: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("no quadrature rule of order {order} for {kind:?} (orders 1 to 3 exist)")]
    UnsupportedOrder { kind: ElementKind, order: usize },
    #[error("degenerate or inverted element{}: det J = {det:e}", element.map(|e| format!(" {e}")).unwrap_or_default())]
    DegenerateElement { element: Option<usize>, det: f64 },
    #[error("{0:?} is not a volume element")]
    NotVolume(ElementKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: ElementKind,
    /// Reference coordinates, padded with zeros to three components.
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        _ => unreachable!("only 1 to 3 point Gauss rules are tabulated"),
    }
}

/// Gauss-Legendre mapped to `[0, 1]`.
fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    x.into_iter().zip(w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Collapsed (Duffy) product rule on the unit triangle.
fn collapsed_triangle(ns: usize, nt: usize) -> (Vec<Point>, Vec<f64>) {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(t, wt) in &gauss_unit(nt) {
        for &(s, ws) in &gauss_unit(ns) {
            points.push([s * (1.0 - t), t, 0.0]);
            weights.push(ws * wt * (1.0 - t));
        }
    }
    (points, weights)
}

/// Collapsed (Duffy) product rule on the unit tetrahedron.
fn collapsed_tetrahedron(ns: usize, nt: usize, nr: usize) -> (Vec<Point>, Vec<f64>) {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(r, wr) in &gauss_unit(nr) {
        for &(t, wt) in &gauss_unit(nt) {
            for &(s, ws) in &gauss_unit(ns) {
                points.push([s * (1.0 - t) * (1.0 - r), t * (1.0 - r), r]);
                weights.push(ws * wt * wr * (1.0 - t) * (1.0 - r) * (1.0 - r));
            }
        }
    }
    (points, weights)
}

/// Quadrature rule exact for polynomials of total degree up to `order`.
pub fn rule_for(kind: ElementKind, order: usize) -> Result<QuadratureRule, QuadratureError> {
    if !(1..=3).contains(&order) {
        return Err(QuadratureError::UnsupportedOrder { kind, order });
    }
    let (points, weights) = match kind {
        ElementKind::Line2 => {
            let (x, w) = gauss_legendre(if order == 1 { 1 } else { 2 });
            (x.into_iter().map(|x| [x, 0.0, 0.0]).collect(), w)
        }
        ElementKind::Quad4 => {
            let (x, w) = gauss_legendre(if order == 1 { 1 } else { 2 });
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (j, &y) in x.iter().enumerate() {
                for (i, &xi) in x.iter().enumerate() {
                    points.push([xi, y, 0.0]);
                    weights.push(w[i] * w[j]);
                }
            }
            (points, weights)
        }
        ElementKind::Tri3 | ElementKind::TriSurface => match order {
            1 => (vec![[1.0 / 3.0, 1.0 / 3.0, 0.0]], vec![0.5]),
            2 => (
                vec![
                    [1.0 / 6.0, 1.0 / 6.0, 0.0],
                    [2.0 / 3.0, 1.0 / 6.0, 0.0],
                    [1.0 / 6.0, 2.0 / 3.0, 0.0],
                ],
                vec![1.0 / 6.0; 3],
            ),
            _ => collapsed_triangle(2, 3),
        },
        ElementKind::Tet4 => match order {
            1 => (vec![[0.25, 0.25, 0.25]], vec![1.0 / 6.0]),
            2 => {
                let a = (5.0 - 5f64.sqrt()) / 20.0;
                let b = 1.0 - 3.0 * a;
                (
                    vec![[a, a, a], [b, a, a], [a, b, a], [a, a, b]],
                    vec![1.0 / 24.0; 4],
                )
            }
            _ => collapsed_tetrahedron(2, 3, 3),
        },
    };
    Ok(QuadratureRule { kind, points, weights })
}

/// Measure of the reference element.
pub fn reference_measure(kind: ElementKind) -> f64 {
    match kind {
        ElementKind::Line2 => 2.0,
        ElementKind::Tri3 | ElementKind::TriSurface => 0.5,
        ElementKind::Quad4 => 4.0,
        ElementKind::Tet4 => 1.0 / 6.0,
    }
}

const QUAD_SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Shape function values at a reference point, one per element node.
pub fn shape_eval(kind: ElementKind, r: Point) -> Vec<f64> {
    let [x, y, z] = r;
    match kind {
        ElementKind::Line2 => vec![0.5 * (1.0 - x), 0.5 * (1.0 + x)],
        ElementKind::Tri3 | ElementKind::TriSurface => vec![1.0 - x - y, x, y],
        ElementKind::Quad4 => QUAD_SIGNS
            .iter()
            .map(|&(sx, sy)| 0.25 * (1.0 + sx * x) * (1.0 + sy * y))
            .collect(),
        ElementKind::Tet4 => vec![1.0 - x - y - z, x, y, z],
    }
}

/// Derivatives of the shape functions with respect to reference coordinates.
pub fn shape_ref_gradients(kind: ElementKind, r: Point) -> Vec<Point> {
    let [x, y, _] = r;
    match kind {
        ElementKind::Line2 => vec![[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]],
        ElementKind::Tri3 | ElementKind::TriSurface => {
            vec![[-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        }
        ElementKind::Quad4 => QUAD_SIGNS
            .iter()
            .map(|&(sx, sy)| [0.25 * sx * (1.0 + sy * y), 0.25 * sy * (1.0 + sx * x), 0.0])
            .collect(),
        ElementKind::Tet4 => vec![
            [-1.0, -1.0, -1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ],
    }
}

/// Shape gradients with respect to global coordinates and the Jacobian
/// determinant of the reference map at `r`. Only volume elements are
/// accepted; a determinant below [`DEGENERATE_DET`] (including any inverted
/// element) is an error.
pub fn physical_gradients(
    coords: &[Point],
    kind: ElementKind,
    r: Point,
) -> Result<(Vec<Point>, f64), QuadratureError> {
    let d = match kind {
        ElementKind::Tri3 | ElementKind::Quad4 => 2,
        ElementKind::Tet4 => 3,
        other => return Err(QuadratureError::NotVolume(other)),
    };
    let dref = shape_ref_gradients(kind, r);
    // jac[a][b] = d x_a / d xi_b
    let mut jac = [[0.0; 3]; 3];
    for (x, g) in coords.iter().zip(&dref) {
        for a in 0..d {
            for b in 0..d {
                jac[a][b] += x[a] * g[b];
            }
        }
    }
    let (det, inv) = if d == 2 {
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det, 0.0],
            [-jac[1][0] / det, jac[0][0] / det, 0.0],
            [0.0; 3],
        ];
        (det, inv)
    } else {
        let m = &jac;
        let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
        let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
        let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
        let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
        let inv = [
            [c00 / det, (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det, (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det],
            [c01 / det, (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det, (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det],
            [c02 / det, (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det, (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det],
        ];
        (det, inv)
    };
    if !(det >= DEGENERATE_DET) {
        return Err(QuadratureError::DegenerateElement { element: None, det });
    }
    // grad N = J^{-T} dN/dxi, i.e. grad_a = sum_b inv[b][a] * dref_b
    let grads = dref
        .iter()
        .map(|g| {
            let mut out = [0.0; 3];
            for (a, o) in out.iter_mut().enumerate().take(d) {
                *o = (0..d).map(|b| inv[b][a] * g[b]).sum();
            }
            out
        })
        .collect();
    Ok((grads, det))
}

/// Ratio of physical to reference measure for a boundary facet
/// (half the length of a segment, twice the area of a triangle).
pub fn facet_scale(coords: &[Point], kind: ElementKind) -> Result<f64, QuadratureError> {
    use crate::mesh::{cross, norm, sub};
    let scale = match kind {
        ElementKind::Line2 => 0.5 * norm(sub(coords[1], coords[0])),
        ElementKind::TriSurface | ElementKind::Tri3 => {
            norm(cross(sub(coords[1], coords[0]), sub(coords[2], coords[0])))
        }
        other => return Err(QuadratureError::NotVolume(other)),
    };
    if !(scale >= DEGENERATE_DET) {
        return Err(QuadratureError::DegenerateElement { element: None, det: scale });
    }
    Ok(scale)
}
