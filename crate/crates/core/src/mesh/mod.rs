//! Meshes read from Gmsh files.
//!
//! A [`Mesh`] keeps node coordinates, linear elements and the named physical
//! groups. Solvers look at three of them: `Omega` (the volume), `Gamma_u`
//! (prescribed field) and `Gamma_t` (prescribed flux or traction). Any other
//! group survives parsing untouched.

mod mesher;
mod msh;

use std::collections::BTreeMap;

use thiserror::Error;

pub use mesher::{mesh_from_geo, GeoRequest, GmshMesher, MesherError, GMSH_BIN_ENV};
pub use msh::{parse_msh, write_msh22};

/// Group holding the volume elements.
pub const OMEGA: &str = "Omega";
/// Boundary group with prescribed (Dirichlet) values.
pub const GAMMA_U: &str = "Gamma_u";
/// Boundary group with prescribed flux or traction (Neumann).
pub const GAMMA_T: &str = "Gamma_t";

pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("unsupported mesh format `{0}` (expected ASCII 2.2 or 4.1)")]
    UnsupportedVersion(String),
    #[error("missing section ${0}")]
    MissingSection(&'static str),
    #[error("physical group `{0}` not found")]
    MissingGroup(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("group `{group}` contains element {element} of kind {kind:?}")]
    WrongElementKind {
        group: String,
        element: usize,
        kind: ElementKind,
    },
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

/// Linear element kinds. `TriSurface` is a triangle on the boundary of a
/// tetrahedral mesh; `Tri3` is a volume triangle of a 2D mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementKind {
    Line2,
    Tri3,
    Quad4,
    Tet4,
    TriSurface,
}

impl ElementKind {
    pub fn node_count(self) -> usize {
        match self {
            ElementKind::Line2 => 2,
            ElementKind::Tri3 | ElementKind::TriSurface => 3,
            ElementKind::Quad4 | ElementKind::Tet4 => 4,
        }
    }

    /// Dimension of the reference element.
    pub fn topological_dim(self) -> usize {
        match self {
            ElementKind::Line2 => 1,
            ElementKind::Tri3 | ElementKind::Quad4 | ElementKind::TriSurface => 2,
            ElementKind::Tet4 => 3,
        }
    }

    /// Gmsh element type code.
    pub fn gmsh_code(self) -> u32 {
        match self {
            ElementKind::Line2 => 1,
            ElementKind::Tri3 | ElementKind::TriSurface => 2,
            ElementKind::Quad4 => 3,
            ElementKind::Tet4 => 4,
        }
    }

    pub fn is_volume(self, dim: usize) -> bool {
        self.topological_dim() == dim
    }

    pub fn is_boundary(self, dim: usize) -> bool {
        self.topological_dim() + 1 == dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    pub nodes: Vec<Point>,
    pub elements: Vec<Element>,
    /// Group name to sorted element indices.
    pub groups: BTreeMap<String, Vec<usize>>,
}

/// Materialized boundary facet: a segment in 2D, a triangle in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Facet {
    Segment([Point; 2]),
    Triangle([Point; 3]),
}

impl Facet {
    /// Length of a segment or area of a triangle.
    pub fn measure(&self) -> f64 {
        match self {
            Facet::Segment([a, b]) => norm(sub(*b, *a)),
            Facet::Triangle([a, b, c]) => 0.5 * norm(cross(sub(*b, *a), sub(*c, *a))),
        }
    }

    /// Euclidean distance from `p` to the closest point of the facet.
    pub fn distance(&self, p: Point) -> f64 {
        match self {
            Facet::Segment([a, b]) => norm(sub(p, closest_on_segment(p, *a, *b))),
            Facet::Triangle([a, b, c]) => norm(sub(p, closest_on_triangle(p, *a, *b, *c))),
        }
    }
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Coordinates of node `i` truncated to the mesh dimension.
    pub fn coord(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    /// Element indices of a group; empty when the group does not exist.
    pub fn group(&self, name: &str) -> &[usize] {
        self.groups.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sorted, deduplicated list of nodes touched by the elements of a group.
    pub fn group_nodes(&self, name: &str) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .group(name)
            .iter()
            .flat_map(|&e| self.elements[e].nodes.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Axis-aligned bounding box `(min, max)` over all nodes.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Checks index bounds, repeated nodes and the kind of elements in the
    /// three reserved groups.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(MeshError::Invalid(format!("dimension {} not supported", self.dim)));
        }
        let n = self.nodes.len();
        for (idx, el) in self.elements.iter().enumerate() {
            if el.nodes.len() != el.kind.node_count() {
                return Err(MeshError::Invalid(format!(
                    "element {idx} has {} nodes, {:?} needs {}",
                    el.nodes.len(),
                    el.kind,
                    el.kind.node_count()
                )));
            }
            if let Some(&bad) = el.nodes.iter().find(|&&i| i >= n) {
                return Err(MeshError::Invalid(format!(
                    "element {idx} references node {bad} but the mesh has {n} nodes"
                )));
            }
            for (a, &i) in el.nodes.iter().enumerate() {
                if el.nodes[a + 1..].contains(&i) {
                    return Err(MeshError::Invalid(format!(
                        "element {idx} repeats node {i}"
                    )));
                }
            }
        }
        for (name, members) in &self.groups {
            if let Some(&bad) = members.iter().find(|&&e| e >= self.elements.len()) {
                return Err(MeshError::Invalid(format!(
                    "group `{name}` references element {bad}"
                )));
            }
        }
        self.check_group_kinds(OMEGA, |k| k.is_volume(self.dim))?;
        for name in [GAMMA_U, GAMMA_T] {
            self.check_group_kinds(name, |k| k.is_boundary(self.dim))?;
        }
        Ok(())
    }

    fn check_group_kinds(
        &self,
        name: &str,
        allowed: impl Fn(ElementKind) -> bool,
    ) -> Result<(), MeshError> {
        for &e in self.group(name) {
            let kind = self.elements[e].kind;
            if !allowed(kind) {
                return Err(MeshError::WrongElementKind {
                    group: name.to_string(),
                    element: e,
                    kind,
                });
            }
        }
        Ok(())
    }

    /// Facet geometry of a boundary group, in element order.
    pub fn boundary_facets(&self, group: &str) -> Result<Vec<Facet>, MeshError> {
        self.group(group)
            .iter()
            .map(|&e| {
                let el = &self.elements[e];
                if !el.kind.is_boundary(self.dim) {
                    return Err(MeshError::WrongElementKind {
                        group: group.to_string(),
                        element: e,
                        kind: el.kind,
                    });
                }
                let p = |k: usize| self.nodes[el.nodes[k]];
                Ok(match el.kind {
                    ElementKind::Line2 => Facet::Segment([p(0), p(1)]),
                    _ => Facet::Triangle([p(0), p(1), p(2)]),
                })
            })
            .collect()
    }

    /// Returns a copy with every node shifted by `offset`.
    pub fn translated(&self, offset: Point) -> Mesh {
        let mut out = self.clone();
        for p in &mut out.nodes {
            for k in 0..3 {
                p[k] += offset[k];
            }
        }
        out
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

fn lerp(a: Point, d: Point, t: f64) -> Point {
    [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]
}

fn closest_on_segment(p: Point, a: Point, b: Point) -> Point {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return a;
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    lerp(a, ab, t)
}

// Region classification from Ericson, Real-Time Collision Detection, 5.1.5.
fn closest_on_triangle(p: Point, a: Point, b: Point, c: Point) -> Point {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return lerp(a, ab, d1 / (d1 - d3));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return lerp(a, ac, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return lerp(b, sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = va + vb + vc;
    if denom == 0.0 {
        // Degenerate triangle: fall back to its edges.
        return [closest_on_segment(p, a, b), closest_on_segment(p, b, c), closest_on_segment(p, a, c)]
            .into_iter()
            .min_by(|x, y| norm(sub(p, *x)).total_cmp(&norm(sub(p, *y))))
            .unwrap();
    }
    let v = vb / denom;
    let w = vc / denom;
    [
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ]
}
