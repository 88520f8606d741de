use std::collections::BTreeMap;

use crate::mesh::{Mesh, Point, GAMMA_T, GAMMA_U, OMEGA};

use super::{facet_scale, physical_gradients, rule_for, shape_eval, QuadratureError};

/// Precomputed quadrature data over a set of elements.
///
/// Every point stores its global coordinates, its weight (reference weight
/// times the Jacobian), its owning element and, for each node of that
/// element, the shape value and (for volume tables) the physical gradient.
/// Nodal fields are turned into point values and gradients by
/// [`EvalTable::interpolate`]; [`EvalTable::scatter`] is its transpose.
#[derive(Debug, Clone)]
pub struct EvalTable {
    dim: usize,
    node_count: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
    elements: Vec<usize>,
    offsets: Vec<usize>,
    nodes: Vec<usize>,
    shape: Vec<f64>,
    grads: Vec<Point>,
    /// node -> points touching it, CSR layout
    incidence_offsets: Vec<usize>,
    incidence: Vec<usize>,
}

/// Field values and gradients at the points of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub components: usize,
    pub dim: usize,
    /// `points x components`
    pub values: Vec<f64>,
    /// `points x components x dim`; empty for boundary tables.
    pub grads: Vec<f64>,
}

impl EvalTable {
    fn empty(dim: usize, node_count: usize) -> Self {
        Self {
            dim,
            node_count,
            points: Vec::new(),
            weights: Vec::new(),
            elements: Vec::new(),
            offsets: vec![0],
            nodes: Vec::new(),
            shape: Vec::new(),
            grads: Vec::new(),
            incidence_offsets: Vec::new(),
            incidence: Vec::new(),
        }
    }

    /// Table over volume elements, with physical gradients.
    pub fn volume(mesh: &Mesh, elements: &[usize], order: usize) -> Result<Self, QuadratureError> {
        let mut table = Self::empty(mesh.dim, mesh.node_count());
        for &e in elements {
            let el = &mesh.elements[e];
            let coords: Vec<Point> = el.nodes.iter().map(|&n| mesh.nodes[n]).collect();
            let rule = rule_for(el.kind, order)?;
            for (r, w) in rule.points.iter().zip(&rule.weights) {
                let (grads, det) = physical_gradients(&coords, el.kind, *r).map_err(|err| match err {
                    QuadratureError::DegenerateElement { det, .. } => {
                        QuadratureError::DegenerateElement { element: Some(e), det }
                    }
                    other => other,
                })?;
                let n = shape_eval(el.kind, *r);
                table.push_point(e, &el.nodes, &coords, &n, Some(&grads), w * det);
            }
        }
        table.build_incidence();
        Ok(table)
    }

    /// Table over boundary facets (values only, no gradients).
    pub fn boundary(mesh: &Mesh, elements: &[usize], order: usize) -> Result<Self, QuadratureError> {
        let mut table = Self::empty(mesh.dim, mesh.node_count());
        for &e in elements {
            let el = &mesh.elements[e];
            let coords: Vec<Point> = el.nodes.iter().map(|&n| mesh.nodes[n]).collect();
            let rule = rule_for(el.kind, order)?;
            let scale = facet_scale(&coords, el.kind).map_err(|err| match err {
                QuadratureError::DegenerateElement { det, .. } => {
                    QuadratureError::DegenerateElement { element: Some(e), det }
                }
                other => other,
            })?;
            for (r, w) in rule.points.iter().zip(&rule.weights) {
                let n = shape_eval(el.kind, *r);
                table.push_point(e, &el.nodes, &coords, &n, None, w * scale);
            }
        }
        table.build_incidence();
        Ok(table)
    }

    fn push_point(
        &mut self,
        element: usize,
        nodes: &[usize],
        coords: &[Point],
        shape: &[f64],
        grads: Option<&[Point]>,
        weight: f64,
    ) {
        let mut x = [0.0; 3];
        for (c, n) in coords.iter().zip(shape) {
            for k in 0..3 {
                x[k] += n * c[k];
            }
        }
        self.points.push(x);
        self.weights.push(weight);
        self.elements.push(element);
        self.nodes.extend_from_slice(nodes);
        self.shape.extend_from_slice(shape);
        if let Some(g) = grads {
            self.grads.extend_from_slice(g);
        }
        self.offsets.push(self.nodes.len());
    }

    fn build_incidence(&mut self) {
        let mut counts = vec![0usize; self.node_count + 1];
        for &n in &self.nodes {
            counts[n + 1] += 1;
        }
        for i in 0..self.node_count {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut incidence = vec![0; self.nodes.len()];
        for p in 0..self.len() {
            for &n in self.nodes(p) {
                incidence[fill[n]] = p;
                fill[n] += 1;
            }
        }
        self.incidence_offsets = counts;
        self.incidence = incidence;
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Spatial dimension of the mesh the table was built on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn has_gradients(&self) -> bool {
        !self.grads.is_empty() || self.is_empty()
    }

    pub fn point(&self, p: usize) -> Point {
        self.points[p]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn element(&self, p: usize) -> usize {
        self.elements[p]
    }

    pub fn nodes(&self, p: usize) -> &[usize] {
        &self.nodes[self.offsets[p]..self.offsets[p + 1]]
    }

    pub fn shape(&self, p: usize) -> &[f64] {
        &self.shape[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Physical shape gradients at point `p`; empty for boundary tables.
    pub fn grads(&self, p: usize) -> &[Point] {
        if self.grads.is_empty() {
            &[]
        } else {
            &self.grads[self.offsets[p]..self.offsets[p + 1]]
        }
    }

    /// Points whose element contains `node`.
    pub fn node_points(&self, node: usize) -> &[usize] {
        &self.incidence[self.incidence_offsets[node]..self.incidence_offsets[node + 1]]
    }

    /// Sum of all weights, i.e. the measure of the covered region.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Integrates a function of the global coordinates.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    /// Interpolates nodal values (`nodes x components`, row-major) to the
    /// table points.
    pub fn interpolate(&self, nodal: &[f64], components: usize) -> Interpolated {
        assert_eq!(nodal.len(), self.node_count * components, "nodal array shape");
        let dim = self.dim;
        let with_grads = !self.grads.is_empty();
        let mut values = vec![0.0; self.len() * components];
        let mut grads = if with_grads {
            vec![0.0; self.len() * components * dim]
        } else {
            Vec::new()
        };
        for p in 0..self.len() {
            let start = self.offsets[p];
            let end = self.offsets[p + 1];
            for k in start..end {
                let node = self.nodes[k];
                let n = self.shape[k];
                for c in 0..components {
                    let u = nodal[node * components + c];
                    values[p * components + c] += n * u;
                    if with_grads {
                        let g = &self.grads[k];
                        let base = (p * components + c) * dim;
                        for a in 0..dim {
                            grads[base + a] += g[a] * u;
                        }
                    }
                }
            }
        }
        Interpolated {
            components,
            dim,
            values,
            grads,
        }
    }

    /// Transpose of [`interpolate`](Self::interpolate): maps sensitivities
    /// with respect to point values and gradients back onto nodal values.
    /// `dgrads` may be empty.
    pub fn scatter(&self, dvalues: &[f64], dgrads: &[f64], components: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count * components];
        self.scatter_add(dvalues, dgrads, components, &mut out);
        out
    }

    /// Accumulating form of [`scatter`](Self::scatter). Sums run in fixed
    /// point order, so results are reproducible.
    pub fn scatter_add(&self, dvalues: &[f64], dgrads: &[f64], components: usize, out: &mut [f64]) {
        let dim = self.dim;
        let use_values = !dvalues.is_empty();
        let use_grads = !dgrads.is_empty() && !self.grads.is_empty();
        for p in 0..self.len() {
            for k in self.offsets[p]..self.offsets[p + 1] {
                let node = self.nodes[k];
                for c in 0..components {
                    let mut acc = 0.0;
                    if use_values {
                        acc += self.shape[k] * dvalues[p * components + c];
                    }
                    if use_grads {
                        let g = &self.grads[k];
                        let base = (p * components + c) * dim;
                        for a in 0..dim {
                            acc += g[a] * dgrads[base + a];
                        }
                    }
                    out[node * components + c] += acc;
                }
            }
        }
    }
}

/// Domain table over `Omega` plus boundary tables for `Gamma_u` and
/// `Gamma_t` (when those groups exist).
#[derive(Debug, Clone)]
pub struct MeshTables {
    pub domain: EvalTable,
    pub boundaries: BTreeMap<String, EvalTable>,
}

impl MeshTables {
    pub fn boundary(&self, name: &str) -> Option<&EvalTable> {
        self.boundaries.get(name)
    }
}

pub fn build_eval_table(
    mesh: &Mesh,
    domain_order: usize,
    boundary_order: usize,
) -> Result<MeshTables, QuadratureError> {
    let domain = EvalTable::volume(mesh, mesh.group(OMEGA), domain_order)?;
    let mut boundaries = BTreeMap::new();
    for name in [GAMMA_U, GAMMA_T] {
        if !mesh.group(name).is_empty() {
            boundaries.insert(
                name.to_string(),
                EvalTable::boundary(mesh, mesh.group(name), boundary_order)?,
            );
        }
    }
    Ok(MeshTables { domain, boundaries })
}
