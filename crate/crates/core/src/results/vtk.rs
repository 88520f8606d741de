//! Legacy ASCII VTK export of nodal and cell fields.

use std::fmt::Write as _;
use std::path::Path;

use super::RunError;
use crate::mesh::{ElementKind, Mesh};

/// A named array with `components` values per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub components: usize,
    pub values: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, components: usize, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            components,
            values,
        }
    }

    fn entries(&self) -> usize {
        self.values.len() / self.components.max(1)
    }
}

/// Fields over a mesh. Cells are the volume elements of the mesh in order;
/// boundary elements are not exported.
#[derive(Debug, Clone)]
pub struct FieldBundle<'a> {
    pub mesh: &'a Mesh,
    pub point_data: Vec<NamedArray>,
    pub cell_data: Vec<NamedArray>,
}

impl<'a> FieldBundle<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        Self {
            mesh,
            point_data: Vec::new(),
            cell_data: Vec::new(),
        }
    }

    pub fn point(mut self, name: impl Into<String>, components: usize, values: Vec<f64>) -> Self {
        self.point_data.push(NamedArray::new(name, components, values));
        self
    }

    pub fn cell(mut self, name: impl Into<String>, components: usize, values: Vec<f64>) -> Self {
        self.cell_data.push(NamedArray::new(name, components, values));
        self
    }

    fn cells(&self) -> impl Iterator<Item = &crate::mesh::Element> {
        let dim = self.mesh.dim;
        self.mesh.elements.iter().filter(move |e| e.kind.is_volume(dim))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let cells = self.cells().count();
        let check = |a: &NamedArray, count: usize, what: &str| {
            if !matches!(a.components, 1 | 2 | 3 | 4 | 9) {
                return Err(RunError::Bundle(format!(
                    "{what} array `{}` has {} components (1, 2, 3, 4 or 9 supported)",
                    a.name, a.components
                )));
            }
            if a.values.len() != count * a.components {
                return Err(RunError::Bundle(format!(
                    "{what} array `{}` has {} values, expected {} x {}",
                    a.name,
                    a.values.len(),
                    count,
                    a.components
                )));
            }
            if a.name.is_empty() || a.name.contains(char::is_whitespace) {
                return Err(RunError::Bundle(format!("bad array name `{}`", a.name)));
            }
            Ok(())
        };
        for a in &self.point_data {
            check(a, self.mesh.node_count(), "point")?;
        }
        for a in &self.cell_data {
            check(a, cells, "cell")?;
        }
        Ok(())
    }
}

fn vtk_cell_type(kind: ElementKind) -> u8 {
    match kind {
        ElementKind::Line2 => 3,
        ElementKind::Tri3 | ElementKind::TriSurface => 5,
        ElementKind::Quad4 => 9,
        ElementKind::Tet4 => 10,
    }
}

fn write_array(out: &mut String, a: &NamedArray) {
    let n = a.entries();
    match a.components {
        1 => {
            writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", a.name).unwrap();
            for v in &a.values {
                writeln!(out, "{v:?}").unwrap();
            }
        }
        2 | 3 => {
            writeln!(out, "VECTORS {} double", a.name).unwrap();
            for i in 0..n {
                let v = &a.values[i * a.components..(i + 1) * a.components];
                let z = if a.components == 3 { v[2] } else { 0.0 };
                writeln!(out, "{:?} {:?} {z:?}", v[0], v[1]).unwrap();
            }
        }
        _ => {
            // 2x2 tensors are padded into the upper-left block of a 3x3
            writeln!(out, "TENSORS {} double", a.name).unwrap();
            for i in 0..n {
                let v = &a.values[i * a.components..(i + 1) * a.components];
                let t = if a.components == 9 {
                    [v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]]
                } else {
                    [v[0], v[1], 0.0, v[2], v[3], 0.0, 0.0, 0.0, 0.0]
                };
                for row in t.chunks(3) {
                    writeln!(out, "{:?} {:?} {:?}", row[0], row[1], row[2]).unwrap();
                }
            }
        }
    }
}

/// The file contents. Numbers use the shortest round-trip representation,
/// so identical inputs give identical bytes.
pub fn render_vtk(bundle: &FieldBundle) -> Result<String, RunError> {
    bundle.validate()?;
    let mesh = bundle.mesh;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\ndem results\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {} double", mesh.node_count()).unwrap();
    for p in &mesh.nodes {
        let z = if mesh.dim == 3 { p[2] } else { 0.0 };
        writeln!(out, "{:?} {:?} {z:?}", p[0], p[1]).unwrap();
    }
    let cells: Vec<_> = bundle.cells().collect();
    let size: usize = cells.iter().map(|c| c.nodes.len() + 1).sum();
    writeln!(out, "CELLS {} {size}", cells.len()).unwrap();
    for c in &cells {
        out.push_str(&c.nodes.len().to_string());
        for n in &c.nodes {
            write!(out, " {n}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "CELL_TYPES {}", cells.len()).unwrap();
    for c in &cells {
        writeln!(out, "{}", vtk_cell_type(c.kind)).unwrap();
    }
    if !bundle.point_data.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.node_count()).unwrap();
        for a in &bundle.point_data {
            write_array(&mut out, a);
        }
    }
    if !bundle.cell_data.is_empty() {
        writeln!(out, "CELL_DATA {}", cells.len()).unwrap();
        for a in &bundle.cell_data {
            write_array(&mut out, a);
        }
    }
    Ok(out)
}

pub fn write_vtk(bundle: &FieldBundle, path: &Path) -> Result<(), RunError> {
    let text = render_vtk(bundle)?;
    std::fs::write(path, text).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}
