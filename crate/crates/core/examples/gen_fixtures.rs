//! Regenerates the structured meshes under `fixtures/`.
//!
//! ```text
//! cargo run -p dem-core --example gen_fixtures
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use dem_core::mesh::{write_msh22, Element, ElementKind, Mesh, Point, GAMMA_T, GAMMA_U, OMEGA};

struct Builder {
    dim: usize,
    nodes: Vec<Point>,
    elements: Vec<Element>,
    groups: BTreeMap<String, Vec<usize>>,
}

impl Builder {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            nodes: Vec::new(),
            elements: Vec::new(),
            groups: BTreeMap::new(),
        }
    }

    fn push(&mut self, kind: ElementKind, nodes: Vec<usize>, group: Option<&str>) {
        let idx = self.elements.len();
        self.elements.push(Element { kind, nodes });
        if let Some(g) = group {
            self.groups.entry(g.to_string()).or_default().push(idx);
        }
    }

    /// Tetrahedron with positive orientation.
    fn tet(&mut self, mut n: [usize; 4]) {
        let p = |i: usize| self.nodes[n[i]];
        let (a, b, c, d) = (p(0), p(1), p(2), p(3));
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
        let det = u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0]);
        if det < 0.0 {
            n.swap(2, 3);
        }
        self.push(ElementKind::Tet4, n.to_vec(), Some(OMEGA));
    }

    fn finish(self) -> Mesh {
        let mesh = Mesh {
            dim: self.dim,
            nodes: self.nodes,
            elements: self.elements,
            groups: self.groups,
        };
        mesh.validate().expect("generated mesh is valid");
        mesh
    }
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Unit square, `n x n` cells, each split into two triangles (or kept as a
/// quad). `tag` names the group of each side's boundary segments.
fn square(n: usize, quads: bool, tag: impl Fn(Side) -> Option<&'static str>) -> Mesh {
    let mut b = Builder::new(2);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    for j in 0..=n {
        for i in 0..=n {
            b.nodes.push([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
        }
    }
    for j in 0..n {
        for i in 0..n {
            let (a, c1, c2, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if quads {
                b.push(ElementKind::Quad4, vec![a, c1, c2, d], Some(OMEGA));
            } else {
                b.push(ElementKind::Tri3, vec![a, c1, c2], Some(OMEGA));
                b.push(ElementKind::Tri3, vec![a, c2, d], Some(OMEGA));
            }
        }
    }
    for k in 0..n {
        let segments = [
            (Side::Bottom, id(k, 0), id(k + 1, 0)),
            (Side::Right, id(n, k), id(n, k + 1)),
            (Side::Top, id(k + 1, n), id(k, n)),
            (Side::Left, id(0, k + 1), id(0, k)),
        ];
        for (side, p, q) in segments {
            b.push(ElementKind::Line2, vec![p, q], tag(side));
        }
    }
    b.finish()
}

/// Boundary quad `a b c d` (cyclic, `a` and `c` the logical min and max
/// corners) split along the `a-c` diagonal, matching the Kuhn split.
fn face(b: &mut Builder, q: [usize; 4], group: Option<&str>) {
    b.push(ElementKind::TriSurface, vec![q[0], q[1], q[2]], group);
    b.push(ElementKind::TriSurface, vec![q[0], q[2], q[3]], group);
}

/// Six tetrahedra of the Kuhn split of a logical hex; `corner(dx, dy, dz)`
/// returns the node at that logical corner.
fn kuhn(b: &mut Builder, corner: impl Fn(usize, usize, usize) -> usize) {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for perm in PERMS {
        let mut at = [0usize; 3];
        let mut tet = [corner(0, 0, 0); 4];
        for (k, &axis) in perm.iter().enumerate() {
            at[axis] = 1;
            tet[k + 1] = corner(at[0], at[1], at[2]);
        }
        b.tet(tet);
    }
}

/// Unit cube with `n^3` hexes split into tetrahedra. `tag(axis, high)` names
/// the group of the face `x_axis = high`.
fn cube(n: usize, tag: impl Fn(usize, bool) -> Option<&'static str>) -> Mesh {
    let mut b = Builder::new(3);
    let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                b.nodes.push([i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64]);
            }
        }
    }
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                kuhn(&mut b, |dx, dy, dz| id(i + dx, j + dy, k + dz));
            }
        }
    }
    for axis in 0..3 {
        for high in [false, true] {
            let fixed = if high { n } else { 0 };
            for s in 0..n {
                for t in 0..n {
                    // (s, t) run over the two other axes in increasing order
                    let at = |ds: usize, dt: usize| {
                        let mut c = [0; 3];
                        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
                        c[axis] = fixed;
                        c[others[0]] = s + ds;
                        c[others[1]] = t + dt;
                        id(c[0], c[1], c[2])
                    };
                    face(&mut b, [at(0, 0), at(1, 0), at(1, 1), at(0, 1)], tag(axis, high));
                }
            }
        }
    }
    b.finish()
}

/// Plate `[0,1] x [0,1] x [0,thickness]` with a centred cylindrical hole,
/// meshed as an O-grid around the hole and extruded through the thickness.
/// `Gamma_u` is the face `x = 0`, `Gamma_t` the face `x = 1`.
fn plate_with_hole(per_side: usize, radial: usize, layers: usize, radius: f64, thickness: f64) -> Mesh {
    let mut b = Builder::new(3);
    let around = 4 * per_side;
    // perimeter point `i` of the unit square, counterclockwise from (0,0)
    let outer = |i: usize| -> [f64; 2] {
        let side = (i / per_side) % 4;
        let s = (i % per_side) as f64 / per_side as f64;
        match side {
            0 => [s, 0.0],
            1 => [1.0, s],
            2 => [1.0 - s, 1.0],
            _ => [0.0, 1.0 - s],
        }
    };
    let id = |i: usize, j: usize, k: usize| (k * (radial + 1) + j) * around + (i % around);
    for k in 0..=layers {
        let z = thickness * k as f64 / layers as f64;
        for j in 0..=radial {
            let r = j as f64 / radial as f64;
            for i in 0..around {
                let o = outer(i);
                let theta = (o[1] - 0.5).atan2(o[0] - 0.5);
                let h = [0.5 + radius * theta.cos(), 0.5 + radius * theta.sin()];
                b.nodes.push([(1.0 - r) * h[0] + r * o[0], (1.0 - r) * h[1] + r * o[1], z]);
            }
        }
    }
    for k in 0..layers {
        for j in 0..radial {
            for i in 0..around {
                kuhn(&mut b, |di, dj, dk| id(i + di, j + dj, k + dk));
            }
        }
    }
    // outer faces (j = radial), tagged by the side of the square they lie on
    for k in 0..layers {
        for i in 0..around {
            let group = match i / per_side {
                1 => Some(GAMMA_T),
                3 => Some(GAMMA_U),
                _ => None,
            };
            let q = [id(i, radial, k), id(i + 1, radial, k), id(i + 1, radial, k + 1), id(i, radial, k + 1)];
            face(&mut b, q, group);
        }
    }
    // hole (j = 0) and the two flat faces: traction free
    for k in 0..layers {
        for i in 0..around {
            face(&mut b, [id(i, 0, k), id(i + 1, 0, k), id(i + 1, 0, k + 1), id(i, 0, k + 1)], None);
        }
    }
    for k in [0, layers] {
        for j in 0..radial {
            for i in 0..around {
                face(&mut b, [id(i, j, k), id(i + 1, j, k), id(i + 1, j + 1, k), id(i, j + 1, k)], None);
            }
        }
    }
    b.finish()
}

fn write(dir: &Path, name: &str, mesh: &Mesh) {
    let path = dir.join(format!("{name}.msh"));
    std::fs::write(&path, write_msh22(mesh)).unwrap();
    println!("{} ({} nodes, {} elements)", path.display(), mesh.node_count(), mesh.elements.len());
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).unwrap();

    let mixed = |s: Side| match s {
        Side::Left | Side::Bottom => Some(GAMMA_U),
        Side::Right | Side::Top => Some(GAMMA_T),
    };
    let clamped = |_: Side| Some(GAMMA_U);
    let beam = |s: Side| match s {
        Side::Left => Some(GAMMA_U),
        Side::Right => Some(GAMMA_T),
        _ => None,
    };

    write(&dir, "square_2x2", &square(2, false, mixed));
    write(&dir, "square_mixed_20", &square(20, false, mixed));
    for n in [4, 8, 16, 20, 32] {
        write(&dir, &format!("square_dirichlet_{n}"), &square(n, false, clamped));
    }
    write(&dir, "square_beam_20", &square(20, false, beam));
    write(&dir, "square_quad_4", &square(4, true, clamped));
    write(&dir, "square_quad_beam_8", &square(8, true, beam));
    write(&dir, "cube_tet_3", &cube(3, |axis, high| if axis == 0 && !high { Some(GAMMA_U) } else { Some(GAMMA_T) }));
    write(&dir, "cube_dirichlet_3", &cube(3, |_, _| Some(GAMMA_U)));
    write(&dir, "plate_hole_3d", &plate_with_hole(6, 5, 2, 0.2, 0.2));
}
