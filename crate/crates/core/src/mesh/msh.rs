//! Gmsh ASCII `.msh` reader (format 2.2 and 4.1) and a 2.2 writer.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{Element, ElementKind, Mesh, MeshError, Point, OMEGA};

/// Gmsh point elements (type 15) carry no geometry and are dropped.
const GMSH_POINT: u32 = 15;

struct Section<'a> {
    /// 1-based line number of the `$Name` header.
    line: usize,
    body: Vec<(usize, &'a str)>,
}

impl<'a> Section<'a> {
    fn lines(&self) -> impl Iterator<Item = (usize, &'a str)> + '_ {
        self.body.iter().copied()
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> MeshError {
    MeshError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn split_sections(text: &str) -> Result<HashMap<&str, Section<'_>>, MeshError> {
    let mut sections = HashMap::new();
    let mut current: Option<(&str, Section)> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('$') {
            if let Some(end) = name.strip_prefix("End") {
                match current.take() {
                    Some((open, sec)) if open == end => {
                        sections.entry(open).or_insert(sec);
                    }
                    _ => return Err(malformed(lineno, format!("unexpected ${name}"))),
                }
            } else {
                if let Some((open, _)) = &current {
                    return Err(malformed(lineno, format!("section ${open} not closed")));
                }
                current = Some((name, Section { line: lineno, body: Vec::new() }));
            }
        } else if let Some((_, sec)) = current.as_mut() {
            if !line.is_empty() {
                sec.body.push((lineno, line));
            }
        }
    }
    if let Some((open, sec)) = current {
        return Err(malformed(sec.line, format!("section ${open} not closed")));
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| malformed(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| malformed(line, format!("invalid {what} `{tok}`")))
}

#[derive(Clone, Copy, PartialEq)]
enum Version {
    V22,
    V41,
}

fn parse_format(sections: &HashMap<&str, Section>) -> Result<Version, MeshError> {
    let sec = sections.get("MeshFormat").ok_or(MeshError::MissingSection("MeshFormat"))?;
    let (line, text) = sec
        .body
        .first()
        .copied()
        .ok_or_else(|| malformed(sec.line, "empty $MeshFormat"))?;
    let toks: Vec<&str> = text.split_whitespace().collect();
    let version = match toks.first() {
        Some(&"2.2") => Version::V22,
        Some(&"4.1") => Version::V41,
        _ => return Err(MeshError::UnsupportedVersion(text.to_string())),
    };
    let file_type: u32 = parse_num(toks.get(1).copied(), line, "file type")?;
    if file_type != 0 {
        return Err(MeshError::UnsupportedVersion(format!("{text} (binary)")));
    }
    Ok(version)
}

/// `(dim, physical tag) -> name`.
fn parse_physical_names(sections: &HashMap<&str, Section>) -> Result<HashMap<(usize, i64), String>, MeshError> {
    let mut names = HashMap::new();
    let Some(sec) = sections.get("PhysicalNames") else {
        return Ok(names);
    };
    let mut lines = sec.lines();
    let (line, count) = lines.next().ok_or_else(|| malformed(sec.line, "empty $PhysicalNames"))?;
    let count: usize = parse_num(Some(count), line, "physical name count")?;
    for _ in 0..count {
        let (line, text) = lines
            .next()
            .ok_or_else(|| malformed(sec.line, "truncated $PhysicalNames"))?;
        let mut toks = text.splitn(3, char::is_whitespace);
        let dim: usize = parse_num(toks.next(), line, "physical dimension")?;
        let tag: i64 = parse_num(toks.next(), line, "physical tag")?;
        let rest = toks.next().unwrap_or("").trim();
        let name = rest
            .strip_prefix('"')
            .and_then(|r| r.strip_suffix('"'))
            .ok_or_else(|| malformed(line, "physical name must be quoted"))?;
        names.insert((dim, tag), name.to_string());
    }
    Ok(names)
}

/// Raw element as read from the file before kinds are resolved.
struct RawElement {
    line: usize,
    code: u32,
    node_tags: Vec<u64>,
    physical: Vec<i64>,
}

struct RawMesh {
    node_tags: HashMap<u64, usize>,
    nodes: Vec<Point>,
    elements: Vec<RawElement>,
}

impl RawMesh {
    fn add_node(&mut self, tag: u64, p: Point, line: usize) -> Result<(), MeshError> {
        if self.node_tags.insert(tag, self.nodes.len()).is_some() {
            return Err(malformed(line, format!("duplicate node tag {tag}")));
        }
        self.nodes.push(p);
        Ok(())
    }
}

fn node_count_for(code: u32, line: usize) -> Result<usize, MeshError> {
    match code {
        1 => Ok(2),
        2 => Ok(3),
        3 | 4 => Ok(4),
        GMSH_POINT => Ok(1),
        other => Err(malformed(line, format!("unsupported element type {other}"))),
    }
}

fn parse_point(toks: &mut std::str::SplitWhitespace, line: usize) -> Result<Point, MeshError> {
    Ok([
        parse_num(toks.next(), line, "x coordinate")?,
        parse_num(toks.next(), line, "y coordinate")?,
        parse_num(toks.next(), line, "z coordinate")?,
    ])
}

fn parse_v22(sections: &HashMap<&str, Section>) -> Result<RawMesh, MeshError> {
    let mut raw = RawMesh {
        node_tags: HashMap::new(),
        nodes: Vec::new(),
        elements: Vec::new(),
    };
    let sec = sections.get("Nodes").ok_or(MeshError::MissingSection("Nodes"))?;
    let mut lines = sec.lines();
    let (line, count) = lines.next().ok_or_else(|| malformed(sec.line, "empty $Nodes"))?;
    let count: usize = parse_num(Some(count), line, "node count")?;
    for _ in 0..count {
        let (line, text) = lines.next().ok_or_else(|| malformed(sec.line, "truncated $Nodes"))?;
        let mut toks = text.split_whitespace();
        let tag: u64 = parse_num(toks.next(), line, "node tag")?;
        let p = parse_point(&mut toks, line)?;
        raw.add_node(tag, p, line)?;
    }

    let sec = sections.get("Elements").ok_or(MeshError::MissingSection("Elements"))?;
    let mut lines = sec.lines();
    let (line, count) = lines.next().ok_or_else(|| malformed(sec.line, "empty $Elements"))?;
    let count: usize = parse_num(Some(count), line, "element count")?;
    for _ in 0..count {
        let (line, text) = lines
            .next()
            .ok_or_else(|| malformed(sec.line, "truncated $Elements"))?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        let code: u32 = parse_num(toks.get(1).copied(), line, "element type")?;
        let ntags: usize = parse_num(toks.get(2).copied(), line, "tag count")?;
        let nnodes = node_count_for(code, line)?;
        if toks.len() != 3 + ntags + nnodes {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", 3 + ntags + nnodes, toks.len()),
            ));
        }
        let physical = if ntags > 0 {
            let tag: i64 = parse_num(Some(toks[3]), line, "physical tag")?;
            if tag > 0 { vec![tag] } else { Vec::new() }
        } else {
            Vec::new()
        };
        let node_tags = toks[3 + ntags..]
            .iter()
            .map(|t| parse_num(Some(*t), line, "node tag"))
            .collect::<Result<_, _>>()?;
        raw.elements.push(RawElement { line, code, node_tags, physical });
    }
    Ok(raw)
}

/// `(entity dim, entity tag) -> physical tags` from a 4.1 `$Entities` section.
fn parse_entities(sections: &HashMap<&str, Section>) -> Result<HashMap<(usize, i64), Vec<i64>>, MeshError> {
    let mut map = HashMap::new();
    let Some(sec) = sections.get("Entities") else {
        return Ok(map);
    };
    let mut lines = sec.lines();
    let (line, header) = lines.next().ok_or_else(|| malformed(sec.line, "empty $Entities"))?;
    let mut toks = header.split_whitespace();
    let mut counts = [0usize; 4];
    for c in &mut counts {
        *c = parse_num(toks.next(), line, "entity count")?;
    }
    for (dim, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let (line, text) = lines
                .next()
                .ok_or_else(|| malformed(sec.line, "truncated $Entities"))?;
            let mut toks = text.split_whitespace();
            let tag: i64 = parse_num(toks.next(), line, "entity tag")?;
            // Points carry x y z, higher entities a bounding box.
            let skip = if dim == 0 { 3 } else { 6 };
            for _ in 0..skip {
                let _: f64 = parse_num(toks.next(), line, "entity coordinate")?;
            }
            let nphys: usize = parse_num(toks.next(), line, "physical tag count")?;
            let mut phys = Vec::with_capacity(nphys);
            for _ in 0..nphys {
                phys.push(parse_num::<i64>(toks.next(), line, "physical tag")?.abs());
            }
            map.insert((dim, tag), phys);
        }
    }
    Ok(map)
}

fn parse_v41(sections: &HashMap<&str, Section>) -> Result<RawMesh, MeshError> {
    let entities = parse_entities(sections)?;
    let mut raw = RawMesh {
        node_tags: HashMap::new(),
        nodes: Vec::new(),
        elements: Vec::new(),
    };

    let sec = sections.get("Nodes").ok_or(MeshError::MissingSection("Nodes"))?;
    let mut lines = sec.lines();
    let (line, header) = lines.next().ok_or_else(|| malformed(sec.line, "empty $Nodes"))?;
    let blocks: usize = parse_num(header.split_whitespace().next(), line, "entity block count")?;
    for _ in 0..blocks {
        let (line, text) = lines.next().ok_or_else(|| malformed(sec.line, "truncated $Nodes"))?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(malformed(line, "node block header needs 4 fields"));
        }
        let parametric: u32 = parse_num(Some(toks[2]), line, "parametric flag")?;
        let count: usize = parse_num(Some(toks[3]), line, "block node count")?;
        let mut tags = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, text) = lines.next().ok_or_else(|| malformed(sec.line, "truncated $Nodes"))?;
            tags.push((line, parse_num::<u64>(Some(text.trim()), line, "node tag")?));
        }
        for (_, tag) in tags {
            let (line, text) = lines.next().ok_or_else(|| malformed(sec.line, "truncated $Nodes"))?;
            let mut toks = text.split_whitespace();
            let p = parse_point(&mut toks, line)?;
            if parametric == 0 && toks.next().is_some() {
                return Err(malformed(line, "trailing fields after coordinates"));
            }
            raw.add_node(tag, p, line)?;
        }
    }

    let sec = sections.get("Elements").ok_or(MeshError::MissingSection("Elements"))?;
    let mut lines = sec.lines();
    let (line, header) = lines.next().ok_or_else(|| malformed(sec.line, "empty $Elements"))?;
    let blocks: usize = parse_num(header.split_whitespace().next(), line, "entity block count")?;
    for _ in 0..blocks {
        let (line, text) = lines
            .next()
            .ok_or_else(|| malformed(sec.line, "truncated $Elements"))?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(malformed(line, "element block header needs 4 fields"));
        }
        let entity_dim: usize = parse_num(Some(toks[0]), line, "entity dimension")?;
        let entity_tag: i64 = parse_num(Some(toks[1]), line, "entity tag")?;
        let code: u32 = parse_num(Some(toks[2]), line, "element type")?;
        let count: usize = parse_num(Some(toks[3]), line, "block element count")?;
        let nnodes = node_count_for(code, line)?;
        let physical = entities.get(&(entity_dim, entity_tag)).cloned().unwrap_or_default();
        for _ in 0..count {
            let (line, text) = lines
                .next()
                .ok_or_else(|| malformed(sec.line, "truncated $Elements"))?;
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 1 + nnodes {
                return Err(malformed(
                    line,
                    format!("expected {} fields, found {}", 1 + nnodes, toks.len()),
                ));
            }
            let node_tags = toks[1..]
                .iter()
                .map(|t| parse_num(Some(*t), line, "node tag"))
                .collect::<Result<_, _>>()?;
            raw.elements.push(RawElement {
                line,
                code,
                node_tags,
                physical: physical.clone(),
            });
        }
    }
    Ok(raw)
}

/// Parses a Gmsh ASCII mesh (format 2.2 or 4.1).
///
/// Node indices are re-based to 0 in file order. Elements that gmsh repeats
/// once per physical group are merged, and every `$PhysicalNames` entry
/// becomes a named group. Physical groups without a name are kept under
/// their numeric tag.
pub fn parse_msh(bytes: &[u8]) -> Result<Mesh, MeshError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| MeshError::UnsupportedVersion("non-UTF-8 (binary?) content".into()))?;
    let sections = split_sections(text)?;
    let version = parse_format(&sections)?;
    let names = parse_physical_names(&sections)?;
    let raw = match version {
        Version::V22 => parse_v22(&sections)?,
        Version::V41 => parse_v41(&sections)?,
    };

    let dim = if raw.elements.iter().any(|e| e.code == 4) { 3 } else { 2 };
    let mut elements: Vec<Element> = Vec::new();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut seen: HashMap<(u32, Vec<usize>), usize> = HashMap::new();
    for el in raw.elements {
        let kind = match el.code {
            GMSH_POINT => continue,
            1 => ElementKind::Line2,
            2 if dim == 3 => ElementKind::TriSurface,
            2 => ElementKind::Tri3,
            3 => ElementKind::Quad4,
            4 => ElementKind::Tet4,
            other => return Err(malformed(el.line, format!("unsupported element type {other}"))),
        };
        let nodes = el
            .node_tags
            .iter()
            .map(|t| {
                raw.node_tags
                    .get(t)
                    .copied()
                    .ok_or_else(|| malformed(el.line, format!("unknown node tag {t}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut key = nodes.clone();
        key.sort_unstable();
        let index = *seen.entry((el.code, key)).or_insert_with(|| {
            elements.push(Element { kind, nodes });
            elements.len() - 1
        });
        let edim = kind.topological_dim();
        for tag in el.physical {
            let name = names
                .get(&(edim, tag))
                .cloned()
                .unwrap_or_else(|| tag.to_string());
            let members = groups.entry(name).or_default();
            if members.last() != Some(&index) {
                members.push(index);
            }
        }
    }
    for members in groups.values_mut() {
        members.sort_unstable();
        members.dedup();
    }
    if !groups.contains_key(OMEGA) {
        return Err(MeshError::MissingGroup(OMEGA.to_string()));
    }
    let mesh = Mesh {
        dim,
        nodes: raw.nodes,
        elements,
        groups,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Serializes a mesh as Gmsh ASCII 2.2. Elements belonging to several groups
/// are written once per group, as gmsh itself does.
pub fn write_msh22(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");

    let mut memberships: Vec<Vec<i64>> = vec![Vec::new(); mesh.elements.len()];
    let mut names = Vec::new();
    for (name, members) in &mesh.groups {
        let Some(&first) = members.first() else { continue };
        let tag = names.len() as i64 + 1;
        names.push((mesh.elements[first].kind.topological_dim(), tag, name));
        for &e in members {
            memberships[e].push(tag);
        }
    }
    out.push_str("$PhysicalNames\n");
    let _ = writeln!(out, "{}", names.len());
    for (dim, tag, name) in &names {
        let _ = writeln!(out, "{dim} {tag} \"{name}\"");
    }
    out.push_str("$EndPhysicalNames\n$Nodes\n");
    let _ = writeln!(out, "{}", mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(out, "{} {:?} {:?} {:?}", i + 1, p[0], p[1], p[2]);
    }
    out.push_str("$EndNodes\n$Elements\n");
    let total: usize = memberships.iter().map(|m| m.len().max(1)).sum();
    let _ = writeln!(out, "{total}");
    let mut id = 1;
    for (el, tags) in mesh.elements.iter().zip(&memberships) {
        let untagged = [0i64];
        let tags: &[i64] = if tags.is_empty() { &untagged } else { tags };
        for tag in tags {
            let _ = write!(out, "{id} {} 2 {tag} {tag}", el.kind.gmsh_code());
            for n in &el.nodes {
                let _ = write!(out, " {}", n + 1);
            }
            out.push('\n');
            id += 1;
        }
    }
    out.push_str("$EndElements\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GAMMA_T, GAMMA_U};

    pub(crate) const SINGLE_TRIANGLE: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
3
1 1 \"Gamma_u\"
1 2 \"Gamma_t\"
2 3 \"Omega\"
$EndPhysicalNames
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
4
1 1 2 1 1 1 2
2 1 2 1 2 3 1
3 1 2 2 3 2 3
4 2 2 3 4 1 2 3
$EndElements
";

    #[test]
    fn minimal_triangle_file() {
        let mesh = parse_msh(SINGLE_TRIANGLE.as_bytes()).unwrap();
        assert_eq!(mesh.dim, 2);
        assert_eq!(mesh.nodes.len(), 3);
        assert_eq!(mesh.elements.len(), 4);
        assert_eq!(mesh.groups.len(), 3);
        assert_eq!(mesh.group(OMEGA), &[3]);
        assert_eq!(mesh.group(GAMMA_U), &[0, 1]);
        assert_eq!(mesh.group(GAMMA_T), &[2]);
        assert_eq!(mesh.elements[3].nodes, vec![0, 1, 2]);
    }

    #[test]
    fn missing_omega() {
        let text = SINGLE_TRIANGLE.replace("\"Omega\"", "\"Domain\"");
        assert!(matches!(
            parse_msh(text.as_bytes()),
            Err(MeshError::MissingGroup(g)) if g == "Omega"
        ));
    }

    #[test]
    fn version_and_sections() {
        let text = SINGLE_TRIANGLE.replace("2.2 0 8", "3.0 0 8");
        assert!(matches!(parse_msh(text.as_bytes()), Err(MeshError::UnsupportedVersion(_))));
        let text = SINGLE_TRIANGLE.replace("2.2 0 8", "2.2 1 8");
        assert!(matches!(parse_msh(text.as_bytes()), Err(MeshError::UnsupportedVersion(_))));
        let cut = SINGLE_TRIANGLE.split("$Elements").next().unwrap();
        assert!(matches!(
            parse_msh(cut.as_bytes()),
            Err(MeshError::MissingSection("Elements"))
        ));
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = SINGLE_TRIANGLE.replace("2 1 0 0\n", "2 1 zero 0\n");
        match parse_msh(text.as_bytes()) {
            Err(MeshError::MalformedRecord { line, .. }) => assert_eq!(line, 13),
            other => panic!("unexpected {other:?}"),
        }
        let text = SINGLE_TRIANGLE.replace("4 2 2 3 4 1 2 3", "4 9 2 3 4 1 2 3");
        assert!(matches!(parse_msh(text.as_bytes()), Err(MeshError::MalformedRecord { line: 21, .. })));
    }

    #[test]
    fn v41_with_gaps_in_node_tags() {
        let text = "$MeshFormat
4.1 0 8
$EndMeshFormat
$PhysicalNames
2
1 5 \"Gamma_u\"
2 7 \"Omega\"
$EndPhysicalNames
$Entities
0 1 1 0
3 0 0 0 1 1 0 1 5 0
1 0 0 0 1 1 0 1 7 0
$EndEntities
$Nodes
2 3 10 30
2 1 0 2
10
20
0 0 0
1 0 0
2 3 0 1
30
0 1 0
$EndNodes
$Elements
2 2 1 2
1 3 1 1
1 10 20
2 1 2 1
2 10 20 30
$EndElements
";
        let mesh = parse_msh(text.as_bytes()).unwrap();
        assert_eq!(mesh.nodes.len(), 3);
        assert_eq!(mesh.nodes[2], [0.0, 1.0, 0.0]);
        assert_eq!(mesh.elements.len(), 2);
        assert_eq!(mesh.group("Gamma_u"), &[0]);
        assert_eq!(mesh.group("Omega"), &[1]);
        assert_eq!(mesh.elements[1].nodes, vec![0, 1, 2]);
    }

    #[test]
    fn writer_round_trip_merges_duplicates() {
        let mesh = parse_msh(SINGLE_TRIANGLE.as_bytes()).unwrap();
        let mut both = mesh.clone();
        both.groups.get_mut(GAMMA_T).unwrap().push(0);
        both.groups.get_mut(GAMMA_T).unwrap().sort();
        let text = write_msh22(&both);
        let back = parse_msh(text.as_bytes()).unwrap();
        assert_eq!(back, both);
    }
}
