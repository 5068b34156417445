//! Minimal Wavefront OBJ: `v`, `vn` and triangular `f` records.
//!
//! Faces may be written `f a b c`, `f a//na ...` or `f a/t/na ...`; texture
//! indices are ignored. A position used with several normals is split into
//! one vertex per distinct (position, normal) pair. Without any `vn`,
//! area-weighted normals are computed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{compute_normals, Mesh, Vec3};
use crate::error::{Error, Result};

fn format_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        what: "OBJ",
        detail: format!("line {line}: {}", detail.into()),
    }
}

fn parse_vec3(path: &Path, line: usize, parts: &[&str]) -> Result<Vec3> {
    if parts.len() < 3 {
        return Err(format_err(path, line, "expected three coordinates"));
    }
    let mut v = [0.0; 3];
    for (slot, s) in v.iter_mut().zip(parts) {
        *slot = s
            .parse()
            .map_err(|_| format_err(path, line, format!("bad number {s:?}")))?;
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn resolve(path: &Path, line: usize, s: &str, count: usize) -> Result<usize> {
    let i: i64 = s
        .parse()
        .map_err(|_| format_err(path, line, format!("bad index {s:?}")))?;
    let idx = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || idx < 0 || idx as usize >= count {
        return Err(format_err(path, line, format!("index {i} out of range (have {count})")));
    }
    Ok(idx as usize)
}

pub fn parse_obj(path: &Path, text: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    // (position, optional normal) per face corner, resolved after reading
    let mut faces: Vec<([usize; 3], Option<[usize; 3]>, usize)> = Vec::new();

    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => positions.push(parse_vec3(path, line, &rest)?),
            "vn" => normals.push(parse_vec3(path, line, &rest)?),
            "f" => {
                if rest.len() != 3 {
                    return Err(format_err(
                        path,
                        line,
                        format!("only triangles are supported, got {} corners", rest.len()),
                    ));
                }
                let mut pi = [0; 3];
                let mut ni = [0; 3];
                let mut with_normals = 0;
                for (k, corner) in rest.iter().enumerate() {
                    let fields: Vec<&str> = corner.split('/').collect();
                    pi[k] = resolve(path, line, fields[0], positions.len())?;
                    if let Some(n) = fields.get(2).filter(|s| !s.is_empty()) {
                        ni[k] = resolve(path, line, n, normals.len())?;
                        with_normals += 1;
                    }
                }
                let nrm = match with_normals {
                    0 => None,
                    3 => Some(ni),
                    _ => return Err(format_err(path, line, "face mixes corners with and without normals")),
                };
                faces.push((pi, nrm, line));
            }
            "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" => {}
            other => return Err(format_err(path, line, format!("unsupported record {other:?}"))),
        }
    }

    if faces.iter().all(|f| f.1.is_none()) {
        let tris = faces
            .iter()
            .map(|(p, _, _)| p.map(|i| i as u32))
            .collect();
        return compute_normals(positions, tris);
    }
    if faces.iter().any(|f| f.1.is_none()) {
        let line = faces.iter().find(|f| f.1.is_none()).map(|f| f.2).unwrap_or(0);
        return Err(format_err(path, line, "face without normals in a file that uses normals"));
    }

    // One vertex per distinct (position, normal) pair, ordered by the pair so
    // files written by `to_obj_string` keep their vertex numbering.
    let mut pairs: Vec<((usize, usize), usize)> = faces
        .iter()
        .flat_map(|(p, n, line)| {
            let n = n.expect("checked above");
            (0..3).map(move |k| ((p[k], n[k]), *line))
        })
        .collect();
    pairs.sort_by_key(|(key, _)| *key);
    pairs.dedup_by_key(|(key, _)| *key);
    let mut split: HashMap<(usize, usize), u32> = HashMap::with_capacity(pairs.len());
    let mut vertices = Vec::with_capacity(pairs.len());
    let mut vnormals = Vec::with_capacity(pairs.len());
    for ((p, n), line) in pairs {
        let nv = normals[n];
        let len = nv.norm();
        if !(len > 0.0) {
            return Err(format_err(path, line, format!("zero-length normal {}", n + 1)));
        }
        split.insert((p, n), vertices.len() as u32);
        vertices.push(positions[p]);
        vnormals.push(nv / len);
    }
    let tris = faces
        .iter()
        .map(|(p, n, _)| {
            let n = n.expect("checked above");
            [0, 1, 2].map(|k| split[&(p[k], n[k])])
        })
        .collect();
    Mesh::with_normals(vertices, tris, vnormals)
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(path, &text)
}

/// Serializes with one `vn` per vertex and `f a//a b//b c//c` faces.
pub fn to_obj_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:.8e} {:.8e} {:.8e}", v.x, v.y, v.z);
    }
    for n in mesh.vertex_normals() {
        let _ = writeln!(s, "vn {:.8e} {:.8e} {:.8e}", n.x, n.y, n.z);
    }
    for t in mesh.triangles() {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    s
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
