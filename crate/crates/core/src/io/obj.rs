//! Minimal Wavefront OBJ: `v` and `f` records only.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{TriMesh, Vec3};

/// Writes vertices with shortest round-trip float formatting and 1-based
/// triangle indices.
pub fn mesh_to_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(32 * (mesh.vertices.len() + mesh.faces.len()));
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

fn parse_index(token: &str, count: usize, line: usize) -> Result<usize> {
    let first = token.split('/').next().unwrap_or("");
    let i: i64 = first
        .parse()
        .map_err(|_| Error::format(format!("obj line {line}: bad face index `{token}`")))?;
    // negative indices count back from the most recent vertex
    let idx = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || idx < 0 || idx as usize >= count {
        return Err(Error::format(format!("obj line {line}: face index {i} out of range (have {count} vertices)")));
    }
    Ok(idx as usize)
}

/// Parses `v` and `f` records; polygons are fan-triangulated and other
/// record types are ignored.
pub fn mesh_from_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tok = content.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| Error::format(format!("obj line {line}: bad coordinate `{t}`"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 || !c.iter().all(|x| x.is_finite()) {
                    return Err(Error::format(format!("obj line {line}: vertex needs 3 finite coordinates")));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tok.map(|t| parse_index(t, vertices.len(), line)).collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::format(format!("obj line {line}: face needs at least 3 vertices")));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(Error::format("obj has no vertices"));
    }
    Ok(TriMesh::new(vertices, faces))
}

pub fn save_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    std::fs::write(path, mesh_to_obj(mesh))?;
    Ok(())
}

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    mesh_from_obj(&std::fs::read_to_string(path)?)
}
