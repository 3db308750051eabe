use super::{LandmarkEmbedding, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Evaluates barycentric landmark embeddings on a mesh.
pub fn embed_landmarks(mesh: &TriMesh, table: &[LandmarkEmbedding]) -> Result<Vec<Vec3>> {
    table
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let f = mesh.faces.get(l.face).ok_or_else(|| {
                Error::contract(format!("landmark {k} references face {} of {}", l.face, mesh.faces.len()))
            })?;
            let mut p = Vec3::zeros();
            for (b, &vi) in l.bary.iter().zip(f) {
                let v = mesh.vertices.get(vi).ok_or_else(|| {
                    Error::contract(format!("landmark {k}: face vertex {vi} out of range"))
                })?;
                p += *b * v;
            }
            Ok(p)
        })
        .collect()
}

/// Adds the vertex gradient implied by `grad_landmarks` into `grad_vertices`.
pub fn embed_landmarks_backward(
    mesh: &TriMesh,
    table: &[LandmarkEmbedding],
    grad_landmarks: &[Vec3],
    grad_vertices: &mut [Vec3],
) {
    for (l, g) in table.iter().zip(grad_landmarks) {
        for (b, &vi) in l.bary.iter().zip(&mesh.faces[l.face]) {
            grad_vertices[vi] += *b * g;
        }
    }
}
