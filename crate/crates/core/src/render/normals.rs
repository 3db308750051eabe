use crate::model::{TriMesh, Vec3};

/// Unit vertex normals from area-weighted face normals.
#[derive(Debug, Clone)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    /// Vertices with no incident area; their normal is reported as zero.
    pub degenerate: Vec<usize>,
    accumulated: Vec<Vec3>,
}

pub fn vertex_normals(mesh: &TriMesh) -> VertexNormals {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    for &[a, b, c] in &mesh.faces {
        let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        // |cross| = 2·area, so summing cross products is area weighting
        let n = (pb - pa).cross(&(pc - pa));
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    let mut degenerate = Vec::new();
    let normals = acc
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let len = m.norm();
            if len > 0.0 {
                m / len
            } else {
                degenerate.push(i);
                Vec3::zeros()
            }
        })
        .collect();
    VertexNormals { normals, degenerate, accumulated: acc }
}

impl VertexNormals {
    /// Pulls a gradient on the unit normals back to vertex positions.
    pub fn backward(&self, mesh: &TriMesh, grad_normals: &[Vec3]) -> Vec<Vec3> {
        let g_acc: Vec<Vec3> = self
            .accumulated
            .iter()
            .zip(&self.normals)
            .zip(grad_normals)
            .map(|((m, n), g)| {
                let len = m.norm();
                if len > 0.0 {
                    (g - n * n.dot(g)) / len
                } else {
                    Vec3::zeros()
                }
            })
            .collect();
        let mut out = vec![Vec3::zeros(); mesh.vertices.len()];
        for &[a, b, c] in &mesh.faces {
            let g = g_acc[a] + g_acc[b] + g_acc[c];
            if g == Vec3::zeros() {
                continue;
            }
            let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            let u = pb - pa;
            let w = pc - pa;
            let gu = w.cross(&g);
            let gw = g.cross(&u);
            out[b] += gu;
            out[c] += gw;
            out[a] -= gu + gw;
        }
        out
    }
}
