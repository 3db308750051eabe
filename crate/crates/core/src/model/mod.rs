//! Linear morphable head model: asset container, parameter vector, mesh
//! decoding and the deterministic synthetic asset generator.

mod albedo;
mod decode;
mod landmarks;
mod params;
mod rotation;
mod synth;

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{ensure, Result};

pub use albedo::{decode_albedo, decode_albedo_unclamped};
pub use decode::{decode_geometry, GeometryForward};
pub use landmarks::{embed_landmarks, embed_landmarks_backward};
pub use params::{HeadParams, ModelDims, ParamGroup};
pub use rotation::{rodrigues, rodrigues_with_jacobian};
pub use synth::{orthonormalize_geometry_bases, synth_model};

pub type Vec3 = Vector3<f64>;

/// Number of skeleton joints: global root and jaw.
pub const NUM_JOINTS: usize = 2;
/// Number of embedded landmarks (68 facial + 3 on top of the scalp).
pub const NUM_LANDMARKS: usize = 71;
/// Number of facial landmarks; the remaining three sit on the scalp.
pub const NUM_FACE_LANDMARKS: usize = 68;

/// Dense row-major basis with `rows = 3·V` and one column per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Basis {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure(data.len() == rows * cols, || {
            format!("basis data length {} != {rows}x{cols}", data.len())
        })?;
        Ok(Basis { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Basis { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    /// `out[r] += Σ_k B[r,k]·coeffs[k]`.
    pub fn accumulate(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        if self.cols == 0 {
            return;
        }
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(coeffs).map(|(b, c)| b * c).sum::<f64>();
        }
    }

    /// `Bᵀ·g`.
    pub fn transpose_apply(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        if self.cols == 0 {
            return out;
        }
        for (gr, row) in g.iter().zip(self.data.chunks_exact(self.cols)) {
            if *gr == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(row) {
                *o += gr * b;
            }
        }
        out
    }
}

/// Barycentric embedding of a landmark on a mesh face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkEmbedding {
    pub face: usize,
    pub bary: [f64; 3],
}

/// Triangle mesh in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Optional per-vertex RGB in [0, 1].
    pub colors: Option<Vec<[f64; 3]>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        TriMesh { vertices, faces, colors: None }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            ensure(f.iter().all(|&v| v < n), || {
                format!("face {i} references a vertex outside [0, {n})")
            })?;
        }
        if let Some(c) = &self.colors {
            ensure(c.len() == n, || format!("{} colors for {n} vertices", c.len()))?;
        }
        ensure(self.vertices.iter().all(|v| v.iter().all(|x| x.is_finite())), || {
            "mesh has non-finite vertex coordinates".into()
        })
    }

    /// Twice the face area (norm of the edge cross product).
    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn same_topology(&self, other: &TriMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    /// Axis-aligned bounding box diagonal length.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        if self.vertices.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }
}

/// Linear morphable head model.
///
/// Basis rows are laid out vertex-major: row `3·v + c` holds coordinate (or
/// color channel) `c` of vertex `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAsset {
    pub template: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub shape_basis: Basis,
    pub expression_basis: Basis,
    pub albedo_mean: Vec<[f64; 3]>,
    pub albedo_basis: Basis,
    pub joints: [Vec3; NUM_JOINTS],
    pub skinning_weights: Vec<[f64; NUM_JOINTS]>,
    pub landmarks: Vec<LandmarkEmbedding>,
    pub regions: BTreeMap<String, Vec<usize>>,
}

impl ModelAsset {
    pub fn num_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            shape: self.shape_basis.cols(),
            expression: self.expression_basis.cols(),
            albedo: self.albedo_basis.cols(),
        }
    }

    pub fn template_mesh(&self) -> TriMesh {
        TriMesh::new(self.template.clone(), self.faces.clone())
    }

    pub fn region(&self, name: &str) -> Result<&[usize]> {
        self.regions
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| crate::Error::contract(format!("model has no region named `{name}`")))
    }

    /// Checks every structural invariant of the asset.
    pub fn validate(&self) -> Result<()> {
        let v = self.num_vertices();
        for (i, f) in self.faces.iter().enumerate() {
            ensure(f.iter().all(|&k| k < v), || format!("face {i} index out of [0, {v})"))?;
        }
        for (name, b) in [
            ("shape_basis", &self.shape_basis),
            ("expression_basis", &self.expression_basis),
            ("albedo_basis", &self.albedo_basis),
        ] {
            ensure(b.rows() == 3 * v, || {
                format!("{name} has {} rows, expected 3·V = {}", b.rows(), 3 * v)
            })?;
        }
        ensure(self.albedo_mean.len() == v, || "albedo_mean length != V".into())?;
        ensure(self.skinning_weights.len() == v, || "skinning_weights length != V".into())?;
        for (i, w) in self.skinning_weights.iter().enumerate() {
            let s: f64 = w.iter().sum();
            ensure((s - 1.0).abs() <= 1e-9 && w.iter().all(|x| *x >= 0.0), || {
                format!("skinning weights of vertex {i} sum to {s}")
            })?;
        }
        ensure(self.landmarks.len() == NUM_LANDMARKS, || {
            format!("expected {NUM_LANDMARKS} landmarks, found {}", self.landmarks.len())
        })?;
        for (i, l) in self.landmarks.iter().enumerate() {
            ensure(l.face < self.faces.len(), || format!("landmark {i} face out of range"))?;
            let s: f64 = l.bary.iter().sum();
            ensure((s - 1.0).abs() <= 1e-9 && l.bary.iter().all(|b| *b >= 0.0), || {
                format!("landmark {i} barycentric coordinates {:?} invalid", l.bary)
            })?;
        }
        for required in ["face", "upper_head"] {
            ensure(self.regions.contains_key(required), || {
                format!("missing required region `{required}`")
            })?;
        }
        for (name, idx) in &self.regions {
            ensure(idx.iter().all(|&k| k < v), || format!("region `{name}` index out of range"))?;
        }
        let all_finite = self.template.iter().all(|p| p.iter().all(|x| x.is_finite()))
            && self.shape_basis.data().iter().all(|x| x.is_finite())
            && self.expression_basis.data().iter().all(|x| x.is_finite())
            && self.albedo_basis.data().iter().all(|x| x.is_finite());
        ensure(all_finite, || "asset contains non-finite values".into())
    }
}
