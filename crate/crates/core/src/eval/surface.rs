//! Exact closest-point queries against a triangle mesh.

use super::{umeyama_align, RigidTransform};
use crate::error::{ensure, Result};
use crate::exec::ExecMode;
use crate::model::{TriMesh, Vec3};

/// Closest point to `p` on triangle `abc` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Squared distance from `p` to face `f` of `mesh`, and the closest point.
#[inline]
pub fn face_distance_sq(mesh: &TriMesh, f: usize, p: &Vec3) -> (f64, Vec3) {
    let [i, j, k] = mesh.faces[f];
    let q = closest_point_on_triangle(p, &mesh.vertices[i], &mesh.vertices[j], &mesh.vertices[k]);
    ((p - q).norm_squared(), q)
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: Vec3::repeat(f64::INFINITY), hi: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for c in 0..3 {
            let g = (self.lo[c] - p[c]).max(p[c] - self.hi[c]).max(0.0);
            d += g * g;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bbox: Aabb, start: usize, end: usize },
    Split { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Split { bbox, .. } => bbox,
        }
    }
}

const LEAF_SIZE: usize = 8;

/// Axis-aligned bounding-box hierarchy over the faces of a mesh. Queries
/// are exact: a subtree is skipped only when its box is provably farther
/// than the best face found so far.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    mesh: TriMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub distance: f64,
    pub point: Vec3,
    pub face: usize,
}

impl SurfaceIndex {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        ensure(!mesh.faces.is_empty(), || "surface queries need a mesh with at least one face".into())?;
        mesh.validate()?;
        let boxes: Vec<Aabb> = mesh
            .faces
            .iter()
            .map(|f| {
                let mut b = Aabb::empty();
                for &i in f {
                    b.grow(&mesh.vertices[i]);
                }
                b
            })
            .collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| (b.lo + b.hi) * 0.5).collect();
        let mut index = SurfaceIndex { mesh: mesh.clone(), order: (0..mesh.faces.len()).collect(), nodes: Vec::new() };
        index.build(0, mesh.faces.len(), &boxes, &centers);
        Ok(index)
    }

    fn build(&mut self, start: usize, end: usize, boxes: &[Aabb], centers: &[Vec3]) -> usize {
        let mut bbox = Aabb::empty();
        for &f in &self.order[start..end] {
            bbox.merge(&boxes[f]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bbox, start, end });
            return id;
        }
        self.nodes.push(Node::Leaf { bbox, start, end });
        let extent = bbox.hi - bbox.lo;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| centers[a][axis].total_cmp(&centers[b][axis]).then(a.cmp(&b)));
        let left = self.build(start, mid, boxes, centers);
        let right = self.build(mid, end, boxes, centers);
        self.nodes[id] = Node::Split { bbox, left, right };
        id
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// Closest point on the surface; ties go to the lowest face index.
    pub fn closest(&self, p: &Vec3) -> SurfaceHit {
        let mut best = (f64::INFINITY, Vec3::zeros(), usize::MAX);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            // the box distance can round above the true face distance, so
            // prune with a relative margin
            if node.bbox().distance_sq(p) > best.0 * (1.0 + 1e-9) {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[*start..*end] {
                        let (d2, q) = face_distance_sq(&self.mesh, f, p);
                        if d2 < best.0 || (d2 == best.0 && f < best.2) {
                            best = (d2, q, f);
                        }
                    }
                }
                Node::Split { left, right, .. } => {
                    let dl = self.nodes[*left].bbox().distance_sq(p);
                    let dr = self.nodes[*right].bbox().distance_sq(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        SurfaceHit { distance: best.0.sqrt(), point: best.1, face: best.2 }
    }
}

/// Distance from each point to the closest point on any triangle of `mesh`.
pub fn point_to_surface(points: &[Vec3], mesh: &TriMesh) -> Result<Vec<f64>> {
    point_to_surface_with(points, mesh, ExecMode::default())
}

pub fn point_to_surface_with(points: &[Vec3], mesh: &TriMesh, exec: ExecMode) -> Result<Vec<f64>> {
    ensure(!points.is_empty(), || "point_to_surface needs at least one query point".into())?;
    let index = SurfaceIndex::new(mesh)?;
    Ok(exec.map(points.len(), |i| index.closest(&points[i]).distance))
}

/// Mean squared closest-point distance from `scan` to `index`'s surface
/// moved by `t`.
fn icp_objective(index: &SurfaceIndex, scan: &[Vec3], t: &RigidTransform, exec: ExecMode) -> (f64, Vec<Vec3>) {
    let inv = t.inverse();
    let hits = exec.map(scan.len(), |i| index.closest(&inv.apply(&scan[i])));
    let objective = hits.iter().map(|h| h.distance * h.distance).sum::<f64>() / scan.len() as f64;
    (objective, hits.into_iter().map(|h| h.point).collect())
}

/// Refines `init` (mapping `pred` onto the scan) by alternating
/// closest-point correspondences and closed-form rigid alignment. Each
/// accepted iteration does not increase the mean squared distance.
pub fn icp_refine(pred: &TriMesh, scan: &[Vec3], init: &RigidTransform, iters: usize) -> Result<RigidTransform> {
    ensure(!scan.is_empty(), || "icp needs a non-empty scan".into())?;
    init.validate()?;
    if iters == 0 {
        return Ok(init.clone());
    }
    let index = SurfaceIndex::new(pred)?;
    let exec = ExecMode::default();
    let mut current = init.clone();
    let (mut objective, mut corr) = icp_objective(&index, scan, &current, exec);
    for _ in 0..iters {
        if objective == 0.0 {
            break;
        }
        let next = match umeyama_align(&corr, scan, current.scale.is_some()) {
            Ok(t) => t,
            Err(_) => break,
        };
        let (obj, c) = icp_objective(&index, scan, &next, exec);
        if obj > objective {
            break;
        }
        let stalled = objective - obj <= 1e-15 * objective;
        current = next;
        objective = obj;
        corr = c;
        if stalled {
            break;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], mesh: &TriMesh) -> Vec<f64> {
        points
            .iter()
            .map(|p| {
                (0..mesh.faces.len()).map(|f| face_distance_sq(mesh, f, p).0).fold(f64::INFINITY, f64::min).sqrt()
            })
            .collect()
    }

    #[test]
    fn closest_point_regions() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let q = |p: Vec3| closest_point_on_triangle(&p, &a, &b, &c);
        assert!((q(Vec3::new(0.2, 0.2, 3.0)) - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(q(Vec3::new(-1.0, -1.0, 0.0)), a);
        assert_eq!(q(Vec3::new(2.0, -0.5, 0.0)), b);
        assert_eq!(q(Vec3::new(-0.5, 2.0, 0.0)), c);
        assert_eq!(q(Vec3::new(0.5, -1.0, 0.0)), Vec3::new(0.5, 0.0, 0.0));
        let e = q(Vec3::new(1.0, 1.0, 0.0));
        assert!((e - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn perpendicular_height() {
        let mesh = TriMesh::new(
            vec![Vec3::new(-100.0, -100.0, 0.0), Vec3::new(100.0, -100.0, 0.0), Vec3::new(0.0, 100.0, 0.0)],
            vec![[0, 1, 2]],
        );
        let d = point_to_surface(&[Vec3::new(1.0, 2.0, 7.5)], &mesh).unwrap();
        assert_eq!(d, vec![7.5]);
    }

    #[test]
    fn vertices_are_on_surface() {
        let mesh = synth_model(2, 162).unwrap().template_mesh();
        let d = point_to_surface(&mesh.vertices, &mesh).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn index_matches_exhaustive_search() {
        let mesh = synth_model(3, 642).unwrap().template_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0)))
            .collect();
        assert_eq!(point_to_surface(&pts, &mesh).unwrap(), brute(&pts, &mesh));
    }

    #[test]
    fn empty_inputs_error() {
        let mesh = synth_model(2, 162).unwrap().template_mesh();
        assert!(point_to_surface(&[], &mesh).is_err());
        let empty = TriMesh::new(vec![], vec![]);
        assert!(point_to_surface(&[Vec3::zeros()], &empty).is_err());
    }
}
