//! Benchmarking of predicted meshes: rigid alignment, scan-to-mesh
//! distances, summary statistics, region errors and the refit/edit-transfer
//! pipeline.

mod refit;
mod surface;

pub use refit::{displacement_transfer, refit_model_to_mesh, Refit};
pub use surface::{
    closest_point_on_triangle, icp_refine, point_to_surface, point_to_surface_with, SurfaceHit, SurfaceIndex,
};

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{TriMesh, Vec3};

/// `x ↦ s·R·x + t`, with `s = 1` when `scale` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3], scale: None }
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vec3, scale: Option<f64>) -> Self {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = rotation[(i, j)];
            }
        }
        RigidTransform { rotation: r, translation: [translation.x, translation.y, translation.z], scale }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn translation_vec(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale.unwrap_or(1.0)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.matrix() * p * self.scale_factor() + self.translation_vec()
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        let r = self.matrix() * self.scale_factor();
        let t = self.translation_vec();
        points.iter().map(|p| r * p + t).collect()
    }

    pub fn apply_mesh(&self, mesh: &TriMesh) -> TriMesh {
        TriMesh::new(self.apply_all(&mesh.vertices), mesh.faces.clone())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.matrix().transpose();
        let s = self.scale_factor();
        let t = -(rt * self.translation_vec()) / s;
        RigidTransform::from_parts(&rt, &t, self.scale.map(|s| 1.0 / s))
    }

    /// Rotation angle in degrees.
    pub fn angle_degrees(&self) -> f64 {
        let c = ((self.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    /// Checks orthonormality, `det(R) = +1` (±1e-9) and a positive scale.
    pub fn validate(&self) -> Result<()> {
        let r = self.matrix();
        ensure(r.iter().chain(self.translation.iter()).all(|v| v.is_finite()), || {
            "rigid transform has non-finite entries".into()
        })?;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ensure(ortho <= 1e-9, || format!("rotation is not orthonormal (max deviation {ortho:e})"))?;
        let det = r.determinant();
        ensure((det - 1.0).abs() <= 1e-9, || format!("rotation determinant is {det}, expected +1"))?;
        if let Some(s) = self.scale {
            ensure(s > 0.0 && s.is_finite(), || format!("scale must be > 0, got {s}"))?;
        }
        Ok(())
    }
}

/// Closed-form least-squares alignment of `src` onto `dst` (Umeyama 1991).
///
/// With `with_scale` the result carries a uniform scale; otherwise it is a
/// proper rigid motion.
pub fn umeyama_align(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<RigidTransform> {
    ensure(src.len() == dst.len(), || format!("{} source points for {} targets", src.len(), dst.len()))?;
    ensure(src.len() >= 3, || format!("alignment needs at least 3 point pairs, got {}", src.len()))?;
    ensure(src.iter().chain(dst).all(|p| p.iter().all(|v| v.is_finite())), || {
        "alignment input contains non-finite coordinates".into()
    })?;
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vec3>() / n;
    let mu_d = dst.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let a = s - mu_s;
        cov += (d - mu_d) * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let svd = SVD::new(cov, true, true);
    let sv = svd.singular_values;
    let top = sv.max();
    let rank = sv.iter().filter(|&&x| x > top * 1e-12).count();
    if top <= 0.0 || rank < 2 || var_s <= 0.0 {
        return Err(Error::Degenerate(format!(
            "point set covariance has rank {rank} (< 2); points are coincident or collinear"
        )));
    }
    if src == dst {
        return Ok(RigidTransform { scale: with_scale.then_some(1.0), ..RigidTransform::identity() });
    }
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let mut r = u * sign * vt;
    // re-orthonormalize against rounding in the SVD factors
    let polar = SVD::new(r, true, true);
    r = polar.u.unwrap() * polar.v_t.unwrap();
    let s = if with_scale { (sv[0] * sign[(0, 0)] + sv[1] * sign[(1, 1)] + sv[2] * sign[(2, 2)]) / var_s } else { 1.0 };
    let t = mu_d - r * mu_s * s;
    Ok(RigidTransform::from_parts(&r, &t, with_scale.then_some(s)))
}

/// Root-mean-square distance between corresponding points.
pub fn rms_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold_mm: f64,
    pub fraction: f64,
}

/// Median (midpoint for even counts), mean, population standard deviation
/// and cumulative error curve of a distance list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub curve: Vec<CurvePoint>,
}

pub const CURVE_SAMPLES: usize = 100;

pub fn error_stats(distances: &[f64]) -> Result<ErrorStats> {
    ensure(!distances.is_empty(), || "error statistics need at least one distance".into())?;
    ensure(distances.iter().all(|d| d.is_finite() && *d >= 0.0), || {
        "distances must be finite and non-negative".into()
    })?;
    let n = distances.len();
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let mean = distances.iter().sum::<f64>() / n as f64;
    let std = (distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64).sqrt();
    let max = sorted[n - 1];
    let curve = (0..CURVE_SAMPLES)
        .map(|k| {
            let threshold = if CURVE_SAMPLES > 1 { max * k as f64 / (CURVE_SAMPLES - 1) as f64 } else { max };
            let within = sorted.partition_point(|d| *d <= threshold);
            CurvePoint { threshold_mm: threshold, fraction: within as f64 / n as f64 }
        })
        .collect();
    Ok(ErrorStats { median, mean, std, curve })
}

/// How `pred` is placed onto `gt` before measuring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    None,
    /// Rigid Umeyama on every vertex (same topology).
    AllVertices,
    /// Rigid Umeyama on the listed vertex indices, e.g. landmark vertices.
    Vertices(Vec<usize>),
    Fixed(RigidTransform),
}

impl Alignment {
    pub fn label(&self) -> &'static str {
        match self {
            Alignment::None => "none",
            Alignment::AllVertices => "umeyama-all-vertices",
            Alignment::Vertices(_) => "umeyama-vertex-subset",
            Alignment::Fixed(_) => "fixed",
        }
    }

    /// Transform mapping `pred` onto `gt`.
    pub fn resolve(&self, pred: &TriMesh, gt: &TriMesh) -> Result<RigidTransform> {
        match self {
            Alignment::None => Ok(RigidTransform::identity()),
            Alignment::Fixed(t) => {
                t.validate()?;
                Ok(t.clone())
            }
            Alignment::AllVertices => {
                ensure(pred.vertices.len() == gt.vertices.len(), || {
                    "vertex alignment needs meshes with the same vertex count".into()
                })?;
                umeyama_align(&pred.vertices, &gt.vertices, false)
            }
            Alignment::Vertices(idx) => {
                let n = pred.vertices.len().min(gt.vertices.len());
                ensure(idx.iter().all(|&i| i < n), || "alignment vertex index out of range".into())?;
                let a: Vec<Vec3> = idx.iter().map(|&i| pred.vertices[i]).collect();
                let b: Vec<Vec3> = idx.iter().map(|&i| gt.vertices[i]).collect();
                umeyama_align(&a, &b, false)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionError {
    pub stats: ErrorStats,
    pub mean_square: f64,
    pub distances: Vec<f64>,
    pub transform: RigidTransform,
}

/// Per-vertex error on `region` after aligning `pred` to `gt`.
pub fn region_error(pred: &TriMesh, gt: &TriMesh, region: &[usize], alignment: &Alignment) -> Result<RegionError> {
    ensure(pred.same_topology(gt), || "region error needs meshes with identical topology".into())?;
    ensure(!region.is_empty(), || "region is empty".into())?;
    ensure(region.iter().all(|&i| i < gt.vertices.len()), || {
        format!("region index out of range for a mesh with {} vertices", gt.vertices.len())
    })?;
    let transform = alignment.resolve(pred, gt)?;
    let distances: Vec<f64> = region.iter().map(|&i| (transform.apply(&pred.vertices[i]) - gt.vertices[i]).norm()).collect();
    let mean_square = distances.iter().map(|d| d * d).sum::<f64>() / distances.len() as f64;
    Ok(RegionError { stats: error_stats(&distances)?, mean_square, distances, transform })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Scan-to-mesh distances from every ground-truth point to the aligned
    /// predicted surface.
    NowStyle,
    /// Per-vertex distances on a vertex region of a same-topology mesh.
    FullheadRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub alignment: String,
    pub icp_iterations: usize,
    pub transform: RigidTransform,
    /// One distance array per scan, in mm.
    pub distances: Vec<Vec<f64>>,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub std_convention: String,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub alignment: Alignment,
    pub icp_iterations: usize,
    /// Vertex region for [`Protocol::FullheadRegion`].
    pub region: Option<Vec<usize>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { alignment: Alignment::AllVertices, icp_iterations: 0, region: None }
    }
}

impl EvalReport {
    fn from_distances(
        protocol: Protocol,
        options: &EvalOptions,
        transform: RigidTransform,
        distances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let all: Vec<f64> = distances.iter().flatten().copied().collect();
        let stats = error_stats(&all)?;
        Ok(EvalReport {
            protocol,
            alignment: options.alignment.label().into(),
            icp_iterations: options.icp_iterations,
            transform,
            distances,
            median: stats.median,
            mean: stats.mean,
            std: stats.std,
            std_convention: "population".into(),
            curve: stats.curve,
        })
    }

    /// Recomputes the statistics from the stored distances (±1e-12).
    pub fn validate(&self) -> Result<()> {
        let all: Vec<f64> = self.distances.iter().flatten().copied().collect();
        let stats = error_stats(&all)?;
        for (name, stored, fresh) in
            [("median", self.median, stats.median), ("mean", self.mean, stats.mean), ("std", self.std, stats.std)]
        {
            ensure((stored - fresh).abs() <= 1e-12, || {
                format!("report {name} {stored} disagrees with recomputed {fresh}")
            })?;
        }
        ensure(self.curve.len() == stats.curve.len(), || "cumulative curve has the wrong length".into())?;
        Ok(())
    }

    /// `threshold_mm,fraction` rows with a header line.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold_mm,fraction\n");
        for p in &self.curve {
            out.push_str(&format!("{},{}\n", p.threshold_mm, p.fraction));
        }
        out
    }
}

/// Evaluates `pred` against one ground-truth mesh.
pub fn evaluate_mesh(pred: &TriMesh, gt: &TriMesh, protocol: Protocol, options: &EvalOptions) -> Result<EvalReport> {
    pred.validate()?;
    gt.validate()?;
    match protocol {
        Protocol::NowStyle => {
            let mut transform = options.alignment.resolve(pred, gt)?;
            if options.icp_iterations > 0 {
                transform = icp_refine(pred, &gt.vertices, &transform, options.icp_iterations)?;
            }
            let moved = transform.apply_mesh(pred);
            let d = point_to_surface(&gt.vertices, &moved)?;
            EvalReport::from_distances(protocol, options, transform, vec![d])
        }
        Protocol::FullheadRegion => {
            let region = options
                .region
                .clone()
                .unwrap_or_else(|| (0..gt.vertices.len()).collect());
            let r = region_error(pred, gt, &region, &options.alignment)?;
            EvalReport::from_distances(protocol, options, r.transform, vec![r.distances])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn cloud() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 0.0, 1.0),
            Vec3::new(0.0, 7.0, -2.0),
            Vec3::new(3.0, 4.0, 12.0),
            Vec3::new(-5.0, 2.0, 6.0),
        ]
    }

    #[test]
    fn identity_when_equal() {
        let p = cloud();
        let t = umeyama_align(&p, &p, false).unwrap();
        assert_eq!(t, RigidTransform::identity());
        let s = umeyama_align(&p, &p, true).unwrap();
        assert_eq!(s.scale, Some(1.0));
    }

    #[test]
    fn recovers_quarter_turn() {
        let p = cloud();
        let r = Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let q: Vec<Vec3> = p.iter().map(|x| r * x + Vec3::new(1.0, 2.0, 3.0)).collect();
        let t = umeyama_align(&p, &q, false).unwrap();
        assert!(rms_distance(&t.apply_all(&p), &q) <= 1e-9);
        t.validate().unwrap();
    }

    #[test]
    fn collinear_is_degenerate() {
        let p: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(umeyama_align(&p, &p, false), Err(Error::Degenerate(_))));
    }

    #[test]
    fn inverse_round_trip() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        let t = RigidTransform::from_parts(r.matrix(), &Vec3::new(4.0, -1.0, 2.0), Some(1.7));
        let p = Vec3::new(0.5, 3.0, -8.0);
        assert!((t.inverse().apply(&t.apply(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn stats_examples() {
        let s = error_stats(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((s.median, s.mean, s.std), (0.0, 0.0, 0.0));
        let s = error_stats(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.0);
        assert_relative_eq!(s.std, (2.0f64 / 3.0).sqrt(), max_relative = 1e-15);
        assert_eq!(error_stats(&[1.0, 4.0]).unwrap().median, 2.5);
        assert_eq!(s.curve.len(), CURVE_SAMPLES);
        assert_eq!(s.curve.last().unwrap().fraction, 1.0);
        assert!(error_stats(&[]).is_err());
    }

    #[test]
    fn region_offset_without_alignment() {
        let gt = TriMesh::new(cloud(), vec![[0, 1, 2], [1, 3, 2], [2, 3, 4]]);
        let mut pred = gt.clone();
        let dir = Vec3::new(1.0, 2.0, 2.0).normalize();
        for i in [1, 3] {
            pred.vertices[i] += dir * 2.0;
        }
        let r = region_error(&pred, &gt, &[1, 3], &Alignment::None).unwrap();
        assert_relative_eq!(r.stats.mean, 2.0, max_relative = 1e-15);
        assert_relative_eq!(r.mean_square, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn self_evaluation_is_zero() {
        let m = TriMesh::new(cloud(), vec![[0, 1, 2], [1, 3, 2], [2, 3, 4]]);
        for protocol in [Protocol::NowStyle, Protocol::FullheadRegion] {
            let r = evaluate_mesh(&m, &m, protocol, &EvalOptions::default()).unwrap();
            assert_eq!((r.median, r.mean, r.std), (0.0, 0.0, 0.0));
            r.validate().unwrap();
        }
    }
}
