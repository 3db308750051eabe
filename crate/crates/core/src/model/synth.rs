//! Deterministic synthetic head asset used in place of licensed model data.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use super::{
    Basis, LandmarkEmbedding, ModelAsset, ModelDims, Vec3, NUM_FACE_LANDMARKS, NUM_JOINTS,
};
use crate::error::{Error, Result};

const HEAD_RADII: [f64; 3] = [75.0, 92.0, 88.0];
const MAX_LEVEL: usize = 6;

/// Builds a head-like asset from a subdivided icosphere.
///
/// The smallest subdivision level with at least `v_target` vertices is used
/// (642 vertices at level 3, 2562 at level 4, ...). Dimensions are the
/// default (100, 50, 50).
pub fn synth_model(seed: u64, v_target: usize) -> Result<ModelAsset> {
    if v_target < 100 {
        return Err(Error::contract(format!("V_target must be >= 100, got {v_target}")));
    }
    let level = (0..=MAX_LEVEL)
        .find(|&l| icosphere_vertex_count(l) >= v_target)
        .ok_or_else(|| {
            Error::contract(format!(
                "V_target {v_target} exceeds the largest supported sphere ({} vertices)",
                icosphere_vertex_count(MAX_LEVEL)
            ))
        })?;
    let dims = ModelDims::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (dirs, faces) = icosphere(level);
    let template: Vec<Vec3> = dirs.iter().map(head_surface).collect();
    let n = template.len();

    let shape_basis = smooth_basis(&mut rng, &dirs, dims.shape, 3, Bumps::RadialMirrored, |k| 4.0 / (1.0 + k as f64 / 8.0), |_| 1.0);
    let expression_basis = smooth_basis(
        &mut rng,
        &dirs,
        dims.expression,
        3,
        Bumps::Mirrored,
        |k| 2.5 / (1.0 + k as f64 / 8.0),
        |u| smoothstep(-0.3, 0.3, u.z) * smoothstep(0.35, -0.1, u.y),
    );
    let mut shape_basis = shape_basis;
    let mut expression_basis = expression_basis;
    remove_rigid_modes(&template, &mut shape_basis);
    remove_rigid_modes(&template, &mut expression_basis);
    let albedo_basis = smooth_basis(&mut rng, &dirs, dims.albedo, 3, Bumps::Free, |k| 0.05 / (1.0 + k as f64 / 8.0), |_| 1.0);

    let albedo_mean = dirs
        .iter()
        .map(|u| {
            let lip = 0.12 * (-((u - Vec3::new(0.0, -0.45, 0.89).normalize()).norm_squared()) / 0.01).exp();
            [0.78 - 0.02 * u.y, 0.6 - lip - 0.03 * u.y, 0.5 - lip]
        })
        .collect();

    let joints = [Vec3::new(0.0, -70.0, -15.0), Vec3::new(0.0, -22.0, -12.0)];
    let skinning_weights = dirs
        .iter()
        .map(|u| {
            let jaw = smoothstep(-0.1, -0.45, u.y) * smoothstep(-0.2, 0.3, u.z);
            let mut w = [0.0; NUM_JOINTS];
            w[0] = 1.0 - jaw;
            w[1] = jaw;
            w
        })
        .collect();

    let landmarks = landmark_directions()
        .iter()
        .map(|d| cast_landmark(&template, &faces, d))
        .collect::<Result<Vec<_>>>()?;

    let mut asset = ModelAsset {
        template,
        faces,
        shape_basis,
        expression_basis,
        albedo_mean,
        albedo_basis,
        joints,
        skinning_weights,
        landmarks,
        regions: BTreeMap::new(),
    };

    let lm = crate::model::embed_landmarks(&asset.template_mesh(), &asset.landmarks)?;
    let brow_y = lm[17..27].iter().map(|p| p.y).sum::<f64>() / 10.0;
    let chin_y = lm[8].y;
    let face: Vec<usize> = (0..n)
        .filter(|&i| {
            let p = asset.template[i];
            dirs[i].z > 0.35 && p.y <= brow_y + 8.0 && p.y >= chin_y - 6.0
        })
        .collect();
    let upper_head: Vec<usize> = (0..n).filter(|&i| asset.template[i].y > brow_y).collect();
    let scalp: Vec<usize> = (0..n).filter(|&i| dirs[i].y > 0.75).collect();
    asset.regions.insert("face".into(), face);
    asset.regions.insert("upper_head".into(), upper_head);
    asset.regions.insert("scalp".into(), scalp);
    asset.validate()?;
    Ok(asset)
}

/// Replaces the shape and expression bases by an orthonormal basis of their
/// joint column span, with infinitesimal rigid motions of the template
/// projected out first.
pub fn orthonormalize_geometry_bases(model: &mut ModelAsset) -> Result<()> {
    let n = model.num_vertices();
    let (ns, ne) = (model.shape_basis.cols(), model.expression_basis.cols());
    let rows = 3 * n;
    let rigid_q = rigid_motion_basis(&model.template);

    let mut a = DMatrix::<f64>::zeros(rows, ns + ne);
    for r in 0..rows {
        for k in 0..ns {
            a[(r, k)] = model.shape_basis.get(r, k);
        }
        for k in 0..ne {
            a[(r, ns + k)] = model.expression_basis.get(r, k);
        }
    }
    let proj = &rigid_q * (rigid_q.transpose() * &a);
    a -= proj;
    let qr = a.qr();
    let r = qr.r();
    let min_diag = r.diagonal().iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if min_diag < 1e-9 {
        return Err(Error::Degenerate("geometry bases are rank deficient".into()));
    }
    let q = qr.q();
    let mut s = Basis::zeros(rows, ns);
    let mut e = Basis::zeros(rows, ne);
    for row in 0..rows {
        for k in 0..ns {
            s.set(row, k, q[(row, k)]);
        }
        for k in 0..ne {
            e.set(row, k, q[(row, ns + k)]);
        }
    }
    model.shape_basis = s;
    model.expression_basis = e;
    Ok(())
}

/// Orthonormal basis (3V × 6) of the infinitesimal rigid motions of `template`.
fn rigid_motion_basis(template: &[Vec3]) -> DMatrix<f64> {
    let n = template.len();
    let centroid = template.iter().sum::<Vec3>() / n as f64;
    let mut rigid = DMatrix::<f64>::zeros(3 * n, 6);
    for (i, v) in template.iter().enumerate() {
        let d = v - centroid;
        for c in 0..3 {
            rigid[(3 * i + c, c)] = 1.0;
        }
        for (a, axis) in [Vec3::x(), Vec3::y(), Vec3::z()].iter().enumerate() {
            let m = axis.cross(&d);
            for c in 0..3 {
                rigid[(3 * i + c, 3 + a)] = m[c];
            }
        }
    }
    rigid.qr().q()
}

/// Removes the rigid-motion component from every column so that shape and
/// expression cannot mimic a pose or camera change.
fn remove_rigid_modes(template: &[Vec3], basis: &mut Basis) {
    let q = rigid_motion_basis(template);
    let rows = 3 * template.len();
    for k in 0..basis.cols() {
        let col = DVector::from_iterator(rows, (0..rows).map(|r| basis.get(r, k)));
        let resid = &col - &q * (q.transpose() * &col);
        for r in 0..rows {
            basis.set(r, k, resid[r]);
        }
    }
}

fn mirror(v: &Vec3) -> Vec3 {
    Vec3::new(-v.x, v.y, v.z)
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn head_surface(u: &Vec3) -> Vec3 {
    let nose_dir = Vec3::new(0.0, -0.12, 1.0).normalize();
    let nose = 0.14 * (-(u - nose_dir).norm_squared() / 0.012).exp();
    let jaw_narrow = 1.0 - 0.22 * smoothstep(0.0, -0.8, u.y);
    let back_flat = 1.0 - 0.05 * smoothstep(0.0, -0.9, u.z);
    let f = 1.0 + nose;
    Vec3::new(
        HEAD_RADII[0] * u.x * jaw_narrow * f,
        HEAD_RADII[1] * u.y * f,
        HEAD_RADII[2] * u.z * back_flat * f,
    )
}

#[derive(Clone, Copy, PartialEq)]
enum Bumps {
    /// Independent random vectors (used for colors).
    Free,
    /// Random vectors, mirrored across x = 0.
    Mirrored,
    /// Displacement along the sphere direction only, mirrored across x = 0.
    /// Tangential sliding is invisible in images, so shape stays off it.
    RadialMirrored,
}

/// Random smooth vector (or color) fields on the sphere built from a few
/// Gaussian bumps, one per column, scaled to the requested RMS amplitude.
fn smooth_basis(
    rng: &mut ChaCha8Rng,
    dirs: &[Vec3],
    cols: usize,
    bumps: usize,
    kind: Bumps,
    amplitude: impl Fn(usize) -> f64,
    mask: impl Fn(&Vec3) -> f64,
) -> Basis {
    let n = dirs.len();
    let mut b = Basis::zeros(3 * n, cols);
    for k in 0..cols {
        let width = (0.95f64 * 0.985f64.powi(k as i32)).max(0.35);
        let mut field = vec![Vec3::zeros(); n];
        for _ in 0..bumps {
            let c: [f64; 3] = UnitSphere.sample(rng);
            let c = Vec3::from(c);
            let w = Vec3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for (f, u) in field.iter_mut().zip(dirs) {
                let g = (-(u - c).norm_squared() / (width * width)).exp();
                let gm = (-(u - mirror(&c)).norm_squared() / (width * width)).exp();
                *f += sign
                    * match kind {
                        Bumps::Free => g * w,
                        Bumps::Mirrored => g * w + gm * mirror(&w),
                        Bumps::RadialMirrored => (g + gm) * w.x * u,
                    };
            }
        }
        for (f, u) in field.iter_mut().zip(dirs) {
            *f *= mask(u);
        }
        let rms = (field.iter().map(|f| f.norm_squared()).sum::<f64>() / n as f64).sqrt();
        let scale = if rms > 0.0 { amplitude(k) / rms } else { 0.0 };
        for (i, f) in field.iter().enumerate() {
            for c in 0..3 {
                b.set(3 * i + c, k, f[c] * scale);
            }
        }
    }
    b
}

pub(crate) fn icosphere_vertex_count(level: usize) -> usize {
    10 * 4usize.pow(level as u32) + 2
}

fn icosphere(level: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Landmark directions from the head center: 68 facial points in the usual
/// contour/brow/nose/eye/mouth order followed by three scalp points.
fn landmark_directions() -> Vec<Vec3> {
    use std::f64::consts::PI;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(NUM_FACE_LANDMARKS);
    for i in 0..17 {
        let a = PI * i as f64 / 16.0;
        pts.push((-0.92 * a.cos(), 0.1 - 1.05 * a.sin()));
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let t = i as f64 / 4.0;
            let x = if side < 0.0 { -0.8 + 0.62 * t } else { 0.18 + 0.62 * t };
            let arch = 0.06 * (PI * t).sin();
            pts.push((x, 0.5 + arch));
        }
    }
    for i in 0..4 {
        pts.push((0.0, 0.32 - 0.16 * i as f64));
    }
    for i in 0..5 {
        pts.push((-0.2 + 0.1 * i as f64, -0.24 - 0.03 * (1.0 - ((i as f64 - 2.0) / 2.0).powi(2))));
    }
    for cx in [-0.42, 0.42] {
        for i in 0..6 {
            let a = PI - 2.0 * PI * i as f64 / 6.0;
            pts.push((cx + 0.17 * a.cos(), 0.26 + 0.07 * a.sin()));
        }
    }
    for i in 0..12 {
        let a = PI - 2.0 * PI * i as f64 / 12.0;
        pts.push((0.4 * a.cos(), -0.56 + 0.15 * a.sin()));
    }
    for i in 0..8 {
        let a = PI - 2.0 * PI * i as f64 / 8.0;
        pts.push((0.25 * a.cos(), -0.56 + 0.05 * a.sin()));
    }
    debug_assert_eq!(pts.len(), NUM_FACE_LANDMARKS);
    let mut dirs: Vec<Vec3> = pts
        .iter()
        .map(|&(x, y)| Vec3::new(0.85 * x, 0.72 * y, 1.0).normalize())
        .collect();
    dirs.push(Vec3::new(-0.45, 1.0, 0.35).normalize());
    dirs.push(Vec3::new(0.0, 1.0, 0.55).normalize());
    dirs.push(Vec3::new(0.45, 1.0, 0.35).normalize());
    dirs
}

/// Intersects the ray from the origin along `dir` with the mesh.
fn cast_landmark(verts: &[Vec3], faces: &[[usize; 3]], dir: &Vec3) -> Result<LandmarkEmbedding> {
    let mut best: Option<(f64, LandmarkEmbedding)> = None;
    for (fi, f) in faces.iter().enumerate() {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            continue;
        }
        let s = -a;
        let u = s.dot(&p) / det;
        let q = s.cross(&e1);
        let v = dir.dot(&q) / det;
        let t = e2.dot(&q) / det;
        let tol = 1e-12;
        if u < -tol || v < -tol || u + v > 1.0 + tol || t <= 0.0 {
            continue;
        }
        if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
            let mut bary = [1.0 - u - v, u, v].map(|x: f64| x.max(0.0));
            let s: f64 = bary.iter().sum();
            bary.iter_mut().for_each(|x| *x /= s);
            best = Some((t, LandmarkEmbedding { face: fi, bary }));
        }
    }
    best.map(|(_, l)| l).ok_or_else(|| Error::Degenerate("landmark ray missed the template".into()))
}
