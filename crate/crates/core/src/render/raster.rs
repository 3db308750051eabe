//! Soft silhouette and hard-z color rasterization with analytic gradients.
//!
//! All geometry is evaluated in pixel space: normalized x in [-1, 1] maps to
//! `[0, W]` left to right, normalized y in [-1, 1] maps to `[H, 0]` (row 0 is
//! the top). Pixel centers sit at half-integer coordinates.

use serde::{Deserialize, Serialize};

use super::planes::{ImagePlane, SoftMask};
use crate::error::{ensure, Result};
use crate::exec::ExecMode;
use crate::model::TriMesh;

const TILE: usize = 8;

/// Rasterizer settings. `sigma` is a fraction of the image width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSettings {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    /// Faces farther than `cutoff·σ` (pixels) from a pixel are skipped; their
    /// sigmoid weight there is below `exp(-cutoff)`.
    pub cutoff: f64,
    pub exec: ExecMode,
}

impl RasterSettings {
    pub fn new(width: usize, height: usize, sigma: f64) -> Self {
        RasterSettings { width, height, sigma, cutoff: 14.0, exec: ExecMode::default() }
    }

    fn sigma_px(&self) -> f64 {
        self.sigma * self.width as f64
    }

    fn validate(&self) -> Result<()> {
        ensure(self.sigma > 0.0 && self.sigma.is_finite(), || {
            format!("sigma must be > 0, got {}", self.sigma)
        })?;
        ensure(self.width >= 8 && self.height >= 8, || {
            format!("render size must be at least 8x8, got {}x{}", self.width, self.height)
        })?;
        ensure(self.cutoff > 0.0, || "cutoff must be > 0".into())
    }
}

/// Output of the soft rasterizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOut {
    pub color: ImagePlane,
    pub silhouette: SoftMask,
    /// `-z` of the nearest covering surface in mm (viewer at +z); `+∞` for
    /// background.
    pub depth: Vec<f64>,
    /// Index of the face seen at each pixel center, if any.
    pub face_index: Vec<Option<usize>>,
    /// Projected landmarks in normalized coordinates, when requested.
    pub landmarks: Option<Vec<[f64; 2]>>,
}

/// Gradients of the rasterizer inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrad {
    /// With respect to the projected (normalized) vertex positions.
    pub projected: Vec<[f64; 2]>,
    /// With respect to per-vertex colors.
    pub colors: Vec<[f64; 3]>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn cross(u: [f64; 2], w: [f64; 2]) -> f64 {
    u[0] * w[1] - u[1] * w[0]
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Screen-space triangle with per-edge data cached for pixel queries.
struct FaceGeom {
    corners: [[f64; 2]; 3],
    /// Edge `k` runs from corner `k` to corner `k + 1`.
    edges: [[f64; 2]; 3],
    inv_len2: [f64; 3],
    area: f64,
}

impl FaceGeom {
    fn new(corners: [[f64; 2]; 3]) -> Self {
        let edges = [sub(corners[1], corners[0]), sub(corners[2], corners[1]), sub(corners[0], corners[2])];
        let inv_len2 = edges.map(|e| {
            let l = e[0] * e[0] + e[1] * e[1];
            if l > 0.0 {
                1.0 / l
            } else {
                0.0
            }
        });
        FaceGeom { corners, edges, inv_len2, area: cross(edges[0], sub(corners[2], corners[0])) }
    }
}

/// A face near a pixel: signed distance (positive inside) to the boundary,
/// the closest edge and the unit direction from the closest point to the
/// pixel, plus barycentrics when the pixel center is covered.
struct Hit {
    d: f64,
    edge: usize,
    t: f64,
    u: [f64; 2],
    bary: Option<[f64; 3]>,
}

impl Hit {
    /// Gradient of `d` w.r.t. the three screen-space corners.
    fn grad(&self) -> [[f64; 2]; 3] {
        let sign = if self.bary.is_some() { 1.0 } else { -1.0 };
        let mut g = [[0.0; 2]; 3];
        // moving the closest point q = (1-t)a + t b by δ changes dist by -u·δ
        g[self.edge] = [-sign * (1.0 - self.t) * self.u[0], -sign * (1.0 - self.t) * self.u[1]];
        g[(self.edge + 1) % 3] = [-sign * self.t * self.u[0], -sign * self.t * self.u[1]];
        g
    }
}

/// Evaluates face `fg` at pixel `p`; `None` if the pixel lies outside and
/// farther than `reach` from the triangle.
#[inline]
fn hit(fg: &FaceGeom, p: [f64; 2], reach: f64) -> Option<Hit> {
    let mut edge_fn = [0.0; 3];
    let mut best = (f64::INFINITY, 0usize, 0.0, [0.0; 2]);
    for k in 0..3 {
        let e = fg.edges[k];
        let ap = sub(p, fg.corners[k]);
        edge_fn[k] = cross(e, ap);
        let t = ((ap[0] * e[0] + ap[1] * e[1]) * fg.inv_len2[k]).clamp(0.0, 1.0);
        let d = [ap[0] - t * e[0], ap[1] - t * e[1]];
        let d2 = d[0] * d[0] + d[1] * d[1];
        if d2 < best.0 {
            best = (d2, k, t, d);
        }
    }
    let covered = fg.area.abs() >= 1e-12 && edge_fn.iter().all(|c| c * fg.area >= 0.0);
    if !covered && best.0 > reach * reach {
        return None;
    }
    let dist = best.0.sqrt();
    let u = if dist > 0.0 { [best.3[0] / dist, best.3[1] / dist] } else { [0.0; 2] };
    // barycentric of corner k is the edge function of the opposite edge
    let bary = covered.then(|| [edge_fn[1] / fg.area, edge_fn[2] / fg.area, edge_fn[0] / fg.area]);
    Some(Hit { d: if covered { dist } else { -dist }, edge: best.1, t: best.2, u, bary })
}

/// Barycentric coordinates of `p` if it lies inside the (non-degenerate)
/// triangle.
#[inline]
fn inside(p: [f64; 2], tri: &[[f64; 2]; 3]) -> Option<[f64; 3]> {
    let area = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
    if area.abs() < 1e-12 {
        return None;
    }
    let wa = cross(sub(tri[1], p), sub(tri[2], p)) / area;
    let wb = cross(sub(tri[2], p), sub(tri[0], p)) / area;
    let wc = cross(sub(tri[0], p), sub(tri[1], p)) / area;
    (wa >= 0.0 && wb >= 0.0 && wc >= 0.0).then_some([wa, wb, wc])
}

struct Prepared {
    faces: Vec<FaceGeom>,
    /// Faces per tile in ascending index order.
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    bbox: Vec<[f64; 4]>,
    reach: f64,
}

fn prepare(projected: &[[f64; 2]], mesh: &TriMesh, s: &RasterSettings) -> Prepared {
    let (w, h) = (s.width as f64, s.height as f64);
    let screen: Vec<[f64; 2]> =
        projected.iter().map(|p| [(p[0] + 1.0) * 0.5 * w, (1.0 - p[1]) * 0.5 * h]).collect();
    let pad = s.cutoff * s.sigma_px();
    let tiles_x = s.width.div_ceil(TILE);
    let tiles_y = s.height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    let mut bbox = Vec::with_capacity(mesh.faces.len());
    let mut faces = Vec::with_capacity(mesh.faces.len());
    for (fi, f) in mesh.faces.iter().enumerate() {
        let pts = f.map(|i| screen[i]);
        faces.push(FaceGeom::new(pts));
        let x0 = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - pad;
        let x1 = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) + pad;
        let y0 = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - pad;
        let y1 = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) + pad;
        bbox.push([x0, x1, y0, y1]);
        // pixel centers c + 0.5 inside [x0, x1]
        let cx0 = (x0 - 0.5).ceil().max(0.0);
        let cx1 = (x1 - 0.5).floor().min(w - 1.0);
        let cy0 = (y0 - 0.5).ceil().max(0.0);
        let cy1 = (y1 - 0.5).floor().min(h - 1.0);
        if !(cx0 <= cx1 && cy0 <= cy1) {
            continue;
        }
        let (tx0, tx1) = (cx0 as usize / TILE, cx1 as usize / TILE);
        let (ty0, ty1) = (cy0 as usize / TILE, cy1 as usize / TILE);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(fi as u32);
            }
        }
    }
    Prepared { faces, tiles, tiles_x, bbox, reach: pad }
}

impl Prepared {
    /// Faces within reach of pixel `(x, y)`, in ascending index order.
    fn hits(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, Hit)> + '_ {
        let p = [x as f64 + 0.5, y as f64 + 0.5];
        self.tiles[(y / TILE) * self.tiles_x + x / TILE].iter().filter_map(move |&f| {
            let f = f as usize;
            let b = self.bbox[f];
            if p[0] < b[0] || p[0] > b[1] || p[1] < b[2] || p[1] > b[3] {
                return None;
            }
            hit(&self.faces[f], p, self.reach).map(|h| (f, h))
        })
    }
}

struct PixelOut {
    silhouette: f64,
    color: [f64; 3],
    depth: f64,
    face: Option<usize>,
}

fn shade_pixel(
    prep: &Prepared,
    mesh: &TriMesh,
    colors: &[[f64; 3]],
    s: &RasterSettings,
    x: usize,
    y: usize,
) -> PixelOut {
    let sig = s.sigma_px();
    let mut keep = 1.0;
    let mut nearest: Option<(f64, usize, [f64; 3])> = None;
    for (f, h) in prep.hits(x, y) {
        keep *= sigmoid(-h.d / sig);
        if let Some(w) = h.bary {
            let z: f64 = mesh.faces[f].iter().zip(&w).map(|(&i, wi)| wi * mesh.vertices[i].z).sum();
            if nearest.is_none_or(|(bz, _, _)| z > bz) {
                nearest = Some((z, f, w));
            }
        }
    }
    let (color, depth, face) = match nearest {
        Some((z, f, w)) => {
            let mut c = [0.0; 3];
            for (&vi, wi) in mesh.faces[f].iter().zip(&w) {
                for ch in 0..3 {
                    c[ch] += wi * colors[vi][ch];
                }
            }
            (c, -z, Some(f))
        }
        None => ([0.0; 3], f64::INFINITY, None),
    };
    PixelOut { silhouette: 1.0 - keep, color, depth, face }
}

/// Rasterizes a mesh with per-vertex colors.
///
/// Silhouette: `S(p) = 1 - Π_f (1 - sigmoid(d_f(p)/σ))` with `d_f` the signed
/// pixel distance to face `f` (positive inside). Color: barycentric
/// interpolation on the nearest face covering the pixel center; background
/// is black.
pub fn rasterize_soft(
    mesh: &TriMesh,
    projected: &[[f64; 2]],
    colors: &[[f64; 3]],
    settings: &RasterSettings,
) -> Result<RenderOut> {
    settings.validate()?;
    ensure(projected.len() == mesh.vertices.len() && colors.len() == mesh.vertices.len(), || {
        "projected points and colors must have one entry per vertex".into()
    })?;
    let (w, h) = (settings.width, settings.height);
    let prep = prepare(projected, mesh, settings);
    let rows: Vec<Vec<PixelOut>> = settings.exec.map(h, |y| {
        (0..w).map(|x| shade_pixel(&prep, mesh, colors, settings, x, y)).collect()
    });
    let mut out = RenderOut {
        color: ImagePlane::new(w, h),
        silhouette: SoftMask::new(w, h),
        depth: vec![f64::INFINITY; w * h],
        face_index: vec![None; w * h],
        landmarks: None,
    };
    for (y, row) in rows.into_iter().enumerate() {
        for (x, px) in row.into_iter().enumerate() {
            let i = y * w + x;
            out.silhouette.values[i] = px.silhouette;
            out.color.rgb[3 * i..3 * i + 3].copy_from_slice(&px.color);
            out.depth[i] = px.depth;
            out.face_index[i] = px.face;
        }
    }
    Ok(out)
}

/// Backward pass of [`rasterize_soft`].
///
/// Rows are processed in fixed blocks whose partial gradients are summed in
/// block order, so the result does not depend on the execution mode.
pub fn rasterize_soft_backward(
    mesh: &TriMesh,
    projected: &[[f64; 2]],
    colors: &[[f64; 3]],
    settings: &RasterSettings,
    grad_silhouette: Option<&[f64]>,
    grad_color: Option<&[f64]>,
) -> Result<RasterGrad> {
    settings.validate()?;
    let (w, h) = (settings.width, settings.height);
    if let Some(g) = grad_silhouette {
        ensure(g.len() == w * h, || "silhouette gradient has wrong size".into())?;
    }
    if let Some(g) = grad_color {
        ensure(g.len() == w * h * 3, || "color gradient has wrong size".into())?;
    }
    let n = mesh.vertices.len();
    let prep = prepare(projected, mesh, settings);
    let sig = settings.sigma_px();
    let blocks = h.div_ceil(TILE);

    let partials: Vec<(Vec<[f64; 2]>, Vec<[f64; 3]>)> = settings.exec.map(blocks, |b| {
        let mut g_screen = vec![[0.0; 2]; n];
        let mut g_colors = vec![[0.0; 3]; n];
        let mut keeps: Vec<f64> = Vec::new();
        let mut cands: Vec<(usize, Hit)> = Vec::new();
        let mut suffix: Vec<f64> = Vec::new();
        for y in b * TILE..((b + 1) * TILE).min(h) {
            for x in 0..w {
                let i = y * w + x;
                let gs = grad_silhouette.map_or(0.0, |g| g[i]);
                let gc = grad_color.map_or([0.0; 3], |g| [g[3 * i], g[3 * i + 1], g[3 * i + 2]]);
                if gs == 0.0 && gc == [0.0; 3] {
                    continue;
                }
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                cands.clear();
                keeps.clear();
                let mut nearest: Option<(f64, usize, [f64; 3])> = None;
                for (f, h) in prep.hits(x, y) {
                    keeps.push(sigmoid(-h.d / sig));
                    if let Some(wb) = h.bary {
                        let z: f64 = mesh.faces[f].iter().zip(&wb).map(|(&vi, wi)| wi * mesh.vertices[vi].z).sum();
                        if nearest.is_none_or(|(bz, _, _)| z > bz) {
                            nearest = Some((z, f, wb));
                        }
                    }
                    cands.push((f, h));
                }
                if gs != 0.0 {
                    // dS/dkeep_f = -Π_{g≠f} keep_g via prefix/suffix products
                    suffix.clear();
                    suffix.resize(keeps.len() + 1, 1.0);
                    for k in (0..keeps.len()).rev() {
                        suffix[k] = suffix[k + 1] * keeps[k];
                    }
                    let mut prefix = 1.0;
                    for (k, (f, h)) in cands.iter().enumerate() {
                        let others = prefix * suffix[k + 1];
                        prefix *= keeps[k];
                        let s_f = sigmoid(h.d / sig);
                        // keep = 1 - s_f; dS/dd = others · s_f (1 - s_f) / σ
                        let coef = gs * others * s_f * (1.0 - s_f) / sig;
                        if coef == 0.0 {
                            continue;
                        }
                        let gd = h.grad();
                        for (corner, &vi) in mesh.faces[*f].iter().enumerate() {
                            g_screen[vi][0] += coef * gd[corner][0];
                            g_screen[vi][1] += coef * gd[corner][1];
                        }
                    }
                }
                if let Some((_, f, wb)) = nearest.filter(|_| gc != [0.0; 3]) {
                    let face = mesh.faces[f];
                    let tri = prep.faces[f].corners;
                    let mut color = [0.0; 3];
                    for (k, &vi) in face.iter().enumerate() {
                        for ch in 0..3 {
                            color[ch] += wb[k] * colors[vi][ch];
                            g_colors[vi][ch] += wb[k] * gc[ch];
                        }
                    }
                    barycentric_backward(p, &tri, &face, colors, &color, gc, &mut g_screen);
                }
            }
        }
        (g_screen, g_colors)
    });

    let (wf, hf) = (w as f64, h as f64);
    let mut projected_grad = vec![[0.0; 2]; n];
    let mut colors_grad = vec![[0.0; 3]; n];
    for (gs, gc) in partials {
        for v in 0..n {
            // screen = ((x + 1) W/2, (1 - y) H/2)
            projected_grad[v][0] += gs[v][0] * 0.5 * wf;
            projected_grad[v][1] -= gs[v][1] * 0.5 * hf;
            for ch in 0..3 {
                colors_grad[v][ch] += gc[v][ch];
            }
        }
    }
    Ok(RasterGrad { projected: projected_grad, colors: colors_grad })
}

/// Gradient of an interpolated color w.r.t. the triangle corners in screen
/// space. Barycentrics are `E_k / A` with `E_k` sub-triangle areas and
/// `A = ΣE_k`.
fn barycentric_backward(
    p: [f64; 2],
    tri: &[[f64; 2]; 3],
    face: &[usize; 3],
    colors: &[[f64; 3]],
    color: &[f64; 3],
    gc: [f64; 3],
    g_screen: &mut [[f64; 2]],
) {
    let area = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
    let dot = |a: &[f64; 3]| a[0] * gc[0] + a[1] * gc[1] + a[2] * gc[2];
    let s_color = dot(color);
    for k in 0..3 {
        // E_k = cross(v_{k+1} - p, v_{k+2} - p)
        let (i1, i2) = ((k + 1) % 3, (k + 2) % 3);
        let u = sub(tri[i1], p);
        let w = sub(tri[i2], p);
        let coef = (dot(&colors[face[k]]) - s_color) / area;
        if coef == 0.0 {
            continue;
        }
        // d cross(u, w)/du = (w.y, -w.x); d/dw = (-u.y, u.x)
        g_screen[face[i1]][0] += coef * w[1];
        g_screen[face[i1]][1] -= coef * w[0];
        g_screen[face[i2]][0] -= coef * u[1];
        g_screen[face[i2]][1] += coef * u[0];
    }
}

/// Hard coverage of pixel centers by any projected triangle (point-in-triangle
/// test), for comparison with the soft silhouette.
pub fn hard_coverage(mesh: &TriMesh, projected: &[[f64; 2]], width: usize, height: usize) -> SoftMask {
    let (w, h) = (width as f64, height as f64);
    let screen: Vec<[f64; 2]> =
        projected.iter().map(|p| [(p[0] + 1.0) * 0.5 * w, (1.0 - p[1]) * 0.5 * h]).collect();
    let mut mask = SoftMask::new(width, height);
    for f in &mesh.faces {
        let tri = f.map(|i| screen[i]);
        let x0 = tri.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).max(0.0) as usize;
        let x1 = (tri.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(width);
        let y0 = tri.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).max(0.0) as usize;
        let y1 = (tri.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                if inside([x as f64 + 0.5, y as f64 + 0.5], &tri).is_some() {
                    mask.values[y * width + x] = 1.0;
                }
            }
        }
    }
    mask
}
