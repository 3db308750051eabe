//! Multi-scale square crops around the landmarks.

use serde::{Deserialize, Serialize};

use super::Observation;
use crate::error::{ensure, Result};
use crate::loss::Landmarks2D;
use crate::model::NUM_FACE_LANDMARKS;
use crate::render::{ImagePlane, SoftMask};

/// Expansion of the landmark box at the loosest level (whole head).
pub const LOOSE_EXPANSION: f64 = 1.8;
/// Expansion of the 68-point face box at the tightest level.
pub const TIGHT_EXPANSION: f64 = 1.1;

/// Square crop window in source pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    /// Top-left corner (pixels, origin at the top-left image corner).
    pub min: [f64; 2],
    pub size: f64,
    pub expansion: f64,
}

/// Maps normalized source coordinates to normalized crop coordinates,
/// per axis: `x' = scale·x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropAffine {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl CropAffine {
    fn for_box(b: &CropBox, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        CropAffine {
            scale: [w / b.size, h / b.size],
            offset: [(w - 2.0 * b.min[0]) / b.size - 1.0, 1.0 - (h - 2.0 * b.min[1]) / b.size],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.scale[0] * p[0] + self.offset[0], self.scale[1] * p[1] + self.offset[1]]
    }

    pub fn invert(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.offset[0]) / self.scale[0], (p[1] - self.offset[1]) / self.scale[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    /// 1 = loosest, `N_s` = tightest.
    pub level: usize,
    pub bbox: CropBox,
    pub affine: CropAffine,
    pub image: ImagePlane,
    pub landmarks: Landmarks2D,
}

fn to_pixels(p: [f64; 2], width: usize, height: usize) -> [f64; 2] {
    [(p[0] + 1.0) * width as f64 / 2.0, (1.0 - p[1]) * height as f64 / 2.0]
}

/// Center and side of the bounding box of the visible landmarks among the
/// first `count`.
fn landmark_box(lm: &Landmarks2D, count: usize, width: usize, height: usize) -> Result<([f64; 2], f64)> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut n = 0;
    for i in 0..count.min(lm.len()) {
        if !lm.visible[i] {
            continue;
        }
        let p = to_pixels(lm.points[i], width, height);
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
        n += 1;
    }
    ensure(n >= 2, || format!("cropping needs at least 2 visible landmarks among the first {count}"))?;
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    ensure(side > 0.0, || "landmarks collapse to a single point".into())?;
    Ok(([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0], side))
}

/// Crop windows for levels `1..=n_s`.
///
/// Level 1 is the box of all visible landmarks expanded by 1.8, level `n_s`
/// the box of the 68 face landmarks expanded by 1.1. Intermediate levels
/// interpolate center, box side and expansion linearly.
pub fn crop_boxes(landmarks: &Landmarks2D, width: usize, height: usize, n_s: usize) -> Result<Vec<CropBox>> {
    ensure(n_s >= 1, || "number of crop levels must be >= 1".into())?;
    landmarks.validate()?;
    let (c_loose, s_loose) = landmark_box(landmarks, landmarks.len(), width, height)?;
    let (c_tight, s_tight) = if n_s > 1 {
        landmark_box(landmarks, NUM_FACE_LANDMARKS, width, height)?
    } else {
        (c_loose, s_loose)
    };
    Ok((0..n_s)
        .map(|k| {
            let t = if n_s == 1 { 0.0 } else { k as f64 / (n_s - 1) as f64 };
            let lerp = |a: f64, b: f64| a + t * (b - a);
            let expansion = lerp(LOOSE_EXPANSION, TIGHT_EXPANSION);
            let size = lerp(s_loose, s_tight) * expansion;
            let center = [lerp(c_loose[0], c_tight[0]), lerp(c_loose[1], c_tight[1])];
            CropBox { min: [center[0] - size / 2.0, center[1] - size / 2.0], size, expansion }
        })
        .collect())
}

/// Bilinear sample at continuous pixel position, replicating edge pixels.
fn sample<const C: usize>(data: &[f64], width: usize, height: usize, px: f64, py: f64) -> [f64; C] {
    let fx = px - 0.5;
    let fy = py - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let cx = |x: f64| x.clamp(0.0, (width - 1) as f64) as usize;
    let cy = |y: f64| y.clamp(0.0, (height - 1) as f64) as usize;
    let (xa, xb, ya, yb) = (cx(x0), cx(x0 + 1.0), cy(y0), cy(y0 + 1.0));
    let mut out = [0.0; C];
    for (c, o) in out.iter_mut().enumerate() {
        let at = |x: usize, y: usize| data[(y * width + x) * C + c];
        let top = at(xa, ya) * (1.0 - tx) + at(xb, ya) * tx;
        let bottom = at(xa, yb) * (1.0 - tx) + at(xb, yb) * tx;
        *o = top * (1.0 - ty) + bottom * ty;
    }
    out
}

fn resample<const C: usize>(data: &[f64], width: usize, height: usize, b: &CropBox, out: usize) -> Vec<f64> {
    let step = b.size / out as f64;
    let mut res = Vec::with_capacity(out * out * C);
    for v in 0..out {
        let py = b.min[1] + (v as f64 + 0.5) * step;
        for u in 0..out {
            let px = b.min[0] + (u as f64 + 0.5) * step;
            res.extend_from_slice(&sample::<C>(data, width, height, px, py));
        }
    }
    res
}

pub fn crop_image(image: &ImagePlane, b: &CropBox, out: usize) -> ImagePlane {
    let rgb = resample::<3>(&image.rgb, image.width, image.height, b, out);
    ImagePlane { width: out, height: out, rgb }
}

pub fn crop_mask(mask: &SoftMask, b: &CropBox, out: usize) -> SoftMask {
    let values = resample::<1>(&mask.values, mask.width, mask.height, b, out);
    SoftMask { width: out, height: out, values }
}

/// Landmarks mapped through `affine`; points leaving `[-1, 1]²` become
/// invisible.
pub fn crop_landmarks(lm: &Landmarks2D, affine: &CropAffine) -> Landmarks2D {
    let mut out = lm.clone();
    for (i, p) in lm.points.iter().enumerate() {
        let q = affine.apply(*p);
        out.points[i] = q;
        if q.iter().any(|v| v.abs() > 1.0) {
            out.visible[i] = false;
        }
    }
    out
}

/// Square crops at levels `1..=n_s`, each resampled to `out_size²`.
pub fn generate_crops(image: &ImagePlane, landmarks: &Landmarks2D, n_s: usize, out_size: usize) -> Result<Vec<Crop>> {
    image.validate()?;
    ensure(out_size >= 1, || "crop output size must be >= 1".into())?;
    let boxes = crop_boxes(landmarks, image.width, image.height, n_s)?;
    Ok(boxes
        .into_iter()
        .enumerate()
        .map(|(k, bbox)| {
            let affine = CropAffine::for_box(&bbox, image.width, image.height);
            Crop {
                level: k + 1,
                bbox,
                affine,
                image: crop_image(image, &bbox, out_size),
                landmarks: crop_landmarks(landmarks, &affine),
            }
        })
        .collect())
}

/// Crops an observation (image, masks and landmarks) at every level.
pub fn crop_observation(obs: &Observation, n_s: usize, out_size: usize) -> Result<Vec<Observation>> {
    obs.validate()?;
    let crops = generate_crops(&obs.image, &obs.landmarks, n_s, out_size)?;
    Ok(crops
        .into_iter()
        .map(|c| Observation {
            skin_mask: crop_mask(&obs.skin_mask, &c.bbox, out_size),
            bald_skin_mask: obs.bald_skin_mask.as_ref().map(|m| crop_mask(m, &c.bbox, out_size)),
            image: c.image,
            landmarks: c.landmarks,
            crop_level: c.level,
            pose_index: obs.pose_index,
            subject: obs.subject.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NUM_LANDMARKS;

    /// 68 face points on a square of half-side 0.1 (normalized), three scalp
    /// points raising the top to 0.3.
    fn centered_landmarks() -> Landmarks2D {
        let mut pts = Vec::with_capacity(NUM_LANDMARKS);
        for i in 0..NUM_FACE_LANDMARKS {
            let t = i as f64 / (NUM_FACE_LANDMARKS - 1) as f64;
            pts.push(match i % 4 {
                0 => [-0.1, -0.1 + 0.2 * t],
                1 => [0.1, -0.1 + 0.2 * t],
                2 => [-0.1 + 0.2 * t, -0.1],
                _ => [-0.1 + 0.2 * t, 0.1],
            });
        }
        pts[0] = [-0.1, -0.1];
        pts[1] = [0.1, 0.1];
        pts.extend([[0.0, 0.3], [-0.05, 0.25], [0.05, 0.25]]);
        Landmarks2D::new(pts)
    }

    #[test]
    fn single_level_is_loose_crop() {
        let lm = centered_landmarks();
        let boxes = crop_boxes(&lm, 200, 200, 1).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].expansion, 1.8);
    }

    #[test]
    fn three_levels_by_hand() {
        // 200x200 image: face box x in [90,110], y in [90,110] px; all 71
        // points span x [90,110], y [70,110] px -> side 40, center (100,90).
        let lm = centered_landmarks();
        let boxes = crop_boxes(&lm, 200, 200, 3).unwrap();
        let expect = [
            (1.8, 40.0 * 1.8, [100.0, 90.0]),
            (1.45, 30.0 * 1.45, [100.0, 95.0]),
            (1.1, 20.0 * 1.1, [100.0, 100.0]),
        ];
        for (b, (f, size, c)) in boxes.iter().zip(expect) {
            assert!((b.expansion - f).abs() < 1e-12);
            assert!((b.size - size).abs() < 1e-9, "{} vs {size}", b.size);
            assert!((b.min[0] - (c[0] - size / 2.0)).abs() < 1e-9);
            assert!((b.min[1] - (c[1] - size / 2.0)).abs() < 1e-9);
        }
        // nested: each box inside the previous one
        for w in boxes.windows(2) {
            assert!(w[1].min[0] >= w[0].min[0] && w[1].min[1] >= w[0].min[1]);
            assert!(w[1].min[0] + w[1].size <= w[0].min[0] + w[0].size);
        }
    }

    #[test]
    fn landmarks_round_trip_through_affine() {
        let lm = centered_landmarks();
        let img = ImagePlane::filled(160, 120, [0.3, 0.4, 0.5]);
        let crops = generate_crops(&img, &lm, 3, 32).unwrap();
        for c in &crops {
            for (orig, mapped) in lm.points.iter().zip(&c.landmarks.points) {
                let back = c.affine.invert(*mapped);
                assert!((back[0] - orig[0]).abs() < 1e-9 && (back[1] - orig[1]).abs() < 1e-9);
            }
        }
        // scalp points fall outside the tightest crop
        assert!(!crops[2].landmarks.visible[NUM_LANDMARKS - 1]);
        assert!(crops[0].landmarks.visible.iter().all(|v| *v));
    }

    #[test]
    fn out_of_bounds_crops_replicate_edges() {
        let mut img = ImagePlane::filled(10, 10, [0.0; 3]);
        for y in 0..10 {
            img.set_pixel(0, y, [1.0; 3]);
        }
        let b = CropBox { min: [-10.0, 0.0], size: 10.0, expansion: 1.0 };
        let c = crop_image(&img, &b, 10);
        assert_eq!(c.pixel(0, 5), [1.0; 3]);
        assert_eq!(c.pixel(9, 5), [1.0; 3]);
    }

    #[test]
    fn identity_box_reproduces_image() {
        let rgb: Vec<f64> = (0..8 * 8 * 3).map(|i| (i % 7) as f64 / 7.0).collect();
        let img = ImagePlane::from_rgb(8, 8, rgb).unwrap();
        let b = CropBox { min: [0.0, 0.0], size: 8.0, expansion: 1.0 };
        assert_eq!(crop_image(&img, &b, 8), img);
    }
}
