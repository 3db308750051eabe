//! Inpainting objective terms: hole/valid L1, adversarial value, perceptual
//! distance, Sobel edge distance and valid-pixel compositing.

use super::providers::FeatureMaps;
use super::sign0;
use crate::error::{ensure, Error, Result};
use crate::render::{ImagePlane, SoftMask};

fn check3(a: &ImagePlane, b: &ImagePlane, c: &ImagePlane, m: &SoftMask) -> Result<()> {
    ensure(a.same_shape(b) && a.same_shape(c) && m.matches_image(a), || {
        "inpainting inputs must share one image size".into()
    })
}

/// Two-stage L1 losses on hole pixels (`M = 1`) and valid pixels (`1 - M`).
///
/// Returns `(L_hole, L_valid)`, both plain sums over pixels and channels.
pub fn hole_valid_losses(
    coarse: &ImagePlane,
    refine: &ImagePlane,
    gt: &ImagePlane,
    mask: &SoftMask,
) -> Result<(f64, f64)> {
    check3(coarse, refine, gt, mask)?;
    let mut hole = 0.0;
    let mut valid = 0.0;
    for (p, &m) in mask.values.iter().enumerate() {
        for c in 0..3 {
            let i = 3 * p + c;
            let dr = (refine.rgb[i] - gt.rgb[i]).abs();
            let dc = (coarse.rgb[i] - gt.rgb[i]).abs();
            hole += m * dr + m * dc;
            valid += (1.0 - m) * dr + (1.0 - m) * dc;
        }
    }
    Ok((hole, valid))
}

const CLAMP: f64 = 1e-7;

fn mean_log(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    values.iter().map(|&d| f(d.clamp(CLAMP, 1.0 - CLAMP)).ln()).sum::<f64>() / values.len() as f64
}

/// `mean ln D(real) + mean ln(1 - D(fake))`, scores clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn adversarial_value(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::contract("adversarial value needs non-empty score lists"));
    }
    Ok(mean_log(d_real, |d| d) + mean_log(d_fake, |d| 1.0 - d))
}

/// The fake-score term `mean ln(1 - D(fake))`, which the generator minimizes
/// and the discriminator maximizes.
pub fn generator_adversarial_loss(d_fake: &[f64]) -> Result<f64> {
    if d_fake.is_empty() {
        return Err(Error::contract("adversarial loss needs a non-empty score list"));
    }
    Ok(mean_log(d_fake, |d| 1.0 - d))
}

/// `Σ_l mean |F_a[l] - F_b[l]|`.
pub fn perceptual_loss(a: &FeatureMaps, b: &FeatureMaps) -> Result<f64> {
    perceptual_loss_grad(a, b).map(|(v, _)| v)
}

/// Perceptual loss and its gradient w.r.t. `a`, laid out like `a`.
pub fn perceptual_loss_grad(a: &FeatureMaps, b: &FeatureMaps) -> Result<(f64, Vec<Vec<f64>>)> {
    ensure(a.layers.len() == b.layers.len(), || {
        format!("feature layer counts differ: {} vs {}", a.layers.len(), b.layers.len())
    })?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(a.layers.len());
    for (l, (la, lb)) in a.layers.iter().zip(&b.layers).enumerate() {
        ensure(la.shape() == lb.shape(), || format!("feature layer {l} shapes differ"))?;
        let n = la.data.len().max(1) as f64;
        let mut s = 0.0;
        let mut g = Vec::with_capacity(la.data.len());
        for (x, y) in la.data.iter().zip(&lb.data) {
            s += (x - y).abs();
            g.push(sign0(x - y) / n);
        }
        total += s / n;
        grads.push(g);
    }
    Ok((total, grads))
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

fn sobel_components(img: &ImagePlane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width as isize, img.height as isize);
    let mut gx = vec![0.0; img.rgb.len()];
    let mut gy = vec![0.0; img.rgb.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let at = |dx: isize, dy: isize| {
                    let xx = (x + dx).clamp(0, w - 1);
                    let yy = (y + dy).clamp(0, h - 1);
                    img.rgb[((yy * w + xx) * 3) as usize + c]
                };
                // written as differences so flat regions give exactly zero
                let sx = (at(1, -1) - at(-1, -1)) + 2.0 * (at(1, 0) - at(-1, 0)) + (at(1, 1) - at(-1, 1));
                let sy = (at(-1, 1) - at(-1, -1)) + 2.0 * (at(0, 1) - at(0, -1)) + (at(1, 1) - at(1, -1));
                let i = ((y * w + x) * 3) as usize + c;
                gx[i] = sx;
                gy[i] = sy;
            }
        }
    }
    (gx, gy)
}

/// Per-channel 3×3 Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(img: &ImagePlane) -> Result<Vec<f64>> {
    ensure(img.width >= 3 && img.height >= 3, || {
        format!("edge filtering needs at least 3x3 pixels, got {}x{}", img.width, img.height)
    })?;
    let (gx, gy) = sobel_components(img);
    Ok(gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).collect())
}

/// `‖E(a) - E(b)‖₁` with `E` the Sobel magnitude.
pub fn edge_loss(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    ensure(a.same_shape(b), || "edge loss inputs differ in size".into())?;
    let ea = sobel_magnitude(a)?;
    let eb = sobel_magnitude(b)?;
    Ok(ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).sum())
}

/// Edge loss with its gradient w.r.t. `a` (zero where the magnitude is 0).
pub fn edge_loss_grad(a: &ImagePlane, b: &ImagePlane) -> Result<(f64, Vec<f64>)> {
    let value = edge_loss(a, b)?;
    let (gx, gy) = sobel_components(a);
    let eb = sobel_magnitude(b)?;
    let (w, h) = (a.width as isize, a.height as isize);
    let mut grad = vec![0.0; a.rgb.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let i = ((y * w + x) * 3) as usize + c;
                let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let s = sign0(mag - eb[i]);
                let (dx, dy) = (s * gx[i] / mag, s * gy[i] / mag);
                for ky in 0..3 {
                    let yy = (y + ky as isize - 1).clamp(0, h - 1);
                    for kx in 0..3 {
                        let xx = (x + kx as isize - 1).clamp(0, w - 1);
                        grad[((yy * w + xx) * 3) as usize + c] += dx * SOBEL_X[ky][kx] + dy * SOBEL_Y[ky][kx];
                    }
                }
            }
        }
    }
    Ok((value, grad))
}

/// `M ⊙ refine + (1 - M) ⊙ gt`.
pub fn composite_valid(refine: &ImagePlane, gt: &ImagePlane, mask: &SoftMask) -> Result<ImagePlane> {
    ensure(refine.same_shape(gt) && mask.matches_image(refine), || {
        "composite inputs must share one image size".into()
    })?;
    let mut out = refine.clone();
    for (p, &m) in mask.values.iter().enumerate() {
        for c in 0..3 {
            let i = 3 * p + c;
            out.rgb[i] = m * refine.rgb[i] + (1.0 - m) * gt.rgb[i];
        }
    }
    Ok(out)
}
