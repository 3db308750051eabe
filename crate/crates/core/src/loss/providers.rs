//! Pluggable embedding and feature providers.
//!
//! The shipped implementations are deterministic, parameter-free stand-ins
//! for a face-recognition network and a perceptual feature network. Both are
//! linear in the image, so their vector-Jacobian products are exact.

use crate::render::ImagePlane;

/// Embedding vector tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider: String,
}

/// Maps an image to an identity embedding.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, image: &ImagePlane) -> EmbeddingVector;

    /// Gradient w.r.t. the image RGB buffer of `⟨grad, embed(image)⟩`.
    fn embed_vjp(&self, image: &ImagePlane, grad: &[f64]) -> Vec<f64>;
}

/// One feature tensor, `channels × height × width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureLayer {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMaps {
    pub layers: Vec<FeatureLayer>,
}

/// Maps an image to a stack of feature layers.
pub trait FeatureProvider: Send + Sync {
    fn id(&self) -> &str;

    fn features(&self, image: &ImagePlane) -> FeatureMaps;

    /// Gradient w.r.t. the image RGB buffer given per-layer gradients.
    fn features_vjp(&self, image: &ImagePlane, grad: &[Vec<f64>]) -> Vec<f64>;
}

/// Area-average pooling of an RGB image into a `cells × cells` grid; pixel
/// `(x, y)` falls into cell `(x·cells/W, y·cells/H)`.
fn pool(image: &ImagePlane, cells: usize) -> Vec<f64> {
    let mut sums = vec![0.0; cells * cells * 3];
    let counts = pool_counts(image, cells);
    for y in 0..image.height {
        let cy = y * cells / image.height;
        for x in 0..image.width {
            let cx = x * cells / image.width;
            for c in 0..3 {
                sums[(cy * cells + cx) * 3 + c] += image.rgb[(y * image.width + x) * 3 + c];
            }
        }
    }
    for (i, s) in sums.iter_mut().enumerate() {
        let n = counts[i / 3];
        if n > 0 {
            *s /= n as f64;
        }
    }
    sums
}

fn pool_counts(image: &ImagePlane, cells: usize) -> Vec<usize> {
    let mut counts = vec![0usize; cells * cells];
    for y in 0..image.height {
        for x in 0..image.width {
            counts[(y * cells / image.height) * cells + x * cells / image.width] += 1;
        }
    }
    counts
}

fn pool_vjp(image: &ImagePlane, cells: usize, grad: &[f64], out: &mut [f64]) {
    let counts = pool_counts(image, cells);
    for y in 0..image.height {
        let cy = y * cells / image.height;
        for x in 0..image.width {
            let cell = cy * cells + x * cells / image.width;
            let n = counts[cell] as f64;
            for c in 0..3 {
                out[(y * image.width + x) * 3 + c] += grad[cell * 3 + c] / n;
            }
        }
    }
}

/// Reference identity embedder: 8×8 area downsample, flattened (192 values).
#[derive(Debug, Clone, Copy, Default)]
pub struct DownsampleEmbedder;

impl EmbeddingProvider for DownsampleEmbedder {
    fn id(&self) -> &str {
        "downsample-8x8"
    }

    fn embed(&self, image: &ImagePlane) -> EmbeddingVector {
        EmbeddingVector { values: pool(image, 8), provider: self.id().into() }
    }

    fn embed_vjp(&self, image: &ImagePlane, grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; image.rgb.len()];
        pool_vjp(image, 8, grad, &mut out);
        out
    }
}

/// Reference feature provider: average-pool pyramid at 16×16, 8×8 and 4×4.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoolPyramidFeatures;

const PYRAMID: [usize; 3] = [16, 8, 4];

impl FeatureProvider for PoolPyramidFeatures {
    fn id(&self) -> &str {
        "pool-pyramid-16-8-4"
    }

    fn features(&self, image: &ImagePlane) -> FeatureMaps {
        let layers = PYRAMID
            .iter()
            .map(|&cells| {
                let hwc = pool(image, cells);
                // to channel-major
                let mut data = vec![0.0; hwc.len()];
                for p in 0..cells * cells {
                    for c in 0..3 {
                        data[c * cells * cells + p] = hwc[p * 3 + c];
                    }
                }
                FeatureLayer { channels: 3, height: cells, width: cells, data }
            })
            .collect();
        FeatureMaps { layers }
    }

    fn features_vjp(&self, image: &ImagePlane, grad: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; image.rgb.len()];
        for (&cells, g) in PYRAMID.iter().zip(grad) {
            let mut hwc = vec![0.0; g.len()];
            for p in 0..cells * cells {
                for c in 0..3 {
                    hwc[p * 3 + c] = g[c * cells * cells + p];
                }
            }
            pool_vjp(image, cells, &hwc, &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_embeds_to_constant() {
        let img = ImagePlane::filled(20, 13, [0.25, 0.5, 0.75]);
        let e = DownsampleEmbedder.embed(&img);
        assert_eq!(e.values.len(), 192);
        for cell in e.values.chunks(3) {
            assert!((cell[0] - 0.25).abs() < 1e-15 && (cell[2] - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn vjp_is_adjoint() {
        let img = ImagePlane::from_rgb(
            11,
            9,
            (0..11 * 9 * 3).map(|i| ((i as f64) * 0.123).sin().abs()).collect(),
        )
        .unwrap();
        let g: Vec<f64> = (0..192).map(|i| (i as f64 * 0.7).cos()).collect();
        let e = DownsampleEmbedder.embed(&img);
        let lhs: f64 = e.values.iter().zip(&g).map(|(a, b)| a * b).sum();
        let back = DownsampleEmbedder.embed_vjp(&img, &g);
        let rhs: f64 = back.iter().zip(&img.rgb).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let f = PoolPyramidFeatures.features(&img);
        let gl: Vec<Vec<f64>> =
            f.layers.iter().map(|l| (0..l.data.len()).map(|i| (i as f64 * 0.3).sin()).collect()).collect();
        let lhs: f64 = f.layers.iter().zip(&gl).flat_map(|(l, g)| l.data.iter().zip(g).map(|(a, b)| a * b)).sum();
        let back = PoolPyramidFeatures.features_vjp(&img, &gl);
        let rhs: f64 = back.iter().zip(&img.rgb).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
