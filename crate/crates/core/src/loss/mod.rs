//! Reconstruction and inpainting losses with analytic gradients.
//!
//! Reductions are ordered row-major sums, so values are reproducible
//! bit-for-bit.

mod image_losses;
mod inpaint;
mod params_losses;
mod providers;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::NUM_LANDMARKS;

pub use image_losses::{dice_loss, dice_loss_grad, photometric_loss, photometric_loss_grad, DiceGrad, PhotometricGrad};
pub use inpaint::{
    adversarial_value, composite_valid, edge_loss, edge_loss_grad, generator_adversarial_loss, hole_valid_losses,
    perceptual_loss, perceptual_loss_grad, sobel_magnitude,
};
pub use params_losses::{encoder_loss, encoder_loss_grad, regularization, regularization_grad};
pub use providers::{
    DownsampleEmbedder, EmbeddingProvider, EmbeddingVector, FeatureLayer, FeatureMaps, FeatureProvider,
    PoolPyramidFeatures,
};

/// Ground-truth 2D landmarks in normalized image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks2D {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub visible: Vec<bool>,
}

impl Landmarks2D {
    /// All landmarks visible with unit weight.
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        let n = points.len();
        Landmarks2D { points, weights: vec![1.0; n], visible: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.weights.len() == self.len() && self.visible.len() == self.len(), || {
            "landmark points, weights and visibility differ in length".into()
        })?;
        ensure(self.weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "landmark weights must be finite and >= 0".into()
        })
    }

    pub fn validate_full(&self) -> Result<()> {
        self.validate()?;
        ensure(self.len() == NUM_LANDMARKS, || format!("expected {NUM_LANDMARKS} landmarks, got {}", self.len()))
    }
}

/// How image losses reduce over pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    /// Sum divided by the pixel count (H·W).
    #[default]
    Mean,
}

/// Term weights for the reconstruction objective and the inpainting terms.
///
/// None of these values come with a published setting; the defaults were
/// tuned on synthetic data and are echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub landmark: f64,
    pub photometric: f64,
    pub identity: f64,
    pub scale: f64,
    pub dice: f64,
    pub shape_consistency: f64,
    pub encoder: f64,
    pub regularization: f64,
    pub hole: f64,
    pub valid: f64,
    pub adversarial: f64,
    pub perceptual: f64,
    pub edge: f64,
    /// Dice smoothing; `None` means `1e-6 × pixel count`.
    pub dice_epsilon: Option<f64>,
    pub reduction: Reduction,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            landmark: 1.0,
            photometric: 2.0,
            identity: 0.2,
            scale: 1.0,
            dice: 2.0,
            shape_consistency: 1.0,
            encoder: 0.0,
            regularization: 1e-3,
            hole: 6.0,
            valid: 1.0,
            adversarial: 0.1,
            perceptual: 0.1,
            edge: 0.1,
            dice_epsilon: None,
            reduction: Reduction::Mean,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("landmark", self.landmark),
            ("photometric", self.photometric),
            ("identity", self.identity),
            ("scale", self.scale),
            ("dice", self.dice),
            ("shape_consistency", self.shape_consistency),
            ("encoder", self.encoder),
            ("regularization", self.regularization),
            ("hole", self.hole),
            ("valid", self.valid),
            ("adversarial", self.adversarial),
            ("perceptual", self.perceptual),
            ("edge", self.edge),
        ];
        for (name, w) in all {
            ensure(w.is_finite() && w >= 0.0, || format!("weights.{name} must be finite and >= 0, got {w}"))?;
        }
        if let Some(e) = self.dice_epsilon {
            ensure(e > 0.0 && e.is_finite(), || format!("weights.dice_epsilon must be > 0, got {e}"))?;
        }
        Ok(())
    }

    pub fn dice_epsilon_for(&self, pixels: usize) -> f64 {
        self.dice_epsilon.unwrap_or(1e-6 * pixels as f64)
    }
}

/// Weighted L1 landmark distance over visible landmarks.
pub fn landmark_loss(gt: &Landmarks2D, proj: &[[f64; 2]]) -> Result<f64> {
    landmark_loss_grad(gt, proj).map(|(v, _)| v)
}

/// [`landmark_loss`] and its gradient w.r.t. `proj` (zero at kinks).
pub fn landmark_loss_grad(gt: &Landmarks2D, proj: &[[f64; 2]]) -> Result<(f64, Vec<[f64; 2]>)> {
    gt.validate()?;
    ensure(proj.len() == gt.len(), || {
        format!("{} projected landmarks for {} ground-truth landmarks", proj.len(), gt.len())
    })?;
    if !gt.visible.iter().any(|v| *v) {
        return Err(Error::contract("landmark loss is undefined when every landmark is invisible"));
    }
    let mut total = 0.0;
    let mut grad = vec![[0.0; 2]; proj.len()];
    for i in 0..proj.len() {
        if !gt.visible[i] {
            continue;
        }
        let w = gt.weights[i];
        for c in 0..2 {
            let d = proj[i][c] - gt.points[i][c];
            total += w * d.abs();
            grad[i][c] = w * sign0(d);
        }
    }
    Ok((total, grad))
}

/// Identity loss `1 - cos(a, b)`.
pub fn identity_loss(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    identity_loss_grad(a, b).map(|(v, _, _)| v)
}

/// [`identity_loss`] with gradients w.r.t. `a` and `b`.
pub fn identity_loss_grad(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    ensure(a.values.len() == b.values.len(), || {
        format!("embedding dimensions differ: {} vs {}", a.values.len(), b.values.len())
    })?;
    let na = norm(&a.values);
    let nb = norm(&b.values);
    ensure(na > 0.0 && nb > 0.0, || "identity loss needs nonzero embeddings".into())?;
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    // d cos/da = b/(|a||b|) - cos·a/|a|²
    let ga = a.values.iter().zip(&b.values).map(|(x, y)| -(y / (na * nb) - cos * x / (na * na))).collect();
    let gb = a.values.iter().zip(&b.values).map(|(x, y)| -(x / (na * nb) - cos * y / (nb * nb))).collect();
    Ok((1.0 - cos, ga, gb))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sign with `sign0(0) = 0` (the subgradient choice used throughout).
#[inline]
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
