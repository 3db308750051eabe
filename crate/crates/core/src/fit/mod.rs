//! Analysis-by-synthesis fitting of head parameters to observations.
//!
//! Every observation of a grid (poses × crop levels) gets its own parameter
//! vector; shape can be shared across the grid. The objective combines the
//! per-observation reconstruction terms with the scale-consistency shuffle,
//! the dice term against the hair-free skin mask and, optionally, a second
//! hair-free parameter set per observation.

mod crops;
mod objective;
mod optimize;
mod synth_obs;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::exec::ExecMode;
use crate::loss::{Landmarks2D, LossWeights};
use crate::model::{HeadParams, ModelDims};
use crate::render::{ImagePlane, SoftMask};

pub use crops::{
    crop_boxes, crop_image, crop_landmarks, crop_mask, crop_observation, generate_crops, Crop, CropAffine, CropBox,
    LOOSE_EXPANSION, TIGHT_EXPANSION,
};
pub use objective::{
    dice_consistency_terms, scale_consistency_loss, scale_consistency_loss_grad, FitState, LossTerms, Objective,
};
pub use optimize::{fit, initial_params};
pub use synth_obs::{render_observation, Occlusion};

/// One image of a subject with its masks and 2D landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub image: ImagePlane,
    pub skin_mask: SoftMask,
    /// Skin mask of the hair-removed image; required by the dice term.
    pub bald_skin_mask: Option<SoftMask>,
    pub landmarks: Landmarks2D,
    /// 1-based crop level (1 = loosest).
    pub crop_level: usize,
    /// 1-based pose index.
    pub pose_index: usize,
    pub subject: String,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        self.image.validate()?;
        self.skin_mask.validate()?;
        ensure(self.skin_mask.matches_image(&self.image), || "skin mask size differs from image".into())?;
        if let Some(m) = &self.bald_skin_mask {
            m.validate()?;
            ensure(m.matches_image(&self.image), || "bald skin mask size differs from image".into())?;
        }
        self.landmarks.validate_full()
    }
}

/// Observations of one subject indexed by (pose, crop level).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    pub n_poses: usize,
    pub n_scales: usize,
    /// Sorted by (pose_index, crop_level).
    pub cells: Vec<Observation>,
    pub shared_shape: bool,
}

impl ObservationGrid {
    /// Builds a grid; cells may be missing unless consistency terms are used.
    pub fn new(n_poses: usize, n_scales: usize, mut cells: Vec<Observation>, shared_shape: bool) -> Result<Self> {
        ensure(n_poses >= 1 && n_scales >= 1, || "grid needs at least one pose and one crop level".into())?;
        ensure(!cells.is_empty(), || "grid has no observations".into())?;
        for (n, o) in cells.iter().enumerate() {
            o.validate().map_err(|e| crate::Error::contract(format!("observation {n}: {e}")))?;
            ensure((1..=n_poses).contains(&o.pose_index), || {
                format!("observation {n}: pose_index {} outside 1..={n_poses}", o.pose_index)
            })?;
            ensure((1..=n_scales).contains(&o.crop_level), || {
                format!("observation {n}: crop_level {} outside 1..={n_scales}", o.crop_level)
            })?;
        }
        cells.sort_by_key(|o| (o.pose_index, o.crop_level));
        for w in cells.windows(2) {
            ensure((w[0].pose_index, w[0].crop_level) != (w[1].pose_index, w[1].crop_level), || {
                format!("duplicate observation for pose {} crop level {}", w[0].pose_index, w[0].crop_level)
            })?;
        }
        Ok(ObservationGrid { n_poses, n_scales, cells, shared_shape })
    }

    /// A 1×1 grid.
    pub fn single(obs: Observation) -> Result<Self> {
        let mut obs = obs;
        obs.pose_index = 1;
        obs.crop_level = 1;
        ObservationGrid::new(1, 1, vec![obs], true)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.n_poses * self.n_scales
    }

    pub fn require_complete(&self) -> Result<()> {
        ensure(self.is_complete(), || {
            format!(
                "grid is incomplete: {} of {}x{} cells present",
                self.cells.len(),
                self.n_poses,
                self.n_scales
            )
        })
    }
}

/// How shape vectors are swapped between cells in the scale term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleStrategy {
    Identity,
    /// One seeded uniform derangement, drawn once per fit.
    #[default]
    Derangement,
    /// A fresh seeded derangement every iteration.
    DerangementPerIteration,
}

/// Per-group learning-rate multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupRates {
    pub shape: f64,
    pub expression: f64,
    pub pose: f64,
    pub albedo: f64,
    /// Relative to the initial camera scale of each observation.
    pub camera_scale: f64,
    pub camera_shift: f64,
    pub light: f64,
}

impl Default for GroupRates {
    fn default() -> Self {
        GroupRates {
            shape: 1.0,
            expression: 1.0,
            pose: 0.05,
            albedo: 0.1,
            camera_scale: 0.02,
            camera_shift: 0.02,
            light: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub weights: LossWeights,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Multiplicative step decay per iteration.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub rates: GroupRates,
    /// Rasterizer softness as a fraction of the render width.
    pub sigma: f64,
    /// Square render resolution; observations are resampled to it. `None`
    /// renders at each observation's own size.
    pub render_size: Option<usize>,
    pub seed: u64,
    pub shuffle: ShuffleStrategy,
    /// Halve rejected steps (up to 20 times) so the loss never increases.
    pub safeguard: bool,
    /// Fit a second, hair-free parameter set per observation.
    pub dual_bald: bool,
    /// Stop once the relative loss decrease stays below this for
    /// `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    pub exec: ExecMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weights: LossWeights::default(),
            iterations: 500,
            learning_rate: 0.05,
            decay: 0.999,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            rates: GroupRates::default(),
            sigma: 0.004,
            render_size: None,
            seed: 0,
            shuffle: ShuffleStrategy::default(),
            safeguard: true,
            dual_bald: false,
            tolerance: 1e-7,
            patience: 25,
            exec: ExecMode::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let positive = [
            ("learning_rate", self.learning_rate),
            ("decay", self.decay),
            ("adam_epsilon", self.adam_epsilon),
            ("sigma", self.sigma),
        ];
        for (name, v) in positive {
            ensure(v > 0.0 && v.is_finite(), || format!("{name} must be > 0, got {v}"))?;
        }
        ensure(self.decay <= 1.0, || format!("decay must be <= 1, got {}", self.decay))?;
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            ensure((0.0..1.0).contains(&v), || format!("{name} must lie in [0, 1), got {v}"))?;
        }
        let r = &self.rates;
        for (name, v) in [
            ("rates.shape", r.shape),
            ("rates.expression", r.expression),
            ("rates.pose", r.pose),
            ("rates.albedo", r.albedo),
            ("rates.camera_scale", r.camera_scale),
            ("rates.camera_shift", r.camera_shift),
            ("rates.light", r.light),
        ] {
            ensure(v >= 0.0 && v.is_finite(), || format!("{name} must be >= 0, got {v}"))?;
        }
        ensure(self.tolerance >= 0.0, || "tolerance must be >= 0".into())?;
        if let Some(n) = self.render_size {
            ensure(n >= 8, || format!("render_size must be >= 8, got {n}"))?;
        }
        Ok(())
    }
}

/// Seeded uniform derangement of `0..n` (identity when `n < 2`).
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    if n < 2 {
        return p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        p.shuffle(&mut rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

/// Fitted parameters of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub pose_index: usize,
    pub crop_level: usize,
    pub subject: String,
    /// `beta` is empty when shape is shared; see [`FitReport::shape`].
    pub params: HeadParams,
    /// Hair-free parameter set when dual fitting is enabled.
    pub bald_params: Option<HeadParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub iteration: usize,
    pub terms: LossTerms,
    pub total: f64,
}

/// Coordinate conventions the parameters are expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub camera: String,
    pub image: String,
    pub lighting: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            camera: "weak perspective: p = s*(X, Y) + (tx, ty); viewer on +z".into(),
            image: "normalized [-1, 1], x right, y up; pixel centers at +0.5".into(),
            lighting: "9-term unnormalized real SH [1, y, z, x, xy, yz, 3z^2-1, xz, x^2-y^2], light[3k + channel]"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dims: ModelDims,
    pub cells: Vec<CellFit>,
    /// The single shape vector when shape is shared.
    pub shape: Option<Vec<f64>>,
    pub trajectory: Vec<TrajectoryEntry>,
    pub iterations_run: usize,
    pub rejected_steps: usize,
    /// Candidate steps evaluated, including halved retries.
    pub trial_steps: usize,
    pub converged: bool,
    /// Not serialized, so saved reports of identical runs are identical.
    #[serde(skip)]
    pub wall_clock_s: f64,
    pub shuffle: Vec<usize>,
    pub config: FitConfig,
    pub conventions: Conventions,
}

impl FitReport {
    /// Full parameters of cell `i`, with the shared shape filled in.
    pub fn cell_params(&self, i: usize) -> HeadParams {
        let mut p = self.cells[i].params.clone();
        if let Some(shape) = &self.shape {
            p.beta = shape.clone();
        }
        p
    }

    pub fn initial_total(&self) -> f64 {
        self.trajectory.first().map_or(f64::NAN, |t| t.total)
    }

    pub fn final_total(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |t| t.total)
    }

    /// Rows `(iteration, term, value)` for every recorded term and the total.
    pub fn trajectory_rows(&self) -> Vec<(usize, String, f64)> {
        let mut rows = Vec::new();
        for t in &self.trajectory {
            for (name, v) in t.terms.named() {
                rows.push((t.iteration, name.to_string(), v));
            }
            rows.push((t.iteration, "total".to_string(), t.total));
        }
        rows
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.trajectory.len() <= self.config.iterations + 1, || {
            format!("trajectory has {} entries for a budget of {}", self.trajectory.len(), self.config.iterations)
        })?;
        if self.shape.is_some() {
            ensure(self.cells.iter().all(|c| c.params.beta.is_empty()), || {
                "shared-shape report stores per-cell shape vectors".into()
            })?;
        }
        // per-iteration shuffles change the objective between entries
        if self.config.safeguard && self.config.shuffle != ShuffleStrategy::DerangementPerIteration {
            for w in self.trajectory.windows(2) {
                ensure(w[1].total <= w[0].total, || {
                    format!("loss increased at iteration {}", w[1].iteration)
                })?;
            }
        }
        Ok(())
    }

    /// Per-term values at the last iteration.
    pub fn final_terms(&self) -> BTreeMap<String, f64> {
        self.trajectory
            .last()
            .map(|t| t.terms.named().into_iter().map(|(k, v)| (k.to_string(), v)).collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derangements_have_no_fixed_points() {
        for n in 2..10 {
            for seed in 0..20 {
                let p = derangement(n, seed);
                let mut sorted = p.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..n).collect::<Vec<_>>());
                assert!(p.iter().enumerate().all(|(i, &j)| i != j));
            }
        }
        assert_eq!(derangement(1, 3), vec![0]);
        assert_eq!(derangement(5, 9), derangement(5, 9));
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let c = FitConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<FitConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<FitConfig>(r#"{"iterationz": 3}"#).is_err());
        let bad = FitConfig { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
